import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udm.classifier import (
    ConceptClassifier,
    TrainSet,
    load_bundle,
    objective,
    predict,
    predict_proba,
    save_bundle,
    train_concept,
)
from udm.errors import DimensionMismatch, EmptyClass, InvalidConfig


def newton_optimum(X, y, l2, iters=50):
    """Reference minimizer of the same objective via Newton's method."""
    n, p = X.shape
    A = np.hstack([X, np.ones((n, 1))])
    theta = np.zeros(p + 1)
    reg = np.diag([l2] * p + [0.0])
    for _ in range(iters):
        s = A @ theta
        prob = 1 / (1 + np.exp(-s))
        grad = A.T @ (prob - y) / n + reg @ theta
        H = (A.T * (prob * (1 - prob))) @ A / n + reg
        theta -= np.linalg.solve(H, grad)
    return theta[:-1], theta[-1]


def random_set(rng, n_pos=6, n_neg=9, dim=3, shift=0.7):
    return TrainSet(rng.standard_normal((n_pos, dim)) + shift, rng.standard_normal((n_neg, dim)) - shift)


class TestTrainSet:
    def test_empty_classes(self):
        with pytest.raises(EmptyClass):
            TrainSet(np.zeros((0, 2)), np.ones((3, 2)))
        with pytest.raises(EmptyClass):
            TrainSet(np.ones((3, 2)), [])

    def test_width_mismatch(self):
        with pytest.raises(DimensionMismatch):
            TrainSet(np.ones((2, 2)), np.ones((2, 3)))


class TestTraining:
    def test_separable_pair(self):
        clf = train_concept(TrainSet([[1.0, 0.0]], [[-1.0, 0.0]]), l2=1e-3, epochs=500, lr=0.1)
        assert predict_proba(clf, [1.0, 0.0]) > 0.9
        assert predict_proba(clf, [-1.0, 0.0]) < 0.1
        assert clf.final_loss < clf.initial_loss == pytest.approx(np.log(2))

    @pytest.mark.parametrize("seed", range(3))
    def test_reaches_newton_optimum(self, seed):
        ts = random_set(np.random.default_rng(seed))
        X, y = ts.arrays()
        l2 = 0.5
        w_ref, b_ref = newton_optimum(X, y, l2)
        clf = train_concept(ts, l2=l2, epochs=3000, lr=0.5)
        np.testing.assert_allclose(clf.w, w_ref, atol=1e-6)
        assert clf.b == pytest.approx(b_ref, abs=1e-6)

    def test_two_starts_agree(self):
        ts = random_set(np.random.default_rng(7))
        a = train_concept(ts, l2=0.3, epochs=4000, lr=0.5)
        b = train_concept(ts, l2=0.3, epochs=4000, lr=0.5, init=(np.array([3.0, -2.0, 1.0]), -1.5))
        np.testing.assert_allclose(a.w, b.w, atol=1e-4)
        assert a.b == pytest.approx(b.b, abs=1e-4)

    def test_never_worse_than_start_with_huge_step(self):
        ts = random_set(np.random.default_rng(1), shift=30.0)
        clf = train_concept(ts, lr=1e6, epochs=20)
        assert clf.final_loss <= clf.initial_loss

    def test_rejects_negative_l2(self):
        with pytest.raises(InvalidConfig):
            train_concept(random_set(np.random.default_rng(0)), l2=-1.0)


class TestObjective:
    @pytest.mark.parametrize("seed", range(20))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.standard_normal((8, 4)) * 2
        y = (rng.random(8) < 0.5).astype(float)
        w, b, l2 = rng.standard_normal(4), float(rng.standard_normal()), 0.1
        _, gw, gb = objective(w, b, X, y, l2)
        h = 1e-6
        num_w = np.array([(objective(w + h * e, b, X, y, l2)[0] - objective(w - h * e, b, X, y, l2)[0]) / (2 * h)
                          for e in np.eye(4)])
        num_b = (objective(w, b + h, X, y, l2)[0] - objective(w, b - h, X, y, l2)[0]) / (2 * h)
        rel = np.abs(gw - num_w) / np.maximum(1e-8, np.abs(gw) + np.abs(num_w))
        assert rel.max() < 1e-6
        assert abs(gb - num_b) / max(1e-8, abs(gb) + abs(num_b)) < 1e-6

    def test_stable_for_large_scores(self):
        X = np.array([[1e4], [-1e4]])
        value, gw, _ = objective(np.array([1.0]), 0.0, X, np.array([0.0, 1.0]), 0.0)
        assert np.isfinite(value) and value == pytest.approx(1e4)
        assert np.isfinite(gw).all()


class TestPredict:
    def clf(self):
        return ConceptClassifier("red", np.array([1.0, 0.0]), 0.0)

    def test_boundary_is_negative(self):
        # probability exactly 0.5 is not above the threshold
        assert not predict(self.clf(), [0.0, 5.0])
        assert predict(self.clf(), [1e-9, 0.0])

    def test_rows(self):
        np.testing.assert_array_equal(predict(self.clf(), [[2.0, 0], [-2.0, 0]]), [True, False])

    @pytest.mark.parametrize("t", [0.0, 1.0, -0.1])
    def test_threshold_range(self, t):
        with pytest.raises(InvalidConfig):
            predict(self.clf(), [1.0, 0.0], threshold=t)

    def test_width_mismatch(self):
        with pytest.raises(DimensionMismatch):
            predict_proba(self.clf(), [1.0, 2.0, 3.0])

    @settings(max_examples=50)
    @given(st.lists(st.floats(-50, 50), min_size=2, max_size=2), st.floats(-5, 5))
    def test_probability_in_unit_interval(self, x, b):
        p = predict_proba(ConceptClassifier("c", np.array([0.3, -1.2]), b), x)
        assert 0.0 <= p <= 1.0


def test_bundle_round_trip(tmp_path):
    ts = random_set(np.random.default_rng(0))
    clfs = [train_concept(ts, concept=c, epochs=20) for c in ("red", "cube")]
    save_bundle(clfs, tmp_path / "b.json")
    back = load_bundle(tmp_path / "b.json")
    assert sorted(back) == ["cube", "red"]
    np.testing.assert_array_equal(back["red"].w, clfs[0].w)
    assert back["red"].b == clfs[0].b and back["red"].input_kind == "latent"
