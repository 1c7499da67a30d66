import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udm.dataset import DescriptionCorpus, FeatureTable, build_vocabulary
from udm.errors import InsufficientTestInstances, InvalidConfig, MissingCategoryManifest, UnknownCategory
from udm.evaluate import (
    EvalProtocol,
    LeakageAudit,
    NegativeConfig,
    ablate,
    emit_ablation,
    emit_report,
    emit_table1,
    evaluate_concept,
    f1,
    run_category_free_lr,
    run_predefined_category,
    run_udm,
    subsample_objects,
)
from udm.synth import SynthConfig, build
from udm.vae import VaeConfig

SMALL_VAE = dict(hidden_dim=48, latent_dim=8, epochs=60, batch_size=16)


@pytest.fixture(scope="module")
def clean():
    """Well separated, noise-free synthetic data."""
    res = build(SynthConfig(n_objects=32, n_classes=8, separation=8.0, annotation_noise=0.0,
                            image_noise=0.5, descriptions_per_object=2, seed=5))
    return res, build_vocabulary(res.corpus)


@pytest.fixture(scope="module")
def noisy():
    res = build(SynthConfig(n_objects=24, n_classes=8, D=40, seed=1))
    return res, build_vocabulary(res.corpus)


class TestF1:
    @pytest.mark.parametrize("counts, expected", [((10, 0, 0), 1.0), ((0, 5, 5), 0.0),
                                                  ((3, 1, 2), 6 / 9), ((0, 0, 0), 0.0)])
    def test_examples(self, counts, expected):
        assert f1(*counts) == pytest.approx(expected, abs=1e-15)

    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50))
    def test_range(self, tp, fp, fn):
        assert 0.0 <= f1(tp, fp, fn) <= 1.0


class TestEvaluateConcept:
    labels = np.array([True] * 5 + [False] * 8)
    X = np.arange(13, dtype=float)[:, None]

    def perfect(self, X):
        return self.labels[X[:, 0].astype(int)].astype(float)

    def test_perfect_stub(self):
        trials = evaluate_concept(self.perfect, self.X, self.labels, EvalProtocol(), np.random.default_rng(0))
        assert len(trials) == 10 and all(t.f1 == 1.0 for t in trials)
        for t in trials:
            assert 3 <= t.tp <= 4 and 4 <= t.tn <= 6 and t.fp == t.fn == 0

    def test_flipped_stub(self):
        trials = evaluate_concept(lambda X: 1.0 - self.perfect(X), self.X, self.labels, EvalProtocol(),
                                  np.random.default_rng(0))
        assert all(t.f1 == 0.0 for t in trials)

    def test_always_negative(self):
        trials = evaluate_concept(lambda X: np.zeros(len(X)), self.X, self.labels, EvalProtocol(),
                                  np.random.default_rng(0))
        assert all(t.tp == 0 and t.f1 == 0.0 for t in trials)

    def test_deterministic(self):
        def run():
            return evaluate_concept(lambda X: np.full(len(X), 0.7), self.X, self.labels,
                                    EvalProtocol(), np.random.default_rng(3))
        assert run() == run()

    def test_too_few_positives(self):
        labels = np.array([True, True] + [False] * 8)
        with pytest.raises(InsufficientTestInstances):
            evaluate_concept(lambda X: np.zeros(len(X)), np.zeros((10, 1)), labels, EvalProtocol(),
                             np.random.default_rng(0))

    def test_protocol_rejects(self):
        with pytest.raises(InvalidConfig):
            EvalProtocol(threshold=1.0)
        with pytest.raises(InvalidConfig):
            EvalProtocol(pos_per_trial=(4, 3))


class TestSubsample:
    def test_nested_prefixes(self):
        objs = [f"o{i}" for i in range(40)]
        small, big = subsample_objects(objs, 0.1, 3, 1), subsample_objects(objs, 0.5, 3, 1)
        assert len(small) == 4 and len(big) == 20 and set(small) <= set(big)
        assert subsample_objects(objs, 1.0, 3, 1) == sorted(objs)

    def test_rejects_zero(self):
        with pytest.raises(InvalidConfig):
            subsample_objects(["a"], 0.0, 0, 0)


class TestRuns:
    def test_udm_separable(self, clean):
        res, vocab = clean
        audit = LeakageAudit()
        report = run_udm(res.features, res.corpus, vocab, vae_cfg=VaeConfig(120, **SMALL_VAE),
                         concept_categories=res.concept_categories, audit=audit)
        assert report.macro_f1 >= 0.9
        assert report.min_f1 <= report.mean_f1 <= report.max_f1
        assert audit.violations() == []
        assert audit.stages_seen() == {"vae_train", "standardize", "classifier"}

    def test_lr_separable_and_reproducible(self, clean, tmp_path):
        res, vocab = clean
        a = run_category_free_lr(res.features, res.corpus, vocab)
        b = run_category_free_lr(res.features, res.corpus, vocab)
        assert a.macro_f1 >= 0.9
        pa, pb = emit_report(a, tmp_path / "a"), emit_report(b, tmp_path / "b")
        for name in pa:
            assert pa[name].read_bytes() == pb[name].read_bytes()

    def test_micro_matches_recount(self, noisy, tmp_path):
        res, vocab = noisy
        report = run_category_free_lr(res.features, res.corpus, vocab)
        emit_report(report, tmp_path)
        rows = list(csv.DictReader(open(tmp_path / "trials.csv", encoding="utf-8")))
        tp, fp, fn = (sum(int(r[k]) for r in rows) for k in ("tp", "fp", "fn"))
        assert report.micro_f1 == f1(tp, fp, fn)
        for r in rows:
            assert f"{f1(int(r['tp']), int(r['fp']), int(r['fn'])):.4f}" == r["f1"]

    def test_semantic_negatives_audited(self, noisy):
        res, vocab = noisy
        audit = LeakageAudit()
        neg = NegativeConfig(strategy="semantic_distant", epochs=5, m=8)
        run_category_free_lr(res.features, res.corpus, vocab, neg_cfg=neg, audit=audit)
        assert "pvdm" in audit.stages_seen() and audit.violations() == []

    def test_audit_flags_leak(self):
        audit = LeakageAudit()
        audit.test_objects[0] = frozenset({"a"})
        audit.record(0, "classifier", {"a", "b"})
        assert audit.violations() == [(0, "classifier", ["a"])]

    def test_concept_without_test_positives_is_skipped(self):
        rng = np.random.default_rng(0)
        objs = [f"o{i}" for i in range(8)]
        ids = [f"{o}_{j}" for o in objs for j in range(4)]
        X = rng.standard_normal((32, 3))
        feats = FeatureTable(tuple(ids), tuple(o for o in objs for _ in range(4)), X)
        pairs = [(o, "box") for o in objs] + [("o0", "rare"), ("o0", "rare")]
        corpus = DescriptionCorpus.from_pairs(pairs)
        vocab = build_vocabulary(corpus, min_count=1, stopwords=set())
        report = run_category_free_lr(feats, corpus, vocab, EvalProtocol(k=2))
        reasons = {(c, r.split(":")[0]) for c, _, _, r in report.skipped}
        assert ("rare", "InsufficientTestInstances") in reasons
        assert ("rare", "no positive training objects") in reasons
        assert "rare" not in {r.concept for r in report.concept_results}

    def test_zero_variance_features_do_not_crash(self, noisy):
        res, vocab = noisy
        flat = FeatureTable(res.features.instance_ids, res.features.object_ids,
                            np.zeros_like(res.features.X))
        report = run_category_free_lr(flat, res.corpus, vocab)
        assert all(0.0 <= r.mean_f1 <= 1.0 for r in report.concept_results)


class TestPredefined:
    def test_slice_classifiers(self, clean):
        res, vocab = clean
        cats = {"red": ["color", "shape"], "cube": "shape"}
        report = run_predefined_category(res.features, cats, res.corpus, vocab)
        by_pair = {(r.concept, r.category): r.mean_f1 for r in report.concept_results}
        assert set(by_pair) == {("red", "color"), ("red", "shape"), ("cube", "shape")}
        assert by_pair[("red", "color")] >= by_pair[("red", "shape")]

    def test_needs_manifest(self, clean):
        res, vocab = clean
        bare = res.features.with_slices(None)
        with pytest.raises(MissingCategoryManifest):
            run_predefined_category(bare, res.concept_categories, res.corpus, vocab)

    def test_unknown_category(self, clean):
        res, vocab = clean
        with pytest.raises(UnknownCategory):
            run_predefined_category(res.features, {"red": "texture"}, res.corpus, vocab)


class TestReports:
    def test_headers_only_when_empty(self, tmp_path):
        from udm.evaluate import EvaluationReport
        paths = emit_report(EvaluationReport("udm", [], [], [], {}), tmp_path)
        for name in ("summary", "per_concept", "probability_matrix", "trials", "skipped"):
            assert len(paths[name].read_text().splitlines()) == 1

    def test_layout(self, noisy, tmp_path):
        res, vocab = noisy
        report = run_category_free_lr(res.features, res.corpus, vocab,
                                      concept_categories=res.concept_categories)
        paths = emit_report(report, tmp_path)
        summary = list(csv.reader(open(paths["summary"])))
        assert summary[0] == ["statistic", "category_free_lr"]
        assert [r[0] for r in summary[1:]] == ["min", "mean", "max", "macro", "micro"]
        assert all(len(r[1].split(".")[1]) == 4 for r in summary[1:])
        per = list(csv.reader(open(paths["per_concept"])))
        assert per[0] == ["concept", "category", "support", "f1_fold0", "f1_fold1", "f1_fold2",
                          "f1_fold3", "mean_f1"]
        assert len(per) - 1 == len(report.concept_results)
        assert [r[0] for r in per[1:]] == sorted(r[0] for r in per[1:])
        matrix = list(csv.reader(open(paths["probability_matrix"])))
        assert matrix[0][:2] == ["concept", "category"] and len(matrix[0]) == 2 + 24

    def test_table1_and_ablation_files(self, noisy, tmp_path):
        res, vocab = noisy
        report = run_category_free_lr(res.features, res.corpus, vocab)
        t = emit_table1({"Dim 12": report, "Dim 50": report}, tmp_path / "t.csv")
        rows = list(csv.reader(open(t)))
        assert rows[0] == ["statistic", "Dim 12", "Dim 50"] and rows[2][0] == "mean"
        abl = ablate("category_free_lr", [0.5, 1.0], res.features, res.corpus, vocab)
        path = emit_ablation([abl], tmp_path)
        rows = list(csv.reader(open(path)))
        assert rows[0] == ["method", "50%", "100%"]

    def test_full_fraction_matches_plain_run(self, noisy):
        res, vocab = noisy
        abl = ablate("category_free_lr", [1.0], res.features, res.corpus, vocab)
        assert abl.mean_f1 == [run_category_free_lr(res.features, res.corpus, vocab).mean_f1]

    def test_ablation_rejects_bad_fraction(self, noisy):
        res, vocab = noisy
        with pytest.raises(InvalidConfig):
            ablate("category_free_lr", [0.0], res.features, res.corpus, vocab)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 4), st.integers(0, 6), st.integers(0, 4)), min_size=1, max_size=20))
def test_micro_pools_counts(trials):
    from udm.evaluate import EvaluationReport, Trial
    ts = [Trial("c", "", 0, i, tp, fp, fn, 0) for i, (tp, fp, fn) in enumerate(trials)]
    report = EvaluationReport("udm", [], ts, [], {})
    tp, fp, fn = (sum(t[i] for t in trials) for i in range(3))
    assert report.micro_f1 == f1(tp, fp, fn)
