"""Per-concept binary logistic regression."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, log_expit

from .errors import DegenerateDimension, DimensionMismatch, EmptyClass, InvalidConfig, IoError

BUNDLE_VERSION = "udm-clf-v1"


@dataclass(frozen=True)
class TrainSet:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        pos = np.asarray(self.positives, dtype=np.float64)
        neg = np.asarray(self.negatives, dtype=np.float64)
        if pos.size == 0 or len(pos) == 0:
            raise EmptyClass("no positive examples")
        if neg.size == 0 or len(neg) == 0:
            raise EmptyClass("no negative examples")
        pos, neg = np.atleast_2d(pos), np.atleast_2d(neg)
        if pos.shape[1] != neg.shape[1]:
            raise DimensionMismatch(f"positives have {pos.shape[1]} columns, negatives {neg.shape[1]}")
        if pos.shape[1] == 0:
            raise DegenerateDimension("zero-width inputs")
        object.__setattr__(self, "positives", pos)
        object.__setattr__(self, "negatives", neg)

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        X = np.vstack([self.positives, self.negatives])
        y = np.concatenate([np.ones(len(self.positives)), np.zeros(len(self.negatives))])
        return X, y


@dataclass(frozen=True)
class ConceptClassifier:
    concept: str
    w: np.ndarray
    b: float
    input_kind: str = "latent"
    l2: float = 0.0
    initial_loss: float = float("nan")
    final_loss: float = float("nan")

    @property
    def dim(self) -> int:
        return len(self.w)


def objective(w, b, X, y, l2):
    """Mean logistic loss plus ``l2 * ||w||^2 / 2``, and its gradient."""
    s = X @ w + b
    # -log sigma(s) for positives, -log sigma(-s) for negatives
    nll = -(y * log_expit(s) + (1.0 - y) * log_expit(-s))
    r = expit(s) - y
    n = len(y)
    value = float(nll.mean() + 0.5 * l2 * (w @ w))
    return value, X.T @ r / n + l2 * w, float(r.mean())


def train_concept(ts: TrainSet, l2: float = 1e-3, epochs: int = 500, lr: float = 0.1,
                  seed: int = 0, concept: str = "", input_kind: str = "latent",
                  init: tuple[np.ndarray, float] | None = None) -> ConceptClassifier:
    """Full-batch gradient descent from zero weights (or ``init``).

    The lowest-objective iterate is returned, so the final loss never exceeds
    the starting loss even if a fixed step overshoots.
    """
    if l2 < 0:
        raise InvalidConfig("l2 must be >= 0")
    X, y = ts.arrays()
    if init is None:
        w, b = np.zeros(X.shape[1]), 0.0
    else:
        w, b = np.array(init[0], dtype=np.float64), float(init[1])
    value, gw, gb = objective(w, b, X, y, l2)
    initial = value
    best = (value, w.copy(), b)
    for _ in range(epochs):
        w = w - lr * gw
        b = b - lr * gb
        value, gw, gb = objective(w, b, X, y, l2)
        if not np.isfinite(value):
            break
        if value <= best[0]:
            best = (value, w.copy(), b)
    return ConceptClassifier(concept, best[1], float(best[2]), input_kind, l2, initial, best[0])


def predict_proba(clf: ConceptClassifier, x) -> np.ndarray | float:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != clf.dim:
        raise DimensionMismatch(f"input has {x.shape[-1]} features, classifier expects {clf.dim}")
    p = expit(x @ clf.w + clf.b)
    return float(p) if np.ndim(p) == 0 else p


def predict(clf: ConceptClassifier, x, threshold: float = 0.5):
    if not 0.0 < threshold < 1.0:
        raise InvalidConfig("threshold must lie in (0, 1)")
    return predict_proba(clf, x) > threshold


def save_bundle(classifiers, path) -> None:
    doc = {"version": BUNDLE_VERSION, "classifiers": {
        c.concept: {"w": c.w.tolist(), "b": c.b, "input_kind": c.input_kind, "l2": c.l2}
        for c in sorted(classifiers, key=lambda c: c.concept)}}
    try:
        Path(path).write_text(json.dumps(doc, ensure_ascii=False), encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write classifier bundle {path}: {exc}") from exc


def load_bundle(path) -> dict[str, ConceptClassifier]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read classifier bundle {path}: {exc}") from exc
    if doc.get("version") != BUNDLE_VERSION:
        raise InvalidConfig(f"{path}: unsupported bundle version {doc.get('version')!r}")
    return {k: ConceptClassifier(k, np.array(v["w"], dtype=np.float64), float(v["b"]),
                                 v["input_kind"], float(v["l2"]))
            for k, v in doc["classifiers"].items()}
