"""Cross-validated evaluation of concept classifiers.

Three methods share one fold loop:

``udm``
    train a VAE on the training folds, embed every image, fit one logistic
    classifier per concept on the embeddings.
``category_free_lr``
    the same classifiers on the raw feature vectors.
``predefined_category``
    one classifier per (concept, feature category) on that category's slice.

Within each held-out fold every concept is scored over ``trials`` random
draws of a few positive and negative test images.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import vae as vae_mod
from .classifier import ConceptClassifier, TrainSet, predict_proba, train_concept
from .dataset import ConceptVocabulary, DescriptionCorpus, FeatureTable, split_folds
from .errors import (
    EmptyClass,
    InsufficientTestInstances,
    InvalidConfig,
    IoError,
    MissingCategoryManifest,
    NoNegativesAvailable,
    UnknownCategory,
)
from .negatives import (
    ALL_NONPOSITIVE,
    SEMANTIC_DISTANT,
    negatives_all,
    negatives_semantic,
    train_pvdm,
)

logger = logging.getLogger(__name__)

METHODS = ("udm", "category_free_lr", "predefined_category")


@dataclass(frozen=True)
class EvalProtocol:
    k: int = 4
    trials: int = 10
    pos_per_trial: tuple[int, int] = (3, 4)
    neg_per_trial: tuple[int, int] = (4, 6)
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.k < 2 or self.trials < 1:
            raise InvalidConfig("k must be >= 2 and trials >= 1")
        for lo, hi in (self.pos_per_trial, self.neg_per_trial):
            if not 1 <= lo <= hi:
                raise InvalidConfig(f"bad per-trial range ({lo}, {hi})")
        if not 0.0 < self.threshold < 1.0:
            raise InvalidConfig("threshold must lie in (0, 1)")


@dataclass(frozen=True)
class NegativeConfig:
    strategy: str = ALL_NONPOSITIVE
    ratio: float = 1.5
    aggregate: str = "max"
    m: int = 50
    window: int = 5
    neg_k: int = 5
    epochs: int = 100
    lr: float = 0.025

    def __post_init__(self):
        if self.strategy not in (ALL_NONPOSITIVE, SEMANTIC_DISTANT):
            raise InvalidConfig(f"unknown negative strategy {self.strategy!r}")


@dataclass(frozen=True)
class ClassifierConfig:
    l2: float = 1e-3
    epochs: int = 500
    lr: float = 0.1


@dataclass(frozen=True)
class Trial:
    concept: str
    category: str
    fold: int
    trial: int
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def f1(self) -> float:
        return f1(self.tp, self.fp, self.fn)


@dataclass(frozen=True)
class TrialCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def f1(self) -> float:
        return f1(self.tp, self.fp, self.fn)


@dataclass
class ConceptResult:
    concept: str
    category: str
    per_fold_f1: list  # one entry per fold, None where the concept was skipped
    mean_f1: float
    support: int


@dataclass
class EvaluationReport:
    method: str
    concept_results: list[ConceptResult]
    trials: list[Trial]
    skipped: list[tuple[str, str, int, str]]
    probabilities: dict[tuple[str, str], dict[str, float]]
    config: dict = field(default_factory=dict)

    def _scores(self):
        return [r.mean_f1 for r in self.concept_results]

    @property
    def macro_f1(self) -> float:
        s = self._scores()
        return float(np.mean(s)) if s else math.nan

    mean_f1 = macro_f1

    @property
    def min_f1(self) -> float:
        s = self._scores()
        return float(min(s)) if s else math.nan

    @property
    def max_f1(self) -> float:
        s = self._scores()
        return float(max(s)) if s else math.nan

    @property
    def micro_f1(self) -> float:
        tp = sum(t.tp for t in self.trials)
        fp = sum(t.fp for t in self.trials)
        fn = sum(t.fn for t in self.trials)
        return f1(tp, fp, fn)

    def category_means(self) -> dict[str, float]:
        groups: dict[str, list[float]] = {}
        for r in self.concept_results:
            if r.category:
                groups.setdefault(r.category, []).append(r.mean_f1)
        return {c: float(np.mean(v)) for c, v in sorted(groups.items())}


@dataclass
class AblationReport:
    method: str
    fractions: list[float]
    mean_f1: list[float]
    reports: list[EvaluationReport]


class LeakageAudit:
    """Records which objects fed each training stage, per fold."""

    STAGES = ("vae_train", "standardize", "pvdm", "classifier")

    def __init__(self):
        self.test_objects: dict[int, frozenset[str]] = {}
        self.events: list[tuple[int, str, frozenset[str]]] = []

    def record(self, fold: int, stage: str, objects: Iterable[str]) -> None:
        self.events.append((fold, stage, frozenset(objects)))

    def violations(self) -> list[tuple[int, str, list[str]]]:
        out = []
        for fold, stage, objs in self.events:
            bad = objs & self.test_objects.get(fold, frozenset())
            if bad:
                out.append((fold, stage, sorted(bad)))
        return out

    def stages_seen(self) -> set[str]:
        return {s for _, s, _ in self.events}


def f1(tp: int, fp: int, fn: int) -> float:
    """``2tp / (2tp + fp + fn)``, zero when nothing is predicted or present."""
    denom = 2 * tp + fp + fn
    return 2 * tp / denom if denom else 0.0


def _probabilities(clf, X) -> np.ndarray:
    if isinstance(clf, ConceptClassifier):
        return np.asarray(predict_proba(clf, X), dtype=np.float64).reshape(len(X))
    return np.asarray(clf(X), dtype=np.float64).reshape(len(X))


def evaluate_concept(clf: ConceptClassifier | Callable, X_test: np.ndarray, labels: Sequence[bool],
                     protocol: EvalProtocol, rng: np.random.Generator) -> list[TrialCounts]:
    """Score one classifier over ``protocol.trials`` random test draws.

    Each trial draws a positive and a negative count uniformly from the
    protocol ranges (capped at what the fold holds) and samples that many
    images without replacement. ``clf`` may also be any callable mapping
    rows to probabilities.
    """
    labels = np.asarray(labels, dtype=bool)
    X_test = np.asarray(X_test, dtype=np.float64)
    pos_idx = np.flatnonzero(labels)
    neg_idx = np.flatnonzero(~labels)
    if len(pos_idx) < protocol.pos_per_trial[0] or len(neg_idx) < protocol.neg_per_trial[0]:
        raise InsufficientTestInstances(
            f"{len(pos_idx)} positive / {len(neg_idx)} negative test images")
    probs = _probabilities(clf, X_test)
    pred = probs > protocol.threshold
    out = []
    for _ in range(protocol.trials):
        n_pos = min(len(pos_idx), int(rng.integers(protocol.pos_per_trial[0], protocol.pos_per_trial[1] + 1)))
        n_neg = min(len(neg_idx), int(rng.integers(protocol.neg_per_trial[0], protocol.neg_per_trial[1] + 1)))
        chosen_pos = rng.choice(pos_idx, size=n_pos, replace=False)
        chosen_neg = rng.choice(neg_idx, size=n_neg, replace=False)
        tp = int(pred[chosen_pos].sum())
        fp = int(pred[chosen_neg].sum())
        out.append(TrialCounts(tp, fp, n_pos - tp, n_neg - fp))
    return out


def _stable_key(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def subsample_objects(objects: Sequence[str], fraction: float, seed: int, fold: int) -> list[str]:
    """Nested random subset: a smaller fraction is always a prefix of a larger one."""
    if not 0.0 < fraction <= 1.0:
        raise InvalidConfig(f"fraction must lie in (0, 1], got {fraction}")
    objs = sorted(objects)
    if fraction >= 1.0:
        return objs
    n = max(1, math.ceil(fraction * len(objs) - 1e-9))
    order = np.random.default_rng([seed, fold, 7919]).permutation(len(objs))
    return sorted(objs[i] for i in order[:n])


@dataclass(frozen=True)
class _RunSpec:
    method: str
    features: FeatureTable
    corpus: DescriptionCorpus
    vocab: ConceptVocabulary
    pairs: tuple[tuple[str, str, tuple[int, int] | None], ...]
    protocol: EvalProtocol
    clf_cfg: ClassifierConfig
    neg_cfg: NegativeConfig
    vae_cfg: vae_mod.VaeConfig | None
    train_fraction: float
    vae_data: str


def _fold_seed(seed: int, fold: int) -> int:
    return int(np.random.SeedSequence([seed, fold]).generate_state(1)[0])


def _run_fold(spec: _RunSpec, fold: int, assignment) -> dict:
    feats, vocab, proto = spec.features, spec.vocab, spec.protocol
    test_objs = assignment.test_objects(fold)
    train_objs = assignment.train_objects(fold)
    labeled = subsample_objects(train_objs, spec.train_fraction, proto.seed, fold)
    events = []
    skipped = []

    if spec.method == "udm":
        vae_rows = feats.subset(train_objs if spec.vae_data == "all_train" else labeled)
        cfg = replace(spec.vae_cfg, input_dim=feats.dim,
                      seed=_fold_seed(spec.vae_cfg.seed, fold))
        model = vae_mod.train(vae_rows, cfg)
        events.append((fold, "vae_train", frozenset(vae_rows.object_ids)))
        events.append((fold, "standardize", frozenset(vae_rows.object_ids)))
        Z = vae_mod.embed(model, feats.X)
        if not np.all(np.isfinite(Z)):
            raise FloatingPointError(f"fold {fold}: non-finite embedding")
    else:
        Z = feats.X

    pv = None
    if spec.neg_cfg.strategy == SEMANTIC_DISTANT:
        pv_corpus = spec.corpus.subset(labeled)
        n = spec.neg_cfg
        pv = train_pvdm(pv_corpus, n.m, n.window, n.neg_k, n.epochs,
                        _fold_seed(proto.seed + 1, fold), n.lr)
        events.append((fold, "pvdm", frozenset(pv_corpus.objects)))

    obj_arr = np.array(feats.object_ids)
    test_mask = feats.object_mask(test_objs)
    test_obj_ids = obj_arr[test_mask]
    labeled_set = frozenset(labeled)
    trials, fold_f1, probs = [], {}, {}
    for concept, category, cols in spec.pairs:
        key = (concept, category)
        positives = vocab.positives(concept)
        pos_train = positives & labeled_set
        if not pos_train:
            reason = "FractionTooSmall" if spec.train_fraction < 1.0 else "no positive training objects"
            skipped.append((concept, category, fold, reason))
            continue
        try:
            if pv is not None:
                negs = negatives_semantic(concept, vocab, pv, spec.neg_cfg.ratio,
                                          spec.neg_cfg.aggregate, labeled)
            else:
                negs = negatives_all(concept, vocab, labeled)
        except NoNegativesAvailable as exc:
            skipped.append((concept, category, fold, f"NoNegativesAvailable: {exc}"))
            continue
        X = Z if cols is None else Z[:, cols[0]:cols[1]]
        pos_rows = feats.object_mask(pos_train)
        neg_rows = feats.object_mask(negs.object_ids)
        try:
            ts = TrainSet(X[pos_rows], X[neg_rows])
        except EmptyClass as exc:
            skipped.append((concept, category, fold, f"EmptyClass: {exc}"))
            continue
        kind = "latent" if spec.method == "udm" else ("raw" if cols is None else f"raw_slice:{category}")
        clf = train_concept(ts, spec.clf_cfg.l2, spec.clf_cfg.epochs, spec.clf_cfg.lr,
                            concept=concept, input_kind=kind)
        events.append((fold, "classifier", frozenset(obj_arr[pos_rows | neg_rows])))

        p_test = np.asarray(predict_proba(clf, X[test_mask])).reshape(-1)
        probs[key] = {o: float(np.mean(p_test[test_obj_ids == o])) for o in sorted(set(test_obj_ids))}
        labels = np.isin(test_obj_ids, list(positives))
        rng = np.random.default_rng([proto.seed, fold, _stable_key(concept), _stable_key(category)])
        try:
            counts = evaluate_concept(clf, X[test_mask], labels, proto, rng)
        except InsufficientTestInstances as exc:
            skipped.append((concept, category, fold, f"InsufficientTestInstances: {exc}"))
            continue
        trials += [Trial(concept, category, fold, i, c.tp, c.fp, c.fn, c.tn) for i, c in enumerate(counts)]
        fold_f1[key] = float(np.mean([c.f1 for c in counts]))
    return {"fold": fold, "trials": trials, "fold_f1": fold_f1, "probs": probs,
            "skipped": skipped, "events": events, "test_objects": frozenset(test_objs)}


def _run_fold_star(args):
    return _run_fold(*args)


def _execute(spec: _RunSpec, jobs: int, audit: LeakageAudit | None, extra_config: dict) -> EvaluationReport:
    assignment = split_folds(spec.features.objects, spec.protocol.k, spec.protocol.seed)
    work = [(spec, f, assignment) for f in range(spec.protocol.k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            fold_out = list(pool.map(_run_fold_star, work))
    else:
        fold_out = [_run_fold_star(w) for w in work]
    fold_out.sort(key=lambda r: r["fold"])

    if audit is not None:
        for r in fold_out:
            audit.test_objects[r["fold"]] = r["test_objects"]
            for ev in r["events"]:
                audit.record(*ev)

    k = spec.protocol.k
    results = []
    probs: dict[tuple[str, str], dict[str, float]] = {}
    skipped = []
    trials = []
    for concept, category, _ in spec.pairs:
        key = (concept, category)
        per_fold = [r["fold_f1"].get(key) for r in fold_out]
        for r in fold_out:
            probs.setdefault(key, {}).update(r["probs"].get(key, {}))
        scored = [v for v in per_fold if v is not None]
        if scored:
            results.append(ConceptResult(concept, category, per_fold, float(np.mean(scored)),
                                         spec.vocab[concept].count))
    for r in fold_out:
        skipped += r["skipped"]
        trials += r["trials"]
    results.sort(key=lambda r: (r.concept, r.category))
    trials.sort(key=lambda t: (t.concept, t.category, t.fold, t.trial))
    skipped.sort()
    config = {
        "method": spec.method,
        "protocol": asdict(spec.protocol),
        "classifier": asdict(spec.clf_cfg),
        "negatives": asdict(spec.neg_cfg),
        "vae": asdict(spec.vae_cfg) if spec.vae_cfg is not None else None,
        "train_fraction": spec.train_fraction,
        "vae_data": spec.vae_data if spec.method == "udm" else None,
        "folds": k,
    }
    config.update(extra_config)
    report = EvaluationReport(spec.method, results, trials, skipped,
                              {k_: v for k_, v in probs.items() if v}, config)
    logger.info("%s: %d concepts scored, %d skips, macro F1 %.4f, micro F1 %.4f",
                spec.method, len(results), len(skipped), report.macro_f1, report.micro_f1)
    return report


def _tag_pairs(vocab: ConceptVocabulary, concept_categories: Mapping[str, Sequence[str]] | None):
    tags = concept_categories or {}
    pairs = []
    for tok in vocab.tokens:
        cats = tags.get(tok)
        cat = (cats if isinstance(cats, str) else cats[0]) if cats else ""
        pairs.append((tok, cat, None))
    return tuple(pairs)


def run_udm(features: FeatureTable, corpus: DescriptionCorpus, vocab: ConceptVocabulary,
            protocol: EvalProtocol | None = None, vae_cfg: vae_mod.VaeConfig | None = None,
            neg_cfg: NegativeConfig | None = None, clf_cfg: ClassifierConfig | None = None, *,
            train_fraction: float = 1.0, concept_categories=None, jobs: int = 1,
            audit: LeakageAudit | None = None, vae_data: str = "all_train") -> EvaluationReport:
    """VAE embedding + per-concept logistic regression, cross-validated.

    ``vae_data="all_train"`` pre-trains the VAE on every training-fold image
    even when ``train_fraction`` thins the labelled objects; ``"labeled"``
    restricts it to the labelled subset as well.
    """
    if vae_data not in ("all_train", "labeled"):
        raise InvalidConfig(f"unknown vae_data {vae_data!r}")
    vae_cfg = vae_cfg or vae_mod.VaeConfig(input_dim=features.dim)
    spec = _RunSpec("udm", features, corpus, vocab, _tag_pairs(vocab, concept_categories),
                    protocol or EvalProtocol(), clf_cfg or ClassifierConfig(),
                    neg_cfg or NegativeConfig(), replace(vae_cfg, input_dim=features.dim),
                    train_fraction, vae_data)
    return _execute(spec, jobs, audit, {})


def run_category_free_lr(features: FeatureTable, corpus: DescriptionCorpus, vocab: ConceptVocabulary,
                         protocol: EvalProtocol | None = None, clf_cfg: ClassifierConfig | None = None,
                         neg_cfg: NegativeConfig | None = None, *, train_fraction: float = 1.0,
                         concept_categories=None, jobs: int = 1,
                         audit: LeakageAudit | None = None) -> EvaluationReport:
    spec = _RunSpec("category_free_lr", features, corpus, vocab, _tag_pairs(vocab, concept_categories),
                    protocol or EvalProtocol(), clf_cfg or ClassifierConfig(),
                    neg_cfg or NegativeConfig(), None, train_fraction, "all_train")
    return _execute(spec, jobs, audit, {})


def run_predefined_category(features: FeatureTable, concept_category_map: Mapping[str, Sequence[str]],
                            corpus: DescriptionCorpus, vocab: ConceptVocabulary,
                            protocol: EvalProtocol | None = None,
                            clf_cfg: ClassifierConfig | None = None,
                            neg_cfg: NegativeConfig | None = None, *, train_fraction: float = 1.0,
                            jobs: int = 1, audit: LeakageAudit | None = None) -> EvaluationReport:
    """One classifier per (concept, category) pair, each on its feature slice."""
    slices = features.category_slices
    if not slices:
        raise MissingCategoryManifest("predefined_category needs a category manifest")
    if concept_category_map is None:
        raise MissingCategoryManifest("predefined_category needs a concept -> category map")
    pairs = []
    for concept in sorted(concept_category_map):
        cats = concept_category_map[concept]
        cats = [cats] if isinstance(cats, str) else list(cats)
        for cat in cats:
            if cat not in slices:
                raise UnknownCategory(f"concept {concept!r} maps to unknown category {cat!r}")
        if concept not in vocab:
            logger.info("concept %r not in vocabulary; ignored", concept)
            continue
        pairs += [(concept, cat, slices[cat]) for cat in sorted(set(cats))]
    spec = _RunSpec("predefined_category", features, corpus, vocab, tuple(pairs),
                    protocol or EvalProtocol(), clf_cfg or ClassifierConfig(),
                    neg_cfg or NegativeConfig(), None, train_fraction, "all_train")
    return _execute(spec, jobs, audit, {})


def run_method(method: str, features, corpus, vocab, protocol=None, *, vae_cfg=None, neg_cfg=None,
               clf_cfg=None, concept_categories=None, train_fraction=1.0, jobs=1, audit=None,
               vae_data="all_train") -> EvaluationReport:
    if method == "udm":
        return run_udm(features, corpus, vocab, protocol, vae_cfg, neg_cfg, clf_cfg,
                       train_fraction=train_fraction, concept_categories=concept_categories,
                       jobs=jobs, audit=audit, vae_data=vae_data)
    if method == "category_free_lr":
        return run_category_free_lr(features, corpus, vocab, protocol, clf_cfg, neg_cfg,
                                    train_fraction=train_fraction,
                                    concept_categories=concept_categories, jobs=jobs, audit=audit)
    if method == "predefined_category":
        return run_predefined_category(features, concept_categories, corpus, vocab, protocol,
                                       clf_cfg, neg_cfg, train_fraction=train_fraction,
                                       jobs=jobs, audit=audit)
    raise InvalidConfig(f"unknown method {method!r}")


def ablate(method: str, fractions: Iterable[float], features, corpus, vocab, protocol=None,
           **kwargs) -> AblationReport:
    """Rerun ``method`` with only a fraction of the training objects labelled."""
    fractions = [float(f) for f in fractions]
    if not fractions:
        raise InvalidConfig("no fractions given")
    for f in fractions:
        if not 0.0 < f <= 1.0:
            raise InvalidConfig(f"fraction {f} outside (0, 1]")
    reports = [run_method(method, features, corpus, vocab, protocol, train_fraction=f, **kwargs)
               for f in fractions]
    return AblationReport(method, fractions, [r.mean_f1 for r in reports], reports)


# -- report files -----------------------------------------------------------

def _fmt(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    return f"{x:.4f}"


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(report: EvaluationReport, out_dir) -> dict[str, Path]:
    """Write the CSV report set for one run; returns the paths written."""
    out = Path(out_dir)
    paths = {name: out / f"{name}.csv" for name in
             ("summary", "per_concept", "probability_matrix", "trials", "skipped", "per_category")}
    try:
        out.mkdir(parents=True, exist_ok=True)
        summary_rows = []
        if report.concept_results:
            summary_rows = [["min", _fmt(report.min_f1)], ["mean", _fmt(report.mean_f1)],
                            ["max", _fmt(report.max_f1)], ["macro", _fmt(report.macro_f1)],
                            ["micro", _fmt(report.micro_f1)]]
        _write_csv(paths["summary"], ["statistic", report.method], summary_rows)

        k = report.config.get("folds", max((len(r.per_fold_f1) for r in report.concept_results), default=0))
        _write_csv(paths["per_concept"],
                   ["concept", "category", "support"] + [f"f1_fold{i}" for i in range(k)] + ["mean_f1"],
                   [[r.concept, r.category, r.support] + [_fmt(v) for v in r.per_fold_f1] + [_fmt(r.mean_f1)]
                    for r in report.concept_results])

        keys = sorted(report.probabilities)
        objects = sorted({o for kk in keys for o in report.probabilities[kk]})
        _write_csv(paths["probability_matrix"], ["concept", "category"] + objects,
                   [[c, cat] + [_fmt(report.probabilities[(c, cat)].get(o)) for o in objects]
                    for c, cat in keys])

        _write_csv(paths["trials"], ["concept", "category", "fold", "trial", "tp", "fp", "fn", "tn", "f1"],
                   [[t.concept, t.category, t.fold, t.trial, t.tp, t.fp, t.fn, t.tn, _fmt(t.f1)]
                    for t in report.trials])
        _write_csv(paths["skipped"], ["concept", "category", "fold", "reason"],
                   [list(s) for s in report.skipped])
        _write_csv(paths["per_category"], ["category", "mean_f1"],
                   [[c, _fmt(v)] for c, v in report.category_means().items()])
        paths["config"] = out / "config.json"
        paths["config"].write_text(json.dumps(report.config, sort_keys=True, indent=1) + "\n",
                                   encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write report to {out}: {exc}") from exc
    return paths


def _pct(f: float) -> str:
    return f"{f * 100:g}%"


def emit_ablation(ablations: Sequence[AblationReport], out_dir) -> Path:
    """``ablation.csv``: one row per method, one column per training fraction."""
    out = Path(out_dir)
    fractions = ablations[0].fractions if ablations else []
    for a in ablations:
        if a.fractions != fractions:
            raise InvalidConfig("ablations disagree on fractions")
    path = out / "ablation.csv"
    try:
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(path, ["method"] + [_pct(f) for f in fractions],
                   [[a.method] + [_fmt(v) for v in a.mean_f1] for a in ablations])
    except OSError as exc:
        raise IoError(f"cannot write ablation table to {out}: {exc}") from exc
    return path


def emit_table1(reports: Mapping[str, EvaluationReport], path) -> Path:
    """Side-by-side min/mean/max table, one column per labelled report."""
    path = Path(path)
    labels = list(reports)
    rows = [[stat] + [_fmt(getattr(reports[l], f"{stat}_f1")) for l in labels]
            for stat in ("min", "mean", "max", "micro")]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(path, ["statistic"] + labels, rows)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
    return path
