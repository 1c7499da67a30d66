"""Deterministic synthetic objects, features and noisy descriptions.

Every object receives one ground-truth concept per category. The concept's
cluster mean lives inside that category's manifest slice, so a classifier
restricted to the right slice can separate it; every dimension also carries
isotropic image noise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import DescriptionCorpus, FeatureTable, write_features
from .errors import InvalidConfig, IoError


@dataclass(frozen=True)
class ConceptSpec:
    token: str
    category: str
    weight: float = 1.0  # relative share of objects carrying the concept
    mean: tuple[float, ...] | None = None  # cluster centre over the category slice
    scale: float | None = None  # per-object spread around the centre


DEFAULT_CONCEPTS = (
    ConceptSpec("red", "color"), ConceptSpec("green", "color"),
    ConceptSpec("yellow", "color"), ConceptSpec("blue", "color"),
    ConceptSpec("round", "shape"), ConceptSpec("cube", "shape"),
    ConceptSpec("cylinder", "shape"), ConceptSpec("triangle", "shape"),
    ConceptSpec("apple", "object"), ConceptSpec("banana", "object"),
    ConceptSpec("lime", "object"), ConceptSpec("tomato", "object"),
    ConceptSpec("block", "object"), ConceptSpec("lemon", "object", weight=0.3),
)

_FILLERS = ("a", "the", "this is a", "it is a", "")


@dataclass(frozen=True)
class SynthConfig:
    n_objects: int = 72
    images_per_object: int = 4
    D: int = 120
    concept_spec: tuple[ConceptSpec, ...] = DEFAULT_CONCEPTS
    annotation_noise: float = 0.2
    # one description keeps per-object label noise equal to annotation_noise
    descriptions_per_object: int = 1
    seed: int = 0
    # category -> fraction of D; remaining columns carry noise only
    slice_shares: tuple[tuple[str, float], ...] = (("color", 0.1), ("shape", 0.45), ("object", 0.45))
    separation: float = 8.0
    object_scale: float = 0.5
    image_noise: float = 1.0
    # "subspace": object variation stays in the span of its category's
    # concept centres (correlated descriptors); "isotropic": full slice
    object_jitter: str = "subspace"
    # per-column scale factors spread log-uniformly over this many decades
    scale_decades: float = 2.0
    folds: int = 4
    # number of object classes sharing one concept per category (None: every
    # object draws its concepts independently)
    n_classes: int | None = 18

    def __post_init__(self):
        if self.n_objects < 2 * self.folds:
            raise InvalidConfig(f"n_objects must be >= {2 * self.folds} for {self.folds}-fold splits")
        if not 0.0 <= self.annotation_noise < 0.5:
            raise InvalidConfig("annotation_noise must lie in [0, 0.5)")
        if min(self.images_per_object, self.descriptions_per_object, self.D) < 1:
            raise InvalidConfig("images_per_object, descriptions_per_object and D must be >= 1")
        if self.n_classes is not None and not 1 <= self.n_classes <= self.n_objects:
            raise InvalidConfig("n_classes must lie in [1, n_objects]")
        if self.object_jitter not in ("subspace", "isotropic"):
            raise InvalidConfig(f"unknown object_jitter {self.object_jitter!r}")
        if not self.concept_spec:
            raise InvalidConfig("concept_spec is empty")
        cats = {c for c, _ in self.slice_shares}
        for spec in self.concept_spec:
            if spec.category not in cats:
                raise InvalidConfig(f"concept {spec.token!r} uses unknown category {spec.category!r}")
            if spec.weight <= 0:
                raise InvalidConfig(f"concept {spec.token!r} needs a positive weight")
        if len({s.token for s in self.concept_spec}) != len(self.concept_spec):
            raise InvalidConfig("concept tokens must be unique")
        if sum(share for _, share in self.slice_shares) > 1.0 + 1e-9:
            raise InvalidConfig("slice shares exceed 1")

    def categories(self) -> list[str]:
        return [c for c, _ in self.slice_shares if any(s.category == c for s in self.concept_spec)]

    def slices(self) -> dict[str, tuple[int, int]]:
        out, start = {}, 0
        for name, share in self.slice_shares:
            width = max(1, int(round(share * self.D)))
            end = min(self.D, start + width)
            if end <= start:
                raise InvalidConfig(f"D={self.D} too small for category {name!r}")
            out[name] = (start, end)
            start = end
        return out


@dataclass
class SynthResult:
    features: FeatureTable
    corpus: DescriptionCorpus
    slices: dict[str, tuple[int, int]]
    concept_categories: dict[str, str]
    assignment: dict[str, dict[str, str]]  # object -> category -> true token
    n_tokens: int = 0
    n_corrupted: int = 0
    paths: dict[str, Path] = field(default_factory=dict)


def _apportion(weights: list[float], total: int) -> list[int]:
    """Largest-remainder split of ``total`` by ``weights``, each share >= 1 when possible."""
    raw = np.array(weights) / sum(weights) * total
    counts = np.floor(raw).astype(int)
    if total >= len(weights):
        counts = np.maximum(counts, 1)
    while counts.sum() > total:
        counts[np.argmax(counts)] -= 1
    rem = raw - np.floor(raw)
    for i in np.argsort(-rem, kind="stable"):
        if counts.sum() >= total:
            break
        counts[i] += 1
    return counts.tolist()


def build(cfg: SynthConfig) -> SynthResult:
    """Generate the dataset in memory."""
    rng = np.random.default_rng(cfg.seed)
    slices = cfg.slices()
    by_cat: dict[str, list[ConceptSpec]] = {}
    for spec in cfg.concept_spec:
        by_cat.setdefault(spec.category, []).append(spec)

    means: dict[str, np.ndarray] = {}
    bases: dict[str, np.ndarray] = {}
    for cat, specs in by_cat.items():
        a, b = slices[cat]
        for spec in specs:
            if spec.mean is not None:
                mu = np.asarray(spec.mean, dtype=np.float64)
                if mu.shape != (b - a,):
                    raise InvalidConfig(f"mean of {spec.token!r} must have length {b - a}")
            else:
                direction = rng.standard_normal(b - a)
                mu = cfg.separation * direction / np.linalg.norm(direction)
            means[spec.token] = mu
        # orthonormal basis of the span of this category's centres
        q, _ = np.linalg.qr(np.stack([means[sp.token] for sp in specs], axis=1))
        bases[cat] = q

    objects = [f"obj{i:03d}" for i in range(cfg.n_objects)]
    # concepts are dealt to object classes; objects are instances of a class
    n_units = cfg.n_classes or cfg.n_objects
    units: list[dict[str, str]] = [{} for _ in range(n_units)]
    for cat in cfg.categories():
        specs = by_cat[cat]
        counts = _apportion([s.weight for s in specs], n_units)
        tokens = [s.token for s, c in zip(specs, counts) for _ in range(c)]
        for u, j in zip(units, rng.permutation(len(tokens))):
            u[cat] = tokens[j]
    unit_of = rng.permutation(np.arange(cfg.n_objects) % n_units)
    assignment = {o: dict(units[unit_of[i]]) for i, o in enumerate(objects)}

    spec_of = {s.token: s for s in cfg.concept_spec}
    ids, objs, rows = [], [], []
    for o in objects:
        proto = np.zeros(cfg.D)
        for cat, tok in assignment[o].items():
            a, b = slices[cat]
            scale = cfg.object_scale if spec_of[tok].scale is None else spec_of[tok].scale
            if cfg.object_jitter == "subspace":
                basis = bases[cat]
                jitter = basis @ rng.standard_normal(basis.shape[1])
            else:
                jitter = rng.standard_normal(b - a)
            proto[a:b] = means[tok] + scale * jitter
        for j in range(cfg.images_per_object):
            ids.append(f"{o}_{j}")
            objs.append(o)
            rows.append(proto + cfg.image_noise * rng.standard_normal(cfg.D))
    X = np.array(rows)
    if cfg.scale_decades > 0:
        # heterogeneous per-column units, as in mixed descriptor exports
        X = X * 10.0 ** rng.uniform(-cfg.scale_decades / 2, cfg.scale_decades / 2, size=cfg.D)
    features = FeatureTable(tuple(ids), tuple(objs), X, slices)

    pairs = []
    n_tokens = n_corrupted = 0
    for o in objects:
        for _ in range(cfg.descriptions_per_object):
            words = []
            for cat in rng.permutation(sorted(assignment[o])):
                tok = assignment[o][cat]
                n_tokens += 1
                if rng.random() < cfg.annotation_noise:
                    pool = [s for s in by_cat[cat] if s.token != tok] or \
                           [s for s in cfg.concept_spec if s.token != tok]
                    # confusions favour common words, so rare concepts stay rare
                    w = np.array([s.weight for s in pool])
                    tok = pool[rng.choice(len(pool), p=w / w.sum())].token
                    n_corrupted += 1
                words.append(tok)
            filler = _FILLERS[rng.integers(len(_FILLERS))]
            pairs.append((o, " ".join(([filler] if filler else []) + words)))
    corpus = DescriptionCorpus.from_pairs(pairs, "en")
    return SynthResult(features, corpus, slices,
                       {s.token: s.category for s in cfg.concept_spec},
                       assignment, n_tokens, n_corrupted)


def generate(cfg: SynthConfig, out_dir) -> SynthResult:
    """Write ``features.csv``, ``descriptions.tsv``, ``manifest.json`` and
    ``concept_categories.json`` under ``out_dir``."""
    res = build(cfg)
    out = Path(out_dir)
    paths = {
        "features": out / "features.csv",
        "descriptions": out / "descriptions.tsv",
        "manifest": out / "manifest.json",
        "concept_categories": out / "concept_categories.json",
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        write_features(res.features, paths["features"])
        with open(paths["descriptions"], "w", encoding="utf-8", newline="\n") as fh:
            for e in res.corpus.entries:
                fh.write(f"{e.object_id}\t{e.raw}\n")
        paths["manifest"].write_text(
            json.dumps({k: list(v) for k, v in res.slices.items()}) + "\n", encoding="utf-8")
        paths["concept_categories"].write_text(
            json.dumps(res.concept_categories, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot write synthetic data to {out}: {exc}") from exc
    res.paths = paths
    return res


def two_topic_corpus(n_per_topic: int = 10, doc_len: int = 12, vocab_per_topic: int = 8,
                     concept_docs: int = 3, noise: float = 0.0, seed: int = 0):
    """Two clusters of documents over disjoint vocabularies.

    Topic A uses tokens ``a0..``, topic B ``b0..``. The token ``akey`` appears
    only in the first ``concept_docs`` topic-A documents. ``noise`` is the
    chance that a token is swapped for one from the other topic. Returns the
    corpus and an ``object -> topic`` map.
    """
    rng = np.random.default_rng(seed)
    vocab = {t: [f"{t}{i}" for i in range(vocab_per_topic)] for t in ("a", "b")}
    pairs, topic = [], {}
    for t in ("a", "b"):
        other = "b" if t == "a" else "a"
        for i in range(n_per_topic):
            oid = f"{t}doc{i:02d}"
            topic[oid] = t
            words = []
            for _ in range(doc_len):
                src = other if rng.random() < noise else t
                words.append(vocab[src][rng.integers(vocab_per_topic)])
            if t == "a" and i < concept_docs:
                words[rng.integers(len(words))] = "akey"
            pairs.append((oid, " ".join(words)))
    return DescriptionCorpus.from_pairs(pairs, "en"), topic


def corrupted_fraction(res: SynthResult) -> float:
    return res.n_corrupted / res.n_tokens if res.n_tokens else math.nan
