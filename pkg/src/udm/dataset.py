"""Feature tables, description corpora, concept vocabularies and folds."""

from __future__ import annotations

import csv
import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import (
    DimensionMismatch,
    DuplicateInstanceId,
    InvalidConfig,
    InvalidUtf8,
    IoError,
    MalformedLine,
    MalformedRow,
    TooFewObjects,
)

logger = logging.getLogger(__name__)

# Small function-word lists; anything domain specific belongs in a stopword file.
DEFAULT_STOPWORDS = {
    "en": frozenset(
        "a an the this that these those is are was were be been it its of in on at "
        "to for with and or but as by from has have had very some there which looks "
        "like object thing".split()
    ),
    "es": frozenset(
        "un una unos unas el la los las es son esta este estos estas de del en con y "
        "o pero por para que se lo al muy como hay su sus objeto cosa".split()
    ),
    "hi": frozenset("एक यह वह है हैं था थे का की के को में पर से और या भी जो इस उस वस्तु".split()),
}


@dataclass(frozen=True)
class FeatureTable:
    """Per-image feature vectors grouped by object.

    ``X`` has one row per instance; ``category_slices`` maps a category name
    to a half-open column range ``(start, end)``.
    """

    instance_ids: tuple[str, ...]
    object_ids: tuple[str, ...]
    X: np.ndarray
    category_slices: Mapping[str, tuple[int, int]] | None = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64, ndmin=2)
        if X.ndim != 2 or X.shape[1] < 1:
            raise DimensionMismatch("feature matrix must be 2-D with at least one column")
        if len(self.instance_ids) != X.shape[0] or len(self.object_ids) != X.shape[0]:
            raise DimensionMismatch("ids and feature rows disagree in length")
        seen = set()
        for iid in self.instance_ids:
            if iid in seen:
                raise DuplicateInstanceId(iid)
            seen.add(iid)
        if any(not o for o in self.object_ids):
            raise MalformedRow("empty object_id")
        X.setflags(write=False)
        object.__setattr__(self, "instance_ids", tuple(self.instance_ids))
        object.__setattr__(self, "object_ids", tuple(self.object_ids))
        object.__setattr__(self, "X", X)
        if self.category_slices is not None:
            slices = {k: (int(a), int(b)) for k, a, b in
                      ((k, *v) for k, v in self.category_slices.items())}
            validate_slices(slices, X.shape[1])
            object.__setattr__(self, "category_slices", slices)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def objects(self) -> list[str]:
        """Distinct object ids in first-appearance order."""
        return list(dict.fromkeys(self.object_ids))

    def object_mask(self, objects: Iterable[str]) -> np.ndarray:
        keep = set(objects)
        return np.array([o in keep for o in self.object_ids], dtype=bool)

    def subset(self, objects: Iterable[str]) -> "FeatureTable":
        """Rows belonging to ``objects``, original order preserved."""
        mask = self.object_mask(objects)
        idx = np.flatnonzero(mask)
        return FeatureTable(
            tuple(self.instance_ids[i] for i in idx),
            tuple(self.object_ids[i] for i in idx),
            self.X[idx],
            self.category_slices,
        )

    def with_slices(self, slices: Mapping[str, tuple[int, int]] | None) -> "FeatureTable":
        return FeatureTable(self.instance_ids, self.object_ids, self.X, slices)


def validate_slices(slices: Mapping[str, tuple[int, int]], dim: int) -> None:
    spans = sorted((a, b, name) for name, (a, b) in slices.items())
    prev_end = 0
    for a, b, name in spans:
        if not (0 <= a < b <= dim):
            raise InvalidConfig(f"category {name!r} range [{a}, {b}) outside [0, {dim})")
        if a < prev_end:
            raise InvalidConfig(f"category {name!r} overlaps another category")
        prev_end = b


def load_category_manifest(path) -> dict[str, tuple[int, int]]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"manifest {path} is not valid JSON: {exc}") from exc
    out = {}
    for name, span in raw.items():
        if not isinstance(span, list) or len(span) != 2:
            raise InvalidConfig(f"manifest entry {name!r} must be [start, end]")
        out[str(name)] = (int(span[0]), int(span[1]))
    return out


def load_features(path, manifest=None) -> FeatureTable:
    """Read a features CSV (``instance_id,object_id,f0,...``).

    ``manifest`` may be a path to a category manifest JSON or an already
    parsed mapping.
    """
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise IoError(f"cannot read features {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 3 or header[:2] != ["instance_id", "object_id"]:
            raise MalformedRow(f"{path}: header must start with instance_id,object_id and name >=1 feature")
        ids, objs, rows = [], [], []
        width = None
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) < 3:
                raise MalformedRow(f"{path}:{lineno}: expected id, object and features")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise DimensionMismatch(
                    f"{path}:{lineno}: {len(row) - 2} features, expected {width - 2}")
            try:
                rows.append([float(v) for v in row[2:]])
            except ValueError as exc:
                raise MalformedRow(f"{path}:{lineno}: {exc}") from exc
            ids.append(row[0])
            objs.append(row[1])
    if width is not None and width != len(header):
        raise MalformedRow(f"{path}: header names {len(header) - 2} features, rows have {width - 2}")
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 2)
    if manifest is not None and not isinstance(manifest, Mapping):
        manifest = load_category_manifest(manifest)
    return FeatureTable(tuple(ids), tuple(objs), X, manifest)


def write_features(table: FeatureTable, path) -> None:
    """Write ``table`` in the features CSV format (shortest round-trip floats)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instance_id", "object_id"] + [f"f{j}" for j in range(table.dim)])
        for iid, oid, x in zip(table.instance_ids, table.object_ids, table.X):
            w.writerow([iid, oid] + [repr(float(v)) for v in x])


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def tokenize(raw: str, language: str = "en") -> list[str]:
    """Lowercase, split on Unicode whitespace, strip edge punctuation.

    Interior punctuation such as hyphens and apostrophes is kept.
    ``str.lower`` leaves caseless scripts (Devanagari) untouched, so the
    language tag is accepted for interface symmetry only.
    """
    tokens = []
    for piece in raw.lower().split():
        start, end = 0, len(piece)
        while start < end and _is_punct(piece[start]):
            start += 1
        while end > start and _is_punct(piece[end - 1]):
            end -= 1
        if start < end:
            tokens.append(piece[start:end])
    return tokens


@dataclass(frozen=True)
class Description:
    object_id: str
    language: str
    raw: str
    tokens: tuple[str, ...]


@dataclass(frozen=True)
class DescriptionCorpus:
    entries: tuple[Description, ...]

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[str, str]], language: str = "en") -> "DescriptionCorpus":
        return cls(tuple(Description(o, language, raw, tuple(tokenize(raw, language)))
                         for o, raw in pairs))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def objects(self) -> list[str]:
        return list(dict.fromkeys(e.object_id for e in self.entries))

    @property
    def languages(self) -> list[str]:
        return list(dict.fromkeys(e.language for e in self.entries))

    def subset(self, objects: Iterable[str]) -> "DescriptionCorpus":
        keep = set(objects)
        return DescriptionCorpus(tuple(e for e in self.entries if e.object_id in keep))

    def documents(self) -> dict[str, list[str]]:
        """Concatenated tokens of every description of each object."""
        docs: dict[str, list[str]] = {}
        for e in self.entries:
            docs.setdefault(e.object_id, []).extend(e.tokens)
        return docs


def load_descriptions(path, language: str = "en") -> DescriptionCorpus:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read descriptions {path}: {exc}") from exc
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InvalidUtf8(f"{path}: {exc}") from exc
    if text.startswith("\ufeff"):
        text = text[1:]
    pairs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        if "\t" not in line:
            raise MalformedLine(f"{path}:{lineno}: missing tab separator")
        oid, raw = line.split("\t", 1)
        if not oid.strip():
            raise MalformedLine(f"{path}:{lineno}: empty object_id")
        pairs.append((oid.strip(), raw))
    return DescriptionCorpus.from_pairs(pairs, language)


def load_stopwords(path) -> frozenset[str]:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoError(f"cannot read stopwords {path}: {exc}") from exc
    return frozenset(t for line in lines for t in tokenize(line))


@dataclass(frozen=True)
class Concept:
    token: str
    count: int
    positive_objects: frozenset[str]


@dataclass(frozen=True)
class ConceptVocabulary:
    concepts: tuple[Concept, ...]
    _index: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {c.token: c for c in self.concepts})

    def __contains__(self, token) -> bool:
        return token in self._index

    def __getitem__(self, token) -> Concept:
        return self._index[token]

    def __len__(self) -> int:
        return len(self.concepts)

    def __iter__(self):
        return iter(self.concepts)

    @property
    def tokens(self) -> list[str]:
        return [c.token for c in self.concepts]

    def positives(self, token) -> frozenset[str]:
        return self._index[token].positive_objects

    def restrict(self, tokens: Iterable[str]) -> "ConceptVocabulary":
        keep = set(tokens)
        return ConceptVocabulary(tuple(c for c in self.concepts if c.token in keep))


def build_vocabulary(corpus: DescriptionCorpus, min_count: int = 2,
                     stopwords: Iterable[str] | None = None) -> ConceptVocabulary:
    """Every non-stopword token seen at least ``min_count`` times becomes a concept.

    With ``stopwords=None`` the built-in list for each corpus language is used.
    """
    if min_count < 1:
        raise InvalidConfig("min_count must be >= 1")
    if stopwords is None:
        stop = frozenset().union(*(DEFAULT_STOPWORDS.get(lang, frozenset())
                                   for lang in corpus.languages))
    else:
        stop = frozenset(stopwords)
    counts: Counter[str] = Counter()
    positives: dict[str, set[str]] = {}
    for e in corpus.entries:
        counts.update(e.tokens)
        for t in e.tokens:
            positives.setdefault(t, set()).add(e.object_id)
    concepts = tuple(
        Concept(t, counts[t], frozenset(positives[t]))
        for t in sorted(counts)
        if counts[t] >= min_count and t not in stop
    )
    logger.info("vocabulary: %d concepts (min_count=%d, %d stopwords)",
                len(concepts), min_count, len(stop))
    return ConceptVocabulary(concepts)


def load_concept_categories(path) -> dict[str, list[str]]:
    """Read a concept -> category map (JSON; values are a name or a list of names)."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoError(f"cannot read concept map {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidConfig(f"concept map {path} is not valid JSON: {exc}") from exc
    return {k: [v] if isinstance(v, str) else list(v) for k, v in raw.items()}


@dataclass(frozen=True)
class FoldAssignment:
    k: int
    assignment: Mapping[str, int]

    def test_objects(self, fold: int) -> list[str]:
        return sorted(o for o, f in self.assignment.items() if f == fold)

    def train_objects(self, fold: int) -> list[str]:
        return sorted(o for o, f in self.assignment.items() if f != fold)

    def sizes(self) -> list[int]:
        c = Counter(self.assignment.values())
        return [c.get(i, 0) for i in range(self.k)]


def split_folds(objects: Iterable[str], k: int = 4, seed: int = 0) -> FoldAssignment:
    """Object-level k-fold split; fold sizes differ by at most one."""
    objs = sorted(set(objects))
    if k < 2:
        raise InvalidConfig("k must be >= 2")
    if len(objs) < k:
        raise TooFewObjects(f"{len(objs)} objects cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(objs))
    return FoldAssignment(k, {objs[j]: i % k for i, j in enumerate(order)})
