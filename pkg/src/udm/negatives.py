"""Negative-example selection for concept classifiers.

Two strategies: every non-positive object, or the non-positive objects whose
description documents are least similar to the positives under a PV-DM
paragraph-vector model trained here with negative sampling.
"""

from __future__ import annotations

import csv
import logging
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np
from scipy.special import expit, log_expit

from .dataset import ConceptVocabulary, DescriptionCorpus
from .errors import CorpusTooSmall, InvalidConfig, IoError, NoNegativesAvailable, ZeroVector

logger = logging.getLogger(__name__)

ALL_NONPOSITIVE = "all_nonpositive"
SEMANTIC_DISTANT = "semantic_distant"


@dataclass(frozen=True)
class NegativeSet:
    concept: str
    strategy: str
    object_ids: frozenset[str]


@dataclass(frozen=True)
class ParagraphVectors:
    doc_vectors: Mapping[str, np.ndarray]
    word_vectors: Mapping[str, np.ndarray]
    config: Mapping[str, object] = field(default_factory=dict)
    loss_history: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return len(next(iter(self.doc_vectors.values())))


def negatives_all(concept: str, vocab: ConceptVocabulary, objects: Iterable[str]) -> NegativeSet:
    negs = frozenset(objects) - vocab.positives(concept)
    if not negs:
        raise NoNegativesAvailable(f"every object is positive for {concept!r}")
    return NegativeSet(concept, ALL_NONPOSITIVE, negs)


def train_pvdm(corpus: DescriptionCorpus, m: int = 50, window: int = 5, neg_k: int = 5,
               epochs: int = 100, seed: int = 0, lr: float = 0.025,
               min_lr: float = 1e-4) -> ParagraphVectors:
    """PV-DM with negative sampling over one document per object.

    Each object's descriptions are concatenated into a single document. For
    every token position the mean of the document vector and the context word
    vectors predicts the centre token against ``neg_k`` noise tokens drawn
    from the unigram distribution raised to 0.75. As in word2vec, each
    position uses a context span drawn uniformly from ``1..window``. Updates
    are applied one document at a time; the learning rate decays linearly to
    ``min_lr``.
    """
    if min(m, neg_k, epochs) < 1 or window < 0:
        raise InvalidConfig("m, neg_k and epochs must be >= 1 and window >= 0")
    docs = corpus.documents()
    names = sorted(docs)
    if len(names) < 2:
        raise CorpusTooSmall(f"need at least 2 documents, got {len(names)}")
    counts = Counter(t for toks in docs.values() for t in toks)
    if not counts:
        raise CorpusTooSmall("corpus has no tokens")
    words = sorted(counts)
    widx = {w: i for i, w in enumerate(words)}
    noise_p = np.array([counts[w] for w in words], dtype=np.float64) ** 0.75
    noise_p /= noise_p.sum()

    rng = np.random.default_rng(seed)
    D = (rng.random((len(names), m)) - 0.5) / m
    W = (rng.random((len(words), m)) - 0.5) / m
    O = np.zeros((len(words), m))

    offsets = np.array([o for o in range(-window, window + 1) if o != 0], dtype=np.int64)
    # per-document context index matrices, padded with -1
    encoded = []
    for name in names:
        ids = np.array([widx[t] for t in docs[name]], dtype=np.int64)
        L = len(ids)
        if L == 0:
            encoded.append(None)
            continue
        pos = np.arange(L)[:, None] + offsets[None, :]
        valid = (pos >= 0) & (pos < L)
        ctx = np.where(valid, ids[np.clip(pos, 0, L - 1)], -1)
        encoded.append((ids, ctx, valid))

    total_docs = epochs * len(names)
    step = 0
    history = []
    for _ in range(epochs):
        ep_loss, ep_n = 0.0, 0
        for di in rng.permutation(len(names)):
            alpha = lr - (lr - min_lr) * step / total_docs
            step += 1
            if encoded[di] is None:
                continue
            ids, ctx, valid = encoded[di]
            L = len(ids)
            if window > 0:
                # word2vec-style reduced window: each position keeps a random span 1..window
                span = rng.integers(1, window + 1, size=(L, 1))
                valid = valid & (np.abs(offsets)[None, :] <= span)
                ctx = np.where(valid, ctx, -1)
            n_in = 1 + valid.sum(1, keepdims=True)
            ctx_sum = np.where(valid[..., None], W[np.maximum(ctx, 0)], 0.0).sum(1)
            h = (D[di] + ctx_sum) / n_in
            targets = np.concatenate(
                [ids[:, None], rng.choice(len(words), size=(L, neg_k), p=noise_p)], axis=1)
            labels = np.zeros(targets.shape)
            labels[:, 0] = 1.0
            # noise draws that hit the centre token are ignored
            live = np.ones(targets.shape, dtype=bool)
            live[:, 1:] = targets[:, 1:] != ids[:, None]
            scores = np.einsum("lkm,lm->lk", O[targets], h)
            ep_loss += float(-(np.where(labels > 0, log_expit(scores), log_expit(-scores)) * live).sum())
            ep_n += L
            g = (labels - expit(scores)) * live * alpha
            neu1e = np.einsum("lk,lkm->lm", g, O[targets])
            np.add.at(O, targets.ravel(), (g[..., None] * h[:, None, :]).reshape(-1, m))
            D[di] += neu1e.sum(0)
            np.add.at(W, ctx[valid], np.broadcast_to(neu1e[:, None, :], ctx.shape + (m,))[valid])
        history.append(ep_loss / max(ep_n, 1))
    cfg = {"m": m, "window": window, "negative_samples": neg_k, "epochs": epochs, "seed": seed}
    return ParagraphVectors({n: D[i].copy() for i, n in enumerate(names)},
                            {w: W[i].copy() for i, w in enumerate(words)},
                            cfg, tuple(history))


def cosine(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroVector("cosine of a zero vector is undefined")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def negatives_semantic(concept: str, vocab: ConceptVocabulary, pv: ParagraphVectors,
                       ratio: float = 1.5, aggregate: str = "max",
                       objects: Iterable[str] | None = None) -> NegativeSet:
    """Most distant non-positive objects by paragraph-vector cosine.

    Candidates are ranked by their maximum cosine to any positive document
    (``aggregate="max"``) or by cosine to the positives' centroid
    (``"centroid"``); the lowest ``ceil(ratio * |positives|)`` are kept.
    ``objects`` limits both positives and candidates (e.g. to training folds).
    """
    if not ratio > 0:
        raise InvalidConfig("ratio must be > 0")
    if aggregate not in ("max", "centroid"):
        raise InvalidConfig(f"unknown aggregate {aggregate!r}")
    universe = set(pv.doc_vectors) if objects is None else set(objects) & set(pv.doc_vectors)
    positives = sorted(vocab.positives(concept) & universe)
    candidates = sorted(universe - vocab.positives(concept))
    if not candidates:
        raise NoNegativesAvailable(f"no non-positive objects for {concept!r}")
    if not positives:
        raise NoNegativesAvailable(f"no positive documents to rank against for {concept!r}")
    pos_vecs = [pv.doc_vectors[o] for o in positives]
    if aggregate == "centroid":
        centroid = np.mean(pos_vecs, axis=0)
        score = {o: cosine(pv.doc_vectors[o], centroid) for o in candidates}
    else:
        score = {o: max(cosine(pv.doc_vectors[o], p) for p in pos_vecs) for o in candidates}
    n_take = min(len(candidates), max(1, math.ceil(ratio * len(positives))))
    chosen = sorted(candidates, key=lambda o: (score[o], o))[:n_take]
    return NegativeSet(concept, SEMANTIC_DISTANT, frozenset(chosen))


def export_doc_vectors(pv: ParagraphVectors, path) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["object_id"] + [f"v{j}" for j in range(pv.dim)])
            for oid in sorted(pv.doc_vectors):
                w.writerow([oid] + [repr(float(v)) for v in pv.doc_vectors[oid]])
    except OSError as exc:
        raise IoError(f"cannot write doc vectors {path}: {exc}") from exc
