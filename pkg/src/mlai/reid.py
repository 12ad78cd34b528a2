"""Galleries, ranking and two-way re-identification scoring.

A tracking sensor broadcasts a probe descriptor. Each assistant keeps the
gallery entries whose cosine to the probe clears a threshold and sends them
back. The tracking sensor ranks its own gallery against every returned
candidate, counts how often the tracked object lands in the top k (``z``)
and how often that candidate was received (``t``), and scores it as
``phi = z * t * cos``. The coordinator hands over to the assistant holding
the largest positive ``phi``.
"""
import struct
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_positive_int, check_unit_interval
from .errors import ConfigMismatch, EmptyGallery
from .features import FeatureVector, cosine_similarity

DEFAULT_THRESHOLD = 0.60
DEFAULT_TOP_K = 20


@dataclass(frozen=True)
class GalleryEntry:
    object_id: int
    feature: FeatureVector
    frame_index: int


@dataclass(frozen=True)
class Gallery:
    owner: int
    entries: tuple = ()
    config_id: int = None

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def matrix(self):
        if not self.entries:
            return np.zeros((0, 0))
        return np.stack([e.feature.values for e in self.entries])

    def object_ids(self):
        return list(dict.fromkeys(e.object_id for e in self.entries))


@dataclass(frozen=True)
class MatchEvidence:
    """Top-k hits ``z`` and receipts ``t`` for one (assistant, object) pair."""

    assistant: int = 0
    object_id: int = 0
    z: int = 0
    t: int = 0

    def __post_init__(self):
        if self.z < 0 or self.t < 0 or self.z > self.t:
            raise ValueError(f"evidence needs 0 <= z <= t, got z={self.z} t={self.t}")


@dataclass(frozen=True)
class HandoverScore:
    assistant: int
    object_id: int
    phi: float
    cosine: float


def _check_config(gallery, feature):
    if gallery.config_id is not None and feature.config_id != gallery.config_id:
        raise ConfigMismatch(f"feature config {feature.config_id} != gallery config {gallery.config_id}")


def gallery_add(g, object_id, feature, frame_index):
    _check_config(g, feature)
    for e in g.entries:
        if e.object_id == object_id and e.frame_index == frame_index:
            return g
    entry = GalleryEntry(int(object_id), feature, int(frame_index))
    return replace(g, entries=g.entries + (entry,), config_id=feature.config_id)


def _cosines(probe, g):
    """Cosine of the probe to every gallery entry, in insertion order."""
    if not g.entries:
        return np.zeros(0)
    mat = g.matrix()
    norms = np.linalg.norm(mat, axis=1) * np.linalg.norm(probe.values)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = mat @ probe.values / norms
    return np.clip(np.nan_to_num(cos), -1.0, 1.0)


def assistant_filter(probe, g, threshold=DEFAULT_THRESHOLD):
    """Entries whose cosine to ``probe`` is at least ``threshold``, best first.

    Returns ``(object_id, feature, cosine)`` triples; equal cosines keep
    gallery order.
    """
    threshold = check_unit_interval(threshold, "threshold")
    _check_config(g, probe)
    cos = _cosines(probe, g)
    keep = [i for i in np.argsort(-cos, kind="stable") if cos[i] >= threshold]
    return [(g.entries[i].object_id, g.entries[i].feature, float(cos[i])) for i in keep]


def rank_gallery(probe, g):
    """Distinct object ids by their best cosine to ``probe``, descending."""
    if not g.entries:
        raise EmptyGallery("cannot rank an empty gallery")
    _check_config(g, probe)
    cos = _cosines(probe, g)
    best = {}
    for e, c in zip(g.entries, cos):
        if e.object_id not in best or c > best[e.object_id]:
            best[e.object_id] = float(c)
    # dicts keep first-insertion order, so a stable sort breaks ties by gallery order
    return sorted(best.items(), key=lambda kv: -kv[1])


def topk_update(ranked, target_id, k, ev):
    k = check_positive_int(k, "k")
    hit = any(oid == target_id for oid, _ in ranked[:k])
    return replace(ev, z=ev.z + int(hit), t=ev.t + 1)


def weighted_score(x, y, ev):
    if x.config_id != y.config_id:
        raise ConfigMismatch(f"feature configs differ: {x.config_id} vs {y.config_id}")
    cos = cosine_similarity(x, y)
    return HandoverScore(ev.assistant, ev.object_id, ev.z * ev.t * cos, cos)


def decide_handover(scores):
    """Assistant with the largest positive phi; ties go to the lowest id."""
    best = None
    for s in scores:
        if s.phi <= 0:
            continue
        if best is None or s.phi > best.phi or (s.phi == best.phi and s.assistant < best.assistant):
            best = s
    return None if best is None else best.assistant


def one_way_decide(probe, assistant_galleries, threshold=DEFAULT_THRESHOLD):
    """Baseline: the assistant owning the single best cosine above threshold."""
    best_id, best_cos = None, None
    for sid in sorted(assistant_galleries):
        g = assistant_galleries[sid]
        if not g.entries:
            continue
        c = float(_cosines(probe, g).max())
        if c >= threshold and (best_cos is None or c > best_cos):
            best_id, best_cos = sid, c
    return best_id


# -- wire format --------------------------------------------------------------

_SCORE = struct.Struct(">HIdd")
SCORE_SIZE = _SCORE.size  # 22


def pack_score(s):
    return _SCORE.pack(s.assistant, s.object_id, s.phi, s.cosine)


def unpack_score(data, offset=0):
    return HandoverScore(*_SCORE.unpack_from(data, offset))


# -- estimator ----------------------------------------------------------------


@dataclass
class EvidenceBook:
    """Evidence counters of one handover episode, keyed by (assistant, object)."""

    target_id: int
    k: int = DEFAULT_TOP_K
    evidence: dict = field(default_factory=dict)

    def record(self, assistant, object_id, candidate, gallery):
        """Back-match ``candidate`` against ``gallery`` and score it.

        The cosine in the score is the candidate's best match among the
        tracked object's own gallery entries.
        """
        ranked = rank_gallery(candidate, gallery)
        key = (assistant, object_id)
        ev = self.evidence.get(key, MatchEvidence(assistant, object_id))
        ev = topk_update(ranked, self.target_id, self.k, ev)
        self.evidence[key] = ev
        ref = best_entry(candidate, gallery, self.target_id)
        if ref is None:
            return HandoverScore(assistant, object_id, 0.0, 0.0)
        return weighted_score(ref, candidate, ev)

    def reset(self):
        self.evidence.clear()


def best_entry(probe, gallery, object_id):
    """Feature of ``object_id`` in ``gallery`` closest to ``probe``, or None."""
    idx = [i for i, e in enumerate(gallery.entries) if e.object_id == object_id]
    if not idx:
        return None
    cos = _cosines(probe, gallery)
    return gallery.entries[max(idx, key=lambda i: (cos[i], -i))].feature


class GalleryMatcher(ClassifierMixin, BaseEstimator):
    """Nearest-identity matcher over a gallery of descriptor rows.

    ``fit(X, y)`` stores descriptors ``X`` labelled with object ids ``y``.
    ``predict`` returns the best-ranked id per probe row, or -1 when no
    gallery entry reaches ``threshold``.
    """

    def __init__(self, threshold=DEFAULT_THRESHOLD, top_k=DEFAULT_TOP_K):
        self.threshold = threshold
        self.top_k = top_k

    def fit(self, X, y):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-D with one id per row")
        g = Gallery(owner=0)
        for i, (row, oid) in enumerate(zip(X, y)):
            g = gallery_add(g, int(oid), FeatureVector(row, 0), i)
        self.gallery_ = g
        self.classes_ = np.unique(y)
        self.n_features_in_ = X.shape[1]
        return self

    def rank(self, probe):
        check_is_fitted(self, "gallery_")
        return rank_gallery(FeatureVector(probe, 0), self.gallery_)

    def predict(self, X):
        check_is_fitted(self, "gallery_")
        out = []
        for row in np.atleast_2d(np.asarray(X, dtype=np.float64)):
            ranked = rank_gallery(FeatureVector(row, 0), self.gallery_)
            oid, cos = ranked[0]
            out.append(oid if cos >= self.threshold else -1)
        return np.asarray(out)

    def in_top_k(self, X, y):
        """Whether each probe's true id ``y`` ranks within ``top_k``."""
        check_is_fitted(self, "gallery_")
        hits = []
        for row, oid in zip(np.atleast_2d(np.asarray(X, dtype=np.float64)), y):
            ranked = rank_gallery(FeatureVector(row, 0), self.gallery_)
            hits.append(any(r == oid for r, _ in ranked[: self.top_k]))
        return np.asarray(hits)
