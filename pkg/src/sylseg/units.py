"""Two-stage clustering of segment features into syllabic units.

A large k-means inventory is fit first, then its centroids are merged by
average-linkage agglomeration. A segment's unit is the coarse cluster of its
nearest fine centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .core import Segment, Segmentation, UtteranceEmbedding, iter_jsonl, read_embedding, write_embedding, write_jsonl

FINE_CLUSTERS = 16384
COARSE_CLUSTERS = 4096


class TooFewPoints(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ClusterModel:
    fine_centroids: np.ndarray
    merge_map: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        c = np.asarray(self.fine_centroids, dtype=np.float64)
        mm = np.asarray(self.merge_map, dtype=np.int64)
        if c.ndim != 2 or mm.shape != (c.shape[0],):
            raise ValueError(f"merge_map shape {mm.shape} does not match {c.shape[0]} centroids")
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite centroids")
        n_coarse = int(mm.max()) + 1 if mm.size else 0
        if mm.min(initial=0) < 0 or len(np.unique(mm)) != n_coarse:
            raise ValueError("merge_map must be surjective onto [0, K')")
        object.__setattr__(self, "fine_centroids", c)
        object.__setattr__(self, "merge_map", mm)

    @property
    def n_fine(self) -> int:
        return self.fine_centroids.shape[0]

    @property
    def n_coarse(self) -> int:
        return int(self.merge_map.max()) + 1

    @property
    def dim(self) -> int:
        return self.fine_centroids.shape[1]

    def save(self, directory) -> None:
        """Write ``header.json``, ``centroids.uemb`` and ``merge_map.json`` into ``directory``."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        header = {"K": self.n_fine, "K_prime": self.n_coarse, "D": self.dim, "seed": self.seed}
        (d / "header.json").write_text(json.dumps(header) + "\n")
        # frame_rate is meaningless for centroids; 1.0 keeps the container valid
        write_embedding(d / "centroids.uemb", UtteranceEmbedding("centroids", self.fine_centroids, 1.0))
        (d / "merge_map.json").write_text(json.dumps([int(v) for v in self.merge_map]) + "\n")

    @classmethod
    def load(cls, directory) -> "ClusterModel":
        d = Path(directory)
        header = json.loads((d / "header.json").read_text())
        centroids = read_embedding(d / "centroids.uemb").frames
        merge_map = np.asarray(json.loads((d / "merge_map.json").read_text()), dtype=np.int64)
        if centroids.shape != (header["K"], header["D"]) or int(merge_map.max()) + 1 != header["K_prime"]:
            raise ValueError(f"{d}: header does not match stored arrays")
        return cls(centroids, merge_map, header.get("seed"))


@dataclass(frozen=True, eq=False)
class UnitAssignment:
    utterance_id: str
    segments: tuple[Segment, ...]
    features: np.ndarray
    units: tuple[int, ...]
    frame_rate: float | None = None

    def to_record(self) -> dict:
        return {
            "utterance_id": self.utterance_id,
            "frame_rate": self.frame_rate,
            "entries": [
                {"segment": s.as_list(), "unit": int(u), "feature": [float(v) for v in feat]}
                for s, u, feat in zip(self.segments, self.units, self.features)
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "UnitAssignment":
        entries = rec["entries"]
        segs = tuple(Segment(*e["segment"]) for e in entries)
        feats = np.asarray([e["feature"] for e in entries], dtype=np.float64)
        units = tuple(int(e["unit"]) for e in entries)
        rate = rec.get("frame_rate")
        return cls(str(rec["utterance_id"]), segs, feats, units, None if rate is None else float(rate))


def write_assignments(path, items: Sequence[UnitAssignment]) -> None:
    write_jsonl(path, (a.to_record() for a in items))


def read_assignments(path) -> list[UnitAssignment]:
    return [UnitAssignment.from_record(r) for r in iter_jsonl(path)]


def segment_features(f: UtteranceEmbedding, seg: Segmentation) -> np.ndarray:
    """Mean frame of every segment, as an ``n_segments x D`` array."""
    out = np.empty((len(seg.segments), f.dim))
    for i, s in enumerate(seg.segments):
        if s.end_frame > f.num_frames:
            raise ValueError(f"{seg.utterance_id}: segment {s} exceeds T={f.num_frames}")
        out[i] = f.frames[s.start_frame : s.end_frame].mean(axis=0)
    return out


# ---------------------------------------------------------------------------
# k-means


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    return cdist(points, centroids, "sqeuclidean")


def kmeans_plusplus(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    idx = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[idx])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a chosen centre
            remaining = np.setdiff1d(np.arange(n), idx)
            nxt = int(rng.choice(remaining))
        else:
            nxt = int(rng.choice(n, p=d2 / total))
        idx.append(nxt)
        d2 = np.minimum(d2, _sq_dists(points, points[nxt : nxt + 1])[:, 0])
    return points[idx].copy()


def kmeans_fit(
    points,
    k: int,
    seed: int = 0,
    max_iters: int = 100,
    tol: float = 1e-6,
    history: list[float] | None = None,
) -> np.ndarray:
    """Lloyd's algorithm from a k-means++ start.

    If ``history`` is given, the objective after each assignment step is
    appended to it.
    """
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise TooFewPoints(f"need at least {k} points, got {n}")
    rng = np.random.default_rng(seed)
    centroids = kmeans_plusplus(points, k, rng)
    prev = np.inf
    for _ in range(max_iters):
        d2 = _sq_dists(points, centroids)
        labels = np.argmin(d2, axis=1)
        own = d2[np.arange(n), labels]
        obj = float(own.sum())
        if history is not None:
            history.append(obj)
        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        nonempty = counts > 0
        centroids[nonempty] = sums[nonempty] / counts[nonempty, None]
        empty = np.flatnonzero(~nonempty)
        if empty.size:
            # farthest points from their own centroid, most distant first, ties by index
            order = np.lexsort((np.arange(n), -own))
            for j, p in zip(empty, order):
                centroids[j] = points[p]
        if np.isfinite(prev) and prev - obj <= tol * max(prev, 1e-300) and not empty.size:
            break
        prev = obj
    return centroids


# ---------------------------------------------------------------------------
# Agglomeration


def agglomerate(fine_centroids, target: int) -> np.ndarray:
    """Average-linkage merge of centroids down to ``target`` groups.

    Each group is identified by its smallest member index; among equally near
    pairs the lexicographically smallest ``(i, j)`` merges first. Coarse ids
    are numbered in order of the groups' smallest member.
    """
    c = np.asarray(fine_centroids, dtype=np.float64)
    k = c.shape[0]
    if not 1 <= target <= k:
        raise ValueError(f"target must be in [1, {k}], got {target}")
    dist = cdist(c, c, "euclidean")
    size = np.ones(k)
    active = np.ones(k, dtype=bool)
    owner = np.arange(k)
    iu = np.triu(np.ones((k, k), dtype=bool), 1)
    dist[~iu] = np.inf
    for _ in range(k - target):
        flat = int(np.argmin(dist))
        i, j = divmod(flat, k)
        # Lance-Williams update for average linkage; the upper triangle holds d(lo, hi)
        ni, nj = size[i], size[j]
        di = np.minimum(dist[i], dist[:, i])
        dj = np.minimum(dist[j], dist[:, j])
        merged = (ni * di + nj * dj) / (ni + nj)
        dist[j, :] = np.inf
        dist[:, j] = np.inf
        active[j] = False
        act = np.flatnonzero(active)
        lo, hi = act[act < i], act[act > i]
        dist[lo, i] = merged[lo]
        dist[i, hi] = merged[hi]
        size[i] = ni + nj
        owner[owner == j] = i
    roots = np.unique(owner)
    relabel = {int(r): n for n, r in enumerate(roots)}
    return np.array([relabel[int(o)] for o in owner], dtype=np.int64)


def fit_cluster_model(features, n_fine: int, n_coarse: int, seed: int = 0, max_iters: int = 100) -> ClusterModel:
    centroids = kmeans_fit(features, n_fine, seed=seed, max_iters=max_iters)
    return ClusterModel(centroids, agglomerate(centroids, n_coarse), seed)


def assign_units(features, model: ClusterModel) -> np.ndarray:
    feats = np.atleast_2d(np.asarray(features, dtype=np.float64))
    if feats.size == 0:
        return np.zeros(0, dtype=np.int64)
    if feats.shape[1] != model.dim:
        raise ValueError(f"feature dim {feats.shape[1]} != model dim {model.dim}")
    nearest = np.argmin(_sq_dists(feats, model.fine_centroids), axis=1)
    return model.merge_map[nearest]


def assign_utterance(f: UtteranceEmbedding, seg: Segmentation, model: ClusterModel) -> UnitAssignment:
    feats = segment_features(f, seg)
    units = assign_units(feats, model) if len(seg.segments) else np.zeros(0, dtype=np.int64)
    return UnitAssignment(seg.utterance_id, seg.segments, feats, tuple(int(u) for u in units), f.frame_rate)
