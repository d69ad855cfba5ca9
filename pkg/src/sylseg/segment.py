"""Norm-threshold segmentation refined by a per-segment minimum cut.

Late layers of a self-distilled encoder suppress the norm of frames near
syllable boundaries, so thresholding the norm gives a cheap first cut. Each
coarse segment can still hold up to three syllables; a contiguous-partition
dynamic program over the frame similarity matrix splits it further.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .core import (
    Segment,
    Segmentation,
    UtteranceEmbedding,
    frame_norms,
    iter_jsonl,
    write_jsonl,
)


class ShapeMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SegmentationConfig:
    norm_threshold: float
    max_cuts_per_segment: int = 3
    split_gain_threshold: float = 0.05
    min_segment_frames: int = 2

    def __post_init__(self):
        if not self.norm_threshold >= 0:
            raise ValueError(f"norm_threshold must be >= 0, got {self.norm_threshold}")
        if self.max_cuts_per_segment < 1:
            raise ValueError("max_cuts_per_segment must be >= 1")
        if not self.split_gain_threshold >= 0:
            raise ValueError("split_gain_threshold must be >= 0")
        if self.min_segment_frames < 1:
            raise ValueError("min_segment_frames must be >= 1")


def suggest_norm_threshold(norms: Iterable[np.ndarray], scale: float = 0.5) -> float:
    """Half the median frame norm over a calibration set."""
    pooled = np.concatenate([np.asarray(n, dtype=np.float64).ravel() for n in norms])
    if pooled.size == 0:
        raise ValueError("empty calibration set")
    return float(np.median(pooled) * scale)


def norm_threshold_segment(norms, cfg: SegmentationConfig, utterance_id: str = "") -> Segmentation:
    norms = np.asarray(norms, dtype=np.float64)
    above = np.concatenate([[False], norms > cfg.norm_threshold, [False]])
    edges = np.flatnonzero(np.diff(above.astype(np.int8)))
    starts, ends = edges[0::2], edges[1::2]
    segs = [Segment(int(s), int(e)) for s, e in zip(starts, ends) if e - s >= cfg.min_segment_frames]
    return Segmentation(utterance_id, tuple(segs))


# ---------------------------------------------------------------------------
# Minimum-cut dynamic program


def block_mass_table(S: np.ndarray) -> np.ndarray:
    """``W[a, b]`` = mass of ``S[a:b, a:b]`` divided by ``b - a`` for ``a < b``; -inf elsewhere."""
    S = np.asarray(S, dtype=np.float64)
    m = S.shape[0]
    P = np.zeros((m + 1, m + 1))
    P[1:, 1:] = S.cumsum(0).cumsum(1)
    d = np.diagonal(P).copy()
    # in place: W[a, b] = P[b, b] - P[a, b] - P[b, a] + P[a, a]
    W = -P
    W -= P.T
    W += d[None, :]
    W += d[:, None]
    idx = np.arange(m + 1, dtype=np.float64)
    length = idx[None, :] - idx[:, None]
    valid = length > 0
    np.divide(W, length, out=W, where=valid)
    W[~valid] = -np.inf
    return W


def mincut_dp(S: np.ndarray, max_k: int) -> tuple[np.ndarray, list[list[int]]]:
    """Best contiguous k-partition of ``[0, M)`` for every k up to ``max_k``.

    Returns ``scores`` (length max_k, entry k-1 is the optimum with k blocks)
    and the cut positions of each optimum, e.g. ``[0, 3, 6]`` for two blocks.
    """
    m = S.shape[0]
    max_k = min(max_k, m)
    W = block_mass_table(S)
    best = np.full((max_k + 1, m + 1), -np.inf)
    back = np.zeros((max_k + 1, m + 1), dtype=np.int64)
    best[0, 0] = 0.0
    for j in range(1, max_k + 1):
        cand = best[j - 1][:, None] + W
        arg = np.argmax(cand, axis=0)
        back[j] = arg
        best[j] = cand[arg, np.arange(m + 1)]
    scores = best[1:, m].copy()
    cuts = []
    for k in range(1, max_k + 1):
        pos = [m]
        b = m
        for j in range(k, 0, -1):
            b = int(back[j, b])
            pos.append(b)
        cuts.append(pos[::-1])
    return scores, cuts


def select_num_blocks(scores: np.ndarray, gain_threshold: float) -> int:
    """Largest k whose every step up from k-1 gains more than ``gain_threshold * score(1)``."""
    k = 1
    need = gain_threshold * scores[0]
    while k < len(scores) and scores[k] - scores[k - 1] > need:
        k += 1
    return k


def mincut_refine(S: np.ndarray, cfg: SegmentationConfig, offset: int = 0) -> list[Segment]:
    S = np.asarray(S, dtype=np.float64)
    scores, cuts = mincut_dp(S, cfg.max_cuts_per_segment)
    k = select_num_blocks(scores, cfg.split_gain_threshold)
    pos = cuts[k - 1]
    return [Segment(offset + a, offset + b) for a, b in zip(pos, pos[1:])]


def global_mincut(S: np.ndarray, k: int) -> list[int]:
    """Single whole-utterance partition into exactly ``k`` blocks, O(k N^2).

    This is the segmentation-from-scratch baseline the norm threshold
    replaces; kept for timing comparisons.
    """
    m = S.shape[0]
    k = min(k, m)
    # row b holds candidate block starts a, so the max runs over contiguous memory
    WT = np.ascontiguousarray(block_mass_table(S).T)
    prev = np.full(m + 1, -np.inf)
    prev[0] = 0.0
    backs = []
    cand = np.empty_like(WT)
    rows = np.arange(m + 1)
    for _ in range(k):
        np.add(WT, prev[None, :], out=cand)
        arg = np.argmax(cand, axis=1)
        backs.append(arg)
        prev = cand[rows, arg]
    pos = [m]
    b = m
    for arg in reversed(backs):
        b = int(arg[b])
        pos.append(b)
    return pos[::-1]


# ---------------------------------------------------------------------------
# Utterance-level pipeline


def segment_utterance(
    e: UtteranceEmbedding,
    f: UtteranceEmbedding,
    cfg: SegmentationConfig,
    mincut: bool = True,
) -> Segmentation:
    """Threshold norms of ``e``, then refine each run on the similarity of ``f``.

    ``mincut=False`` returns the coarse segments only.
    """
    if e.num_frames != f.num_frames or e.frame_rate != f.frame_rate:
        raise ShapeMismatch(
            f"{f.utterance_id}: norm layer has T={e.num_frames} @ {e.frame_rate} fps, "
            f"feature layer has T={f.num_frames} @ {f.frame_rate} fps"
        )
    coarse = norm_threshold_segment(frame_norms(e), cfg, f.utterance_id)
    if not mincut:
        return coarse
    out: list[Segment] = []
    for seg in coarse.segments:
        x = f.frames[seg.start_frame : seg.end_frame]
        out.extend(mincut_refine(_gram(x), cfg, offset=seg.start_frame))
    return Segmentation(f.utterance_id, tuple(out))


def _gram(x: np.ndarray) -> np.ndarray:
    s = x @ x.T
    return np.triu(s) + np.triu(s, 1).T


def boundaries_from_segments(seg: Segmentation, frame_rate: float) -> list[float]:
    return [s.start_frame / frame_rate for s in seg.segments]


# ---------------------------------------------------------------------------
# Segmentation files


def segmentation_record(seg: Segmentation, frame_rate: float) -> dict:
    return {
        "utterance_id": seg.utterance_id,
        "segments": [s.as_list() for s in seg.segments],
        "boundaries_s": boundaries_from_segments(seg, frame_rate),
        "frame_rate": frame_rate,
    }


def write_segmentations(path, items: Iterable[tuple[Segmentation, float]]) -> None:
    write_jsonl(path, (segmentation_record(seg, rate) for seg, rate in items))


def read_segmentations(path) -> list[tuple[Segmentation, float | None]]:
    out = []
    for rec in iter_jsonl(path):
        segs = tuple(Segment(int(a), int(b)) for a, b in rec["segments"])
        rate = rec.get("frame_rate")
        out.append((Segmentation(str(rec["utterance_id"]), segs), None if rate is None else float(rate)))
    return out
