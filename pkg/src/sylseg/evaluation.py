"""Boundary and purity metrics against forced-alignment syllables."""

from __future__ import annotations

import json
import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import SyllableSpan
from .hungarian import hungarian
from .units import UnitAssignment

DEFAULT_TOLERANCE_S = 0.05
# absorbs float error in frame/rate conversions, e.g. 0.07 - 0.02 > 0.05
_EPS = 1e-9


class Unsorted(ValueError):
    pass


class MissingAlignment(KeyError):
    def __init__(self, ids):
        self.ids = list(ids)
        super().__init__(f"no alignment for utterances: {self.ids[:10]}")


@dataclass
class BoundaryMetrics:
    precision: float
    recall: float
    f1: float
    r_value: float
    over_segmentation: float
    n_ref: int
    n_pred: int
    n_hit: int


@dataclass
class PurityMetrics:
    syllable_purity: float
    cluster_purity: float
    contingency: dict = field(default_factory=dict)
    matching: list = field(default_factory=list)


@dataclass
class MetricsReport:
    boundary: BoundaryMetrics
    purity: PurityMetrics | None = None

    def to_dict(self) -> dict:
        out = {"boundary": asdict(self.boundary)}
        if self.purity is not None:
            out["purity"] = {
                "syllable_purity": self.purity.syllable_purity,
                "cluster_purity": self.purity.cluster_purity,
                "n_units": len({u for u, _ in self.purity.contingency}),
                "n_syllables": len({s for _, s in self.purity.contingency}),
                "matching": [[int(u), s] for u, s in self.purity.matching],
            }
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def table(self) -> str:
        """Aligned percent table with columns Pr Re F1 R [SP CP]."""
        b = self.boundary
        cols = [("Pr", b.precision), ("Re", b.recall), ("F1", b.f1), ("R", b.r_value)]
        if self.purity is not None:
            cols += [("SP", self.purity.syllable_purity), ("CP", self.purity.cluster_purity)]
        head = " | ".join(f"{name:>6}" for name, _ in cols)
        vals = " | ".join(f"{100 * v:6.2f}" for _, v in cols)
        rule = "-" * len(head)
        return "\n".join([head, rule, vals])


def _check_sorted(xs: Sequence[float], name: str) -> None:
    for a, b in zip(xs, xs[1:]):
        if b < a:
            raise Unsorted(f"{name} boundaries are not sorted ascending")


def within_tolerance(a: float, b: float, tol_s: float) -> bool:
    return abs(a - b) <= tol_s + _EPS


def match_boundaries(ref: Sequence[float], pred: Sequence[float], tol_s: float = DEFAULT_TOLERANCE_S) -> int:
    """Size of the largest one-to-one matching within ``tol_s``.

    Two-pointer greedy sweep; optimal because both sides are points on a line.
    """
    if tol_s < 0:
        raise ValueError("tolerance must be >= 0")
    ref = list(ref)
    pred = list(pred)
    _check_sorted(ref, "reference")
    _check_sorted(pred, "predicted")
    i = j = hits = 0
    while i < len(ref) and j < len(pred):
        if within_tolerance(ref[i], pred[j], tol_s):
            hits += 1
            i += 1
            j += 1
        elif pred[j] < ref[i]:
            j += 1
        else:
            i += 1
    return hits


def metrics_from_counts(n_ref: int, n_pred: int, n_hit: int) -> BoundaryMetrics:
    pr = n_hit / n_pred if n_pred else 0.0
    re = n_hit / n_ref if n_ref else 0.0
    f1 = 2 * pr * re / (pr + re) if pr + re > 0 else 0.0
    if pr == 0:
        os_, r_value = 0.0, 0.0
    else:
        os_ = re / pr - 1
        r1 = math.sqrt((1 - re) ** 2 + os_**2)
        r2 = (-os_ + re - 1) / math.sqrt(2)
        r_value = 1 - (abs(r1) + abs(r2)) / 2
    return BoundaryMetrics(pr, re, f1, r_value, os_, n_ref, n_pred, n_hit)


def boundary_metrics(ref, pred, tol_s: float = DEFAULT_TOLERANCE_S) -> BoundaryMetrics:
    return metrics_from_counts(len(ref), len(pred), match_boundaries(ref, pred, tol_s))


def corpus_boundary_metrics(pairs: Iterable[tuple[Sequence[float], Sequence[float]]], tol_s=DEFAULT_TOLERANCE_S):
    """Pool hit counts over ``(ref, pred)`` pairs of many utterances."""
    n_ref = n_pred = n_hit = 0
    for ref, pred in pairs:
        n_ref += len(ref)
        n_pred += len(pred)
        n_hit += match_boundaries(ref, pred, tol_s)
    return metrics_from_counts(n_ref, n_pred, n_hit)


def reference_boundaries(spans: Sequence[SyllableSpan]) -> list[float]:
    """Syllable onsets, the counterpart of predicted segment onsets."""
    return sorted(s.start_s for s in spans)


def span_frames(span: SyllableSpan, frame_rate: float) -> tuple[int, int]:
    """Frame range of a span: start rounded up, end rounded down."""
    start = math.ceil(span.start_s * frame_rate - _EPS)
    end = math.floor(span.end_s * frame_rate + _EPS)
    return start, max(start, end)


def build_contingency(
    assignments: Sequence[UnitAssignment],
    alignments: Mapping[str, Sequence[SyllableSpan]],
    frame_rate: float,
) -> tuple[dict, dict, dict]:
    """Frame overlap between units and syllable labels, pooled over the corpus.

    Returns ``(overlap[(unit, label)], unit_frames[unit], syllable_frames[label])``.
    """
    missing = [a.utterance_id for a in assignments if a.utterance_id not in alignments]
    if missing:
        raise MissingAlignment(missing)
    overlap: dict = defaultdict(int)
    unit_frames: dict = defaultdict(int)
    syl_frames: dict = defaultdict(int)
    for a in assignments:
        rate = a.frame_rate or frame_rate
        spans = [(s.label, *span_frames(s, rate)) for s in alignments[a.utterance_id]]
        for label, s0, s1 in spans:
            syl_frames[label] += s1 - s0
        for seg, unit in zip(a.segments, a.units):
            unit_frames[unit] += len(seg)
            for label, s0, s1 in spans:
                ov = min(seg.end_frame, s1) - max(seg.start_frame, s0)
                if ov > 0:
                    overlap[(unit, label)] += ov
    return dict(overlap), dict(unit_frames), dict(syl_frames)


def purity_metrics(
    assignments: Sequence[UnitAssignment],
    alignments: Mapping[str, Sequence[SyllableSpan]],
    frame_rate: float,
) -> PurityMetrics:
    overlap, unit_frames, syl_frames = build_contingency(assignments, alignments, frame_rate)
    units = sorted(unit_frames)
    labels = sorted(syl_frames)
    total_u = sum(unit_frames.values())
    total_s = sum(syl_frames.values())
    if not units or not labels or total_u == 0 or total_s == 0:
        return PurityMetrics(0.0, 0.0, overlap, [])
    ui = {u: n for n, u in enumerate(units)}
    si = {s: n for n, s in enumerate(labels)}
    ov = np.zeros((len(units), len(labels)))
    for (u, s), c in overlap.items():
        ov[ui[u], si[s]] = c
    uf = np.array([unit_frames[u] for u in units], dtype=np.float64)[:, None]
    sf = np.array([syl_frames[s] for s in labels], dtype=np.float64)[None, :]
    union = uf + sf - ov
    iou = np.divide(ov, union, out=np.zeros_like(ov), where=union > 0)
    pairs = hungarian(iou, maximize=True)
    matched = sum(ov[i, j] for i, j in pairs)
    return PurityMetrics(
        syllable_purity=float(matched / total_u),
        cluster_purity=float(matched / total_s),
        contingency=overlap,
        matching=[(units[i], labels[j]) for i, j in pairs],
    )
