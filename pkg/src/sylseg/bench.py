"""Timing of per-segment refinement against a single global minimum cut."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from typing import Sequence

from .core import frame_norms
from .segment import SegmentationConfig, _gram, global_mincut, segment_utterance, suggest_norm_threshold
from .synthetic import bench_utterance


@dataclass
class BenchConfig:
    local_frames: Sequence[int] = (4000, 8000, 16000)
    global_frames: Sequence[int] = (1000, 2000, 4000)
    syllable_frames: int = 20
    syllables_per_segment: int = 2
    dim: int = 16
    repeats: int = 7
    global_repeats: int = 1
    seed: int = 0

    def __post_init__(self):
        for t in list(self.local_frames) + list(self.global_frames):
            if int(t) <= 0:
                raise ValueError(f"frame counts must be positive, got {t}")
        if self.syllable_frames < 1 or self.syllables_per_segment < 1 or self.repeats < 1 or self.global_repeats < 1:
            raise ValueError("syllable_frames, syllables_per_segment and repeat counts must be >= 1")


@dataclass
class BenchRow:
    path: str
    num_frames: int
    num_blocks: int
    seconds: float
    ratio: float | None = None


def _best_time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _attach_ratios(rows: list[BenchRow]) -> None:
    by_t = {r.num_frames: r for r in rows}
    for r in rows:
        half = by_t.get(r.num_frames // 2) if r.num_frames % 2 == 0 else None
        if half is not None and half.seconds > 0:
            r.ratio = r.seconds / half.seconds


def run_bench(cfg: BenchConfig) -> list[BenchRow]:
    """Best-of-``repeats`` wall-clock per path and size; ratios are vs. half the frames."""
    local: list[BenchRow] = []
    for t in cfg.local_frames:
        e, f = bench_utterance(int(t), cfg.syllable_frames, cfg.syllables_per_segment, cfg.dim, cfg.seed)
        seg_cfg = SegmentationConfig(suggest_norm_threshold([frame_norms(e)]))
        result = segment_utterance(e, f, seg_cfg)
        secs = _best_time(lambda: segment_utterance(e, f, seg_cfg), cfg.repeats)
        local.append(BenchRow("per_segment", int(t), len(result), secs))
    glob: list[BenchRow] = []
    for t in cfg.global_frames:
        _, f = bench_utterance(int(t), cfg.syllable_frames, cfg.syllables_per_segment, cfg.dim, cfg.seed)
        k = max(1, int(t) // cfg.syllable_frames)
        secs = _best_time(lambda: global_mincut(_gram(f.frames), k), cfg.global_repeats)
        glob.append(BenchRow("global", int(t), k, secs))
    _attach_ratios(local)
    _attach_ratios(glob)
    return local + glob


def write_bench_csv(path, rows: Sequence[BenchRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "num_frames", "num_blocks", "seconds", "ratio_vs_half"])
        for r in rows:
            w.writerow([r.path, r.num_frames, r.num_blocks, f"{r.seconds:.6f}", "" if r.ratio is None else f"{r.ratio:.3f}"])
