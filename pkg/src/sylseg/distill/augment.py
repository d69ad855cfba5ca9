"""Frame masking and time warping applied to encoder inputs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

MASK = "MASK"
TIMEWARP = "TIMEWARP"


@dataclass(frozen=True)
class AugmentationSpec:
    kind: str
    mask_prob: float = 0.15
    warp_window: int = 5

    def __post_init__(self):
        if self.kind not in (MASK, TIMEWARP):
            raise ValueError(f"unknown augmentation {self.kind!r}")
        if not 0.0 <= self.mask_prob <= 1.0:
            raise ValueError("mask_prob must be in [0, 1]")
        if self.warp_window < 0:
            raise ValueError("warp_window must be >= 0")


class View(NamedTuple):
    """Augmented frames plus the positions that the model's mask token replaces."""

    frames: np.ndarray
    masked: np.ndarray

    def materialize(self, mask_token: np.ndarray) -> np.ndarray:
        out = self.frames.copy()
        out[self.masked] = mask_token
        return out


def time_warp(x: np.ndarray, anchor: int, shift: int) -> np.ndarray:
    """Move frame ``anchor`` to ``anchor + shift``, linearly resampling both sides."""
    t = x.shape[0]
    if shift == 0 or t < 3:
        return x.copy()
    target = anchor + shift
    out_pos = np.arange(t, dtype=np.float64)
    src = np.where(
        out_pos <= target,
        out_pos * anchor / target,
        anchor + (out_pos - target) * (t - 1 - anchor) / (t - 1 - target),
    )
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, t - 1)
    w = (src - lo)[:, None]
    return (1.0 - w) * x[lo] + w * x[hi]


def augment(x: np.ndarray, spec: AugmentationSpec, rng: np.random.Generator) -> View:
    x = np.asarray(x, dtype=np.float64)
    t = x.shape[0]
    if spec.kind == MASK:
        masked = rng.random(t) < spec.mask_prob
        return View(x.copy(), masked)
    no_mask = np.zeros(t, dtype=bool)
    if spec.warp_window == 0 or t < 3:
        return View(x.copy(), no_mask)
    anchor = int(rng.integers(1, t - 1))
    lo = max(1 - anchor, -spec.warp_window)
    hi = min(t - 2 - anchor, spec.warp_window)
    shift = int(rng.integers(lo, hi + 1))
    return View(time_warp(x, anchor, shift), no_mask)


def random_augment(x: np.ndarray, specs, rng: np.random.Generator) -> View:
    """Apply one augmentation drawn uniformly from ``specs``."""
    spec = specs[int(rng.integers(len(specs)))]
    return augment(x, spec, rng)
