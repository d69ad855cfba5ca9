"""Sentence-level self-distillation at toy scale.

The student sees one augmented view of a window, the EMA teacher another.
The teacher's aggregator logits are recentred and sharpened, carry no
gradient, and serve as the cross-entropy target for the student.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .augment import AugmentationSpec, random_augment
from .encoder import EncoderShape, Params, backward, copy_params, forward, init_params, reinit_top_layers


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class DistillConfig:
    dim: int = 16
    layers: int = 2
    hidden: int = 32
    classes: int = 4096
    teacher_temp: float = 0.04
    student_temp: float = 0.1
    center_momentum: float = 0.9
    ema_decay: float = 0.999
    lr_start: float = 1e-4
    lr_end: float = 1e-5
    weight_decay: float = 0.01
    steps: int = 200
    batch_size: int = 32
    seed: int = 0
    augmentations: str = "MASK,TIMEWARP"
    mask_prob: float = 0.15
    warp_window: int = 5
    max_window_s: float = 5.0
    frame_rate: float = 50.0
    positions: bool = True
    reinit_layers: int = 0
    head_scale: float = 0.1
    center_init: str = "first_batch"
    # synthetic corpus, used when no UEMB directory is given
    corpus_size: int = 64
    corpus_classes: int = 2

    def __post_init__(self):
        if self.teacher_temp <= 0 or self.student_temp <= 0:
            raise ValueError("temperatures must be > 0")
        if not 0 < self.center_momentum < 1:
            raise ValueError("center_momentum must be in (0, 1)")
        if not 0 <= self.ema_decay <= 1:
            raise ValueError("ema_decay must be in [0, 1]")
        if self.steps < 0 or self.batch_size < 1:
            raise ValueError("steps must be >= 0 and batch_size >= 1")
        if self.max_window_s <= 0 or self.frame_rate <= 0:
            raise ValueError("max_window_s and frame_rate must be > 0")
        if self.center_init not in ("zeros", "first_batch"):
            raise ValueError("center_init must be 'zeros' or 'first_batch'")
        self.augmentation_specs()
        EncoderShape(self.dim, self.layers, self.hidden, self.classes)

    def shape(self) -> EncoderShape:
        return EncoderShape(self.dim, self.layers, self.hidden, self.classes)

    def augmentation_specs(self) -> list[AugmentationSpec]:
        kinds = [k.strip().upper() for k in self.augmentations.split(",") if k.strip()]
        if not kinds:
            raise ValueError("at least one augmentation is required")
        return [AugmentationSpec(k, self.mask_prob, self.warp_window) for k in kinds]

    @property
    def max_window_frames(self) -> int:
        return max(1, int(math.floor(self.max_window_s * self.frame_rate + 1e-9)))

    @classmethod
    def from_mapping(cls, values: dict) -> "DistillConfig":
        kwargs = {}
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        defaults = cls()
        for key, raw in values.items():
            name = key.replace("-", "_")
            if name not in types:
                raise ValueError(f"unknown distill config key {key!r}")
            kwargs[name] = _coerce(raw, type(getattr(defaults, name)))
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "DistillConfig":
        return cls.from_mapping(read_config_file(path))


def read_config_file(path) -> dict[str, str]:
    """Key-value text: ``key = value`` per line, ``#`` comments, no sections needed."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    with open(path, encoding="utf-8") as fh:
        parser.read_string("[config]\n" + fh.read())
    return dict(parser["config"])


def _coerce(raw, kind):
    if not isinstance(raw, str):
        return kind(raw)
    if kind is bool:
        low = raw.strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    return kind(raw.strip())


@dataclass
class DistillState:
    student: Params
    teacher: Params
    center: np.ndarray
    ema_decay: float = 0.999
    teacher_temp: float = 0.04
    student_temp: float = 0.1
    center_momentum: float = 0.9
    positions: bool = True

    @classmethod
    def create(cls, cfg: DistillConfig, rng: np.random.Generator, init: Params | None = None) -> "DistillState":
        student = copy_params(init) if init is not None else init_params(cfg.shape(), rng, cfg.head_scale)
        if cfg.reinit_layers:
            student = reinit_top_layers(student, cfg.reinit_layers, rng)
        return cls(
            student=student,
            teacher=copy_params(student),
            center=np.zeros(student["head.b2"].shape[0]),
            ema_decay=cfg.ema_decay,
            teacher_temp=cfg.teacher_temp,
            student_temp=cfg.student_temp,
            center_momentum=cfg.center_momentum,
            positions=cfg.positions,
        )


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max()
    return z - math.log(np.exp(z).sum())


def entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


def teacher_probs(state: DistillState, logits: np.ndarray) -> np.ndarray:
    return _softmax((logits - state.center) / state.teacher_temp)


@dataclass
class LossOutput:
    loss: float
    grads: Params
    teacher_logits: np.ndarray
    teacher_entropy: float
    teacher_marginal_entropy: float


def distill_loss(state: DistillState, batch: Sequence[np.ndarray], rng: np.random.Generator, specs) -> LossOutput:
    """Mean cross-entropy from teacher to student over a batch of windows.

    Gradients cover student parameters only; the teacher is a constant.
    """
    grads = {k: np.zeros_like(v) for k, v in state.student.items()}
    n = len(batch)
    total = 0.0
    t_logits = []
    t_probs = []
    for x in batch:
        view_t = random_augment(x, specs, rng)
        view_s = random_augment(x, specs, rng)
        zt, _ = forward(state.teacher, view_t.frames, view_t.masked, state.positions)
        pt = teacher_probs(state, zt)
        cache: list = []
        zs, _ = forward(state.student, view_s.frames, view_s.masked, state.positions, cache=cache)
        log_qs = _log_softmax(zs / state.student_temp)
        total += float(-(pt * log_qs).sum())
        dz = (np.exp(log_qs) - pt) / (state.student_temp * n)
        for k, g in backward(state.student, cache[0], dz).items():
            grads[k] += g
        t_logits.append(zt)
        t_probs.append(pt)
    probs = np.array(t_probs)
    return LossOutput(
        loss=total / n,
        grads=grads,
        teacher_logits=np.array(t_logits),
        teacher_entropy=float(np.mean([entropy(p) for p in probs])),
        teacher_marginal_entropy=entropy(probs.mean(axis=0)),
    )


def ema_update(state: DistillState, teacher_logits: np.ndarray | None = None) -> DistillState:
    """Move teacher weights toward the student; recentre on the batch's teacher logits."""
    decay = state.ema_decay
    teacher = {k: decay * state.teacher[k] + (1.0 - decay) * state.student[k] for k in state.teacher}
    center = state.center
    if teacher_logits is not None:
        m = state.center_momentum
        center = m * state.center + (1.0 - m) * np.asarray(teacher_logits).mean(axis=0)
    return dataclasses.replace(state, teacher=teacher, center=center)


def initial_center(state: DistillState, batch: Sequence[np.ndarray]) -> np.ndarray:
    """Mean teacher logits over clean windows, so step 0 is already recentred."""
    return np.mean([forward(state.teacher, x, None, state.positions)[0] for x in batch], axis=0)


class AdamW:
    """Adam with decoupled weight decay, updating a parameter dict in place."""

    def __init__(self, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self.m: Params = {}
        self.v: Params = {}

    def step(self, params: Params, grads: Params, lr: float) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1**self.t
        c2 = 1.0 - b2**self.t
        for k, g in grads.items():
            m = self.m.get(k)
            if m is None:
                m = self.m[k] = np.zeros_like(g)
                self.v[k] = np.zeros_like(g)
            v = self.v[k]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            update = (m / c1) / (np.sqrt(v / c2) + self.eps) + self.weight_decay * params[k]
            params[k] = params[k] - lr * update


def cosine_lr(step: int, total: int, start: float, end: float) -> float:
    if total <= 1:
        return start
    frac = min(step, total - 1) / (total - 1)
    return end + 0.5 * (start - end) * (1.0 + math.cos(math.pi * frac))


def sample_window(seq: np.ndarray, max_frames: int, rng: np.random.Generator) -> np.ndarray:
    t = seq.shape[0]
    if t <= max_frames:
        return seq
    start = int(rng.integers(0, t - max_frames + 1))
    return seq[start : start + max_frames]


@dataclass
class TrainResult:
    log: list[dict] = field(default_factory=list)
    state: DistillState | None = None


def train_toy(cfg: DistillConfig, corpus: Sequence[np.ndarray] | None = None, init: Params | None = None) -> TrainResult:
    """Full loop: window, augment twice, loss, AdamW step, EMA, recentre."""
    from ..synthetic import distill_corpus

    rng = np.random.default_rng(cfg.seed)
    if corpus is None:
        corpus = distill_corpus(cfg.corpus_size, cfg.dim, cfg.corpus_classes, seed=cfg.seed)
    if not corpus:
        raise ValueError("empty training corpus")
    for seq in corpus:
        if np.asarray(seq).shape[1] != cfg.dim:
            raise ValueError(f"corpus frame dim {np.asarray(seq).shape[1]} != config dim {cfg.dim}")
    specs = cfg.augmentation_specs()
    state = DistillState.create(cfg, rng, init)
    opt = AdamW(weight_decay=cfg.weight_decay)
    result = TrainResult()
    max_frames = cfg.max_window_frames
    for step in range(cfg.steps):
        lr = cosine_lr(step, cfg.steps, cfg.lr_start, cfg.lr_end)
        picks = rng.integers(0, len(corpus), size=cfg.batch_size)
        batch = [sample_window(np.asarray(corpus[i], dtype=np.float64), max_frames, rng) for i in picks]
        if step == 0 and cfg.center_init == "first_batch":
            state.center = initial_center(state, batch)
        out = distill_loss(state, batch, rng, specs)
        if not math.isfinite(out.loss):
            raise TrainingDiverged(
                f"loss became {out.loss} at step {step} (lr={lr:.3g}, "
                f"last finite loss={result.log[-1]['loss'] if result.log else 'n/a'})"
            )
        result.log.append(
            {
                "step": step,
                "loss": out.loss,
                "teacher_entropy": out.teacher_entropy,
                "teacher_marginal_entropy": out.teacher_marginal_entropy,
                "lr": lr,
            }
        )
        opt.step(state.student, out.grads, lr)
        state = ema_update(state, out.teacher_logits)
    result.state = state
    return result


def write_log(path, log: Sequence[dict]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in log:
            fh.write(json.dumps(row) + "\n")


def save_state(path, state: DistillState) -> None:
    arrays = {f"student/{k}": v for k, v in state.student.items()}
    arrays.update({f"teacher/{k}": v for k, v in state.teacher.items()})
    arrays["center"] = state.center
    np.savez(path, **arrays)


def load_params(path, which: str = "student") -> Params:
    with np.load(path) as data:
        prefix = which + "/"
        return {k[len(prefix) :]: data[k].copy() for k in data.files if k.startswith(prefix)}

