"""Small self-attention sequence mixer with an aggregator token.

Parameters are a flat ``dict[str, ndarray]`` so EMA, the optimizer and the
finite-difference checks can treat every tensor the same way. Gradients are
written by hand.

Row-vector convention: ``H`` is ``(T + 1) x D`` with the aggregator at row 0.
Each layer is

    A = softmax(H Wq (H Wk)^T / sqrt(D))
    H <- H + tanh(A H Wv Wo + bo)

and the head maps the final aggregator row to C logits through one tanh
hidden layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

Params = dict[str, np.ndarray]

_LAYER_KEYS = ("wq", "wk", "wv", "wo", "bo")


@dataclass(frozen=True)
class EncoderShape:
    dim: int
    layers: int
    hidden: int
    classes: int

    def __post_init__(self):
        if self.dim < 1 or self.hidden < 1:
            raise ValueError("dim and hidden must be >= 1")
        if self.layers < 1:
            raise ValueError("need at least one mixing layer")
        if self.classes < 2:
            raise ValueError("need at least two output classes")


def layer_key(layer: int, name: str) -> str:
    return f"layer{layer}.{name}"


def init_layer(params: Params, layer: int, dim: int, rng: np.random.Generator, scale: float = 1.0) -> None:
    std = scale / math.sqrt(dim)
    for name in ("wq", "wk", "wv", "wo"):
        params[layer_key(layer, name)] = rng.normal(0.0, std, size=(dim, dim))
    params[layer_key(layer, "bo")] = np.zeros(dim)


def init_params(shape: EncoderShape, rng: np.random.Generator, head_scale: float = 0.1) -> Params:
    d = shape.dim
    p: Params = {
        "agg": rng.normal(0.0, 1.0 / math.sqrt(d), size=d),
        "mask_token": rng.normal(0.0, 1.0 / math.sqrt(d), size=d),
    }
    for layer in range(shape.layers):
        init_layer(p, layer, d, rng)
    p["head.w1"] = rng.normal(0.0, 1.0 / math.sqrt(d), size=(d, shape.hidden))
    p["head.b1"] = np.zeros(shape.hidden)
    # small output layer keeps the sharpened teacher from starting one-hot
    p["head.w2"] = rng.normal(0.0, head_scale, size=(shape.hidden, shape.classes))
    p["head.b2"] = np.zeros(shape.classes)
    return p


def reinit_top_layers(params: Params, count: int, rng: np.random.Generator) -> Params:
    """Copy of ``params`` with the last ``count`` mixing layers re-randomised."""
    out = {k: v.copy() for k, v in params.items()}
    n = num_layers(params)
    d = params["agg"].shape[0]
    for layer in range(max(0, n - count), n):
        init_layer(out, layer, d, rng)
    return out


def num_layers(params: Params) -> int:
    return len({k.split(".")[0] for k in params if k.startswith("layer")})


def copy_params(params: Params) -> Params:
    return {k: v.copy() for k, v in params.items()}


def sinusoidal_positions(length: int, dim: int) -> np.ndarray:
    """Fixed (non-learned) positional features for frames 0..length-1."""
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    rates = 1.0 / np.power(10000.0, (2 * (i // 2)) / dim)
    ang = pos * rates
    return np.where(i % 2 == 0, np.sin(ang), np.cos(ang))


def _softmax_rows(s: np.ndarray) -> np.ndarray:
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _inputs(params: Params, frames: np.ndarray, masked: np.ndarray | None, positions: bool) -> np.ndarray:
    x = np.array(frames, dtype=np.float64, copy=True)
    if masked is not None and masked.any():
        x[masked] = params["mask_token"]
    if positions:
        x = x + sinusoidal_positions(x.shape[0], x.shape[1])
    return np.vstack([params["agg"][None, :], x])


def forward(
    params: Params,
    frames: np.ndarray,
    masked: np.ndarray | None = None,
    positions: bool = True,
    cache: list | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(aggregator logits [C], frame outputs [T x D])``.

    Frames flagged in ``masked`` are replaced by this model's mask token.
    Pass a list as ``cache`` to keep the activations for :func:`backward`.
    """
    frames = np.atleast_2d(frames)
    if frames.shape[0] < 1:
        raise ValueError("empty frame sequence")
    h = _inputs(params, frames, masked, positions)
    d = h.shape[1]
    scale = 1.0 / math.sqrt(d)
    layers = []
    for layer in range(num_layers(params)):
        wq, wk, wv, wo, bo = (params[layer_key(layer, k)] for k in _LAYER_KEYS)
        q, k, v = h @ wq, h @ wk, h @ wv
        a = _softmax_rows((q @ k.T) * scale)
        m = a @ v
        g = np.tanh(m @ wo + bo)
        layers.append((h, q, k, v, a, m, g))
        h = h + g
    agg = h[0]
    g1 = np.tanh(agg @ params["head.w1"] + params["head.b1"])
    logits = g1 @ params["head.w2"] + params["head.b2"]
    if cache is not None:
        cache.append((layers, agg, g1, masked, scale))
    return logits, h[1:]


def backward(params: Params, cache_entry, dlogits: np.ndarray) -> Params:
    """Gradients of a scalar loss w.r.t. every parameter, given dL/dlogits."""
    layers, agg, g1, masked, scale = cache_entry
    grads: Params = {}
    grads["head.w2"] = np.outer(g1, dlogits)
    grads["head.b2"] = dlogits.copy()
    da1 = (params["head.w2"] @ dlogits) * (1.0 - g1**2)
    grads["head.w1"] = np.outer(agg, da1)
    grads["head.b1"] = da1
    dh = np.zeros((layers[0][0].shape[0], agg.shape[0]))
    dh[0] = params["head.w1"] @ da1
    for layer in range(len(layers) - 1, -1, -1):
        h, q, k, v, a, m, g = layers[layer]
        wq, wk, wv, wo, _ = (params[layer_key(layer, kk)] for kk in _LAYER_KEYS)
        du = dh * (1.0 - g**2)
        grads[layer_key(layer, "wo")] = m.T @ du
        grads[layer_key(layer, "bo")] = du.sum(axis=0)
        dm = du @ wo.T
        da = dm @ v.T
        dv = a.T @ dm
        ds = a * (da - (da * a).sum(axis=1, keepdims=True)) * scale
        dq = ds @ k
        dk = ds.T @ q
        grads[layer_key(layer, "wq")] = h.T @ dq
        grads[layer_key(layer, "wk")] = h.T @ dk
        grads[layer_key(layer, "wv")] = h.T @ dv
        dh = dh + dq @ wq.T + dk @ wk.T + dv @ wv.T
    grads["agg"] = dh[0].copy()
    dframes = dh[1:]
    if masked is not None and masked.any():
        grads["mask_token"] = dframes[masked].sum(axis=0)
    else:
        grads["mask_token"] = np.zeros_like(params["mask_token"])
    return grads
