"""Encoder/decoder networks with hand-written backward pass and Adam.

Encoder: one-hot(M) -> linear, no bias -> (I, Q), power-normalized over all
M rows. Decoder: (I, Q) -> M/2 leaky-ReLU units -> M softmax outputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constellation import QAM_ORDERS, square_qam

LEAKY_SLOPE = 0.01
PROB_FLOOR = 1e-30
PARAM_NAMES = ("W_e", "W_1", "b_1", "W_2", "b_2")

# incremented whenever cross_entropy has to clamp a zero label probability
diagnostics = {"clamped": 0}


@dataclass
class EncoderParams:
    W_e: np.ndarray  # (M, 2)

    @property
    def order(self) -> int:
        return self.W_e.shape[0]


@dataclass
class DecoderParams:
    W_1: np.ndarray  # (2, M/2)
    b_1: np.ndarray  # (M/2,)
    W_2: np.ndarray  # (M/2, M)
    b_2: np.ndarray  # (M,)
    leaky_slope: float = LEAKY_SLOPE

    @property
    def order(self) -> int:
        return self.W_2.shape[1]


def network_params(enc: EncoderParams, dec: DecoderParams) -> dict[str, np.ndarray]:
    """Name -> array view of all trainable parameters (arrays are shared, not copied)."""
    return {"W_e": enc.W_e, "W_1": dec.W_1, "b_1": dec.b_1, "W_2": dec.W_2, "b_2": dec.b_2}


def init_encoder(m: int, rng: np.random.Generator, jitter: float = 0.01) -> EncoderParams:
    """Unit-power square-QAM rows plus Gaussian jitter (random Gaussian rows if M is not a QAM order)."""
    if m in QAM_ORDERS:
        pts = square_qam(m).points
        base = np.column_stack([pts.real, pts.imag])
    else:
        base = rng.standard_normal((m, 2))
    return EncoderParams(base + jitter * rng.standard_normal((m, 2)))


def init_decoder(m: int, rng: np.random.Generator) -> DecoderParams:
    hidden = m // 2
    if hidden < 1:
        raise ValueError(f"decoder needs M >= 2, got {m}")
    b1 = math.sqrt(1.0 / 2)
    b2 = math.sqrt(1.0 / hidden)
    return DecoderParams(
        W_1=rng.uniform(-b1, b1, (2, hidden)),
        b_1=rng.uniform(-b1, b1, hidden),
        W_2=rng.uniform(-b2, b2, (hidden, m)),
        b_2=rng.uniform(-b2, b2, m),
    )


def _check_indices(indices, m: int) -> np.ndarray:
    idx = np.asarray(indices)
    if idx.ndim != 1 or idx.size == 0:
        raise ValueError("batch must be a non-empty 1-D index sequence")
    if not np.issubdtype(idx.dtype, np.integer):
        raise ValueError("batch indices must be integers")
    if idx.min() < 0 or idx.max() >= m:
        raise ValueError(f"batch indices must lie in [0, {m})")
    return idx


def encoder_points(enc: EncoderParams) -> tuple[np.ndarray, float]:
    """All M normalized points and the normalization scale sqrt(mean |row|^2)."""
    W = enc.W_e
    if W.ndim != 2 or W.shape[1] != 2:
        raise ValueError(f"W_e must have shape (M, 2), got {W.shape}")
    scale = math.sqrt(float(np.mean(np.sum(W * W, axis=1))))
    if scale == 0.0:
        raise ValueError("W_e is all zero: power normalization is singular")
    return (W[:, 0] + 1j * W[:, 1]) / scale, scale


def encoder_forward(enc: EncoderParams, batch) -> np.ndarray:
    idx = _check_indices(batch, enc.order)
    pts, _ = encoder_points(enc)
    return pts[idx]


def _decoder_pass(dec: DecoderParams, y):
    y = np.asarray(y)
    if not np.all(np.isfinite(y)):
        raise ValueError("decoder input must be finite")
    feats = np.column_stack([y.real, y.imag]) if np.iscomplexobj(y) else np.atleast_2d(y)
    pre = feats @ dec.W_1 + dec.b_1
    hidden = np.where(pre > 0, pre, dec.leaky_slope * pre)
    logits = hidden @ dec.W_2 + dec.b_2
    logits = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(logits)
    probs = e / e.sum(axis=1, keepdims=True)
    return feats, pre, hidden, probs


def decoder_forward(dec: DecoderParams, y) -> np.ndarray:
    """Softmax posterior over the M symbols, one row per received sample.

    ``y`` is either a complex vector or a real (batch, 2) array of (I, Q).
    """
    return _decoder_pass(dec, y)[3]


def cross_entropy(probs: np.ndarray, labels) -> float:
    """Mean negative log-likelihood of the labels, in nats."""
    idx = _check_indices(labels, probs.shape[1])
    if probs.shape[0] != idx.size:
        raise ValueError(f"{probs.shape[0]} probability rows for {idx.size} labels")
    p = probs[np.arange(idx.size), idx]
    small = p < PROB_FLOOR
    if small.any():
        diagnostics["clamped"] += int(small.sum())
        p = np.maximum(p, PROB_FLOOR)
    return float(-np.mean(np.log(p)))


def loss(enc: EncoderParams, dec: DecoderParams, batch, realization) -> float:
    """Batch cross-entropy for a fixed channel realization (theta_k, n_k)."""
    x = encoder_forward(enc, batch)
    y = x * np.exp(1j * realization.theta) + realization.noise
    return cross_entropy(decoder_forward(dec, y), batch)


def backward(enc: EncoderParams, dec: DecoderParams, batch, realization) -> tuple[float, dict[str, np.ndarray]]:
    """Loss and exact gradients for all parameters.

    The channel draw ``realization`` (per-symbol ``theta`` and ``noise``) is
    held fixed, so y_k = x_k * exp(j*theta_k) + n_k is differentiable in x_k.
    """
    idx = _check_indices(batch, enc.order)
    m = enc.order
    if dec.order != m:
        raise ValueError(f"encoder has M={m}, decoder has M={dec.order}")
    theta = np.asarray(realization.theta)
    noise = np.asarray(realization.noise)
    if theta.shape != idx.shape or noise.shape != idx.shape:
        raise ValueError("channel realization does not match batch shape")

    pts, scale = encoder_points(enc)
    rot = np.exp(1j * theta)
    y = pts[idx] * rot + noise
    feats, pre, hidden, probs = _decoder_pass(dec, y)
    n = idx.size
    value = cross_entropy(probs, idx)

    d_logits = probs.copy()
    d_logits[np.arange(n), idx] -= 1.0
    d_logits /= n
    g_W2 = hidden.T @ d_logits
    g_b2 = d_logits.sum(axis=0)
    d_hidden = d_logits @ dec.W_2.T
    d_pre = d_hidden * np.where(pre > 0, 1.0, dec.leaky_slope)
    g_W1 = feats.T @ d_pre
    g_b1 = d_pre.sum(axis=0)
    d_feats = d_pre @ dec.W_1.T

    # back through the rotation: gradient w.r.t. x is the y-gradient rotated by -theta
    g_x = (d_feats[:, 0] + 1j * d_feats[:, 1]) * np.conj(rot)
    # back through x = row / scale, scale = sqrt(mean |row|^2)
    g_rows = np.bincount(idx, g_x.real, minlength=m) + 1j * np.bincount(idx, g_x.imag, minlength=m)
    rows = enc.W_e[:, 0] + 1j * enc.W_e[:, 1]
    d_scale = -float(np.sum((g_rows * np.conj(rows)).real)) / scale**2
    g_rows = g_rows / scale + d_scale * rows / (m * scale)
    g_We = np.column_stack([g_rows.real, g_rows.imag])

    return value, {"W_e": g_We, "W_1": g_W1, "b_1": g_b1, "W_2": g_W2, "b_2": g_b2}


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {name!r}")
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {params[name].shape} for {name!r}")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(params[name])
            state.v[name] = np.zeros_like(params[name])
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        params[name] -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def save_model(enc: EncoderParams, dec: DecoderParams, path) -> None:
    lines = [f"aemodel v1 {enc.order}"]
    for name, arr in network_params(enc, dec).items():
        lines.append(f"{name} {' '.join(str(d) for d in arr.shape)}")
        rows = arr if arr.ndim == 2 else arr[None, :]
        lines += [" ".join(f"{v:.17g}" for v in row) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> tuple[EncoderParams, DecoderParams]:
    lines = [ln.split() for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or lines[0][:2] != ["aemodel", "v1"] or len(lines[0]) != 3:
        raise ValueError(f"{path}: not an aemodel v1 file")
    m = int(lines[0][2])
    arrays = {}
    i = 1
    while i < len(lines):
        name, dims = lines[i][0], tuple(int(d) for d in lines[i][1:])
        nrows = dims[0] if len(dims) == 2 else 1
        block = lines[i + 1:i + 1 + nrows]
        if len(block) != nrows:
            raise ValueError(f"{path}: truncated section {name}")
        arrays[name] = np.array([[float(v) for v in row] for row in block]).reshape(dims)
        i += 1 + nrows
    missing = set(PARAM_NAMES) - set(arrays)
    if missing:
        raise ValueError(f"{path}: missing sections {sorted(missing)}")
    enc = EncoderParams(arrays["W_e"])
    dec = DecoderParams(arrays["W_1"], arrays["b_1"], arrays["W_2"], arrays["b_2"])
    if enc.order != m or dec.order != m or dec.W_1.shape != (2, m // 2):
        raise ValueError(f"{path}: section shapes inconsistent with M={m}")
    return enc, dec
