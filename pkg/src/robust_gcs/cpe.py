"""Blind phase search (BPS) carrier phase estimation.

The test-phase grid is ``-half + b * 2*half/N_s`` for b = 0..N_s-1, the
window is centered with (W-1)//2 past and W//2 future symbols, truncated at
the sequence edges, and the per-symbol argmin is unwrapped onto the branch
(multiple of the symmetry angle) closest to the previous estimate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .constellation import Constellation

_CHUNK = 2048


@dataclass(frozen=True)
class BpsConfig:
    n_test_phases: int = 60
    window: int = 128
    search_half_range: float = math.pi / 4
    symmetry_angle: float = math.pi / 2

    def __post_init__(self):
        if self.n_test_phases < 2:
            raise ValueError(f"n_test_phases must be >= 2, got {self.n_test_phases}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not 0 < self.search_half_range <= math.pi:
            raise ValueError(f"search_half_range must lie in (0, pi], got {self.search_half_range}")
        if not self.symmetry_angle > 0:
            raise ValueError(f"symmetry_angle must be > 0, got {self.symmetry_angle}")

    @property
    def test_phases(self) -> np.ndarray:
        h = self.search_half_range
        return -h + np.arange(self.n_test_phases) * (2 * h / self.n_test_phases)

    @property
    def phase_spacing(self) -> float:
        return 2 * self.search_half_range / self.n_test_phases


def _points(c) -> np.ndarray:
    pts = c.points if isinstance(c, Constellation) else np.asarray(c, dtype=np.complex128).reshape(-1)
    if pts.size == 0:
        raise ValueError("empty constellation")
    return pts


def nearest_distances(z: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Squared distance from each element of ``z`` to its nearest constellation point.

    The nearest point is located with one real matmul (|c|^2 - 2 Re(z c*)),
    the returned distance is then recomputed exactly against that point.
    """
    flat = z.reshape(-1)
    feats = np.column_stack([flat.real, flat.imag])
    basis = np.vstack([points.real, points.imag])
    score = np.abs(points) ** 2 - 2.0 * (feats @ basis)
    nearest = points[np.argmin(score, axis=1)]
    return (np.abs(flat - nearest) ** 2).reshape(z.shape)


def distance_matrix(y, c, cfg: BpsConfig) -> np.ndarray:
    """d[k, b]: nearest-point squared distance of y_k rotated by -phi_b."""
    pts = _points(c)
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    derot = np.exp(-1j * cfg.test_phases)
    d = np.empty((y.size, cfg.n_test_phases))
    for start in range(0, y.size, _CHUNK):
        stop = min(start + _CHUNK, y.size)
        d[start:stop] = nearest_distances(y[start:stop, None] * derot[None, :], pts)
    return d


def windowed_cost(d: np.ndarray, window: int) -> np.ndarray:
    """Sliding sum of ``d`` over a centered window, truncated at the edges."""
    n = d.shape[0]
    past, future = (window - 1) // 2, window // 2
    csum = np.zeros((n + 1,) + d.shape[1:])
    np.cumsum(d, axis=0, out=csum[1:])
    k = np.arange(n)
    hi = np.minimum(k + future + 1, n)
    lo = np.maximum(k - past, 0)
    return csum[hi] - csum[lo]


def bps_estimate(y, c, cfg: BpsConfig = BpsConfig()) -> np.ndarray:
    """Unwrapped per-symbol phase estimates (rad) for received samples ``y``."""
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    pts = _points(c)
    if y.size < cfg.window:
        raise ValueError(f"sequence of {y.size} symbols is shorter than the BPS window ({cfg.window})")
    cost = windowed_cost(distance_matrix(y, pts, cfg), cfg.window)
    raw = cfg.test_phases[np.argmin(cost, axis=1)]
    return np.unwrap(raw, period=cfg.symmetry_angle)


def bps_estimate_anchored(y, c, reference_phase, cfg: BpsConfig = BpsConfig()) -> np.ndarray:
    """BPS whose N_s test phases are re-centered on ``reference_phase`` per symbol.

    Test phases live on the lattice ``-half + b*spacing`` (b any integer, same
    spacing as ``cfg``); symbol k searches the N_s lattice phases in
    ``[ref_k - half, ref_k + half)``. With the true phase as reference this
    resolves the rotation ambiguity by genie while the fine estimate stays
    blind. For a constellation with the configured symmetry the result equals
    ``bps_estimate`` shifted per symbol by a multiple of the symmetry angle.
    """
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    ref = np.asarray(reference_phase, dtype=float).reshape(-1)
    pts = _points(c)
    n = y.size
    if ref.size != n:
        raise ValueError(f"length mismatch: {n} samples vs {ref.size} reference phases")
    if n < cfg.window:
        raise ValueError(f"sequence of {n} symbols is shorter than the BPS window ({cfg.window})")
    half, sp, ns = cfg.search_half_range, cfg.phase_spacing, cfg.n_test_phases
    past, future = (cfg.window - 1) // 2, cfg.window // 2
    first = np.ceil(ref / sp - 1e-9).astype(np.int64)
    est = np.empty(n)
    block = max(_CHUNK, cfg.window)
    for s in range(0, n, block):
        e = min(s + block, n)
        lo_sym, hi_sym = max(s - past, 0), min(e + future, n)
        b0 = int(first[s:e].min())
        cols = b0 + np.arange(int(first[s:e].max()) - b0 + ns)
        derot = np.exp(-1j * (-half + cols * sp))
        seg = y[lo_sym:hi_sym]
        d = np.empty((seg.size, cols.size))
        for a in range(0, seg.size, _CHUNK // 4):
            d[a:a + _CHUNK // 4] = nearest_distances(seg[a:a + _CHUNK // 4, None] * derot[None, :], pts)
        csum = np.zeros((seg.size + 1, cols.size))
        np.cumsum(d, axis=0, out=csum[1:])
        k = np.arange(s, e)
        cost = csum[np.minimum(k + future + 1, n) - lo_sym] - csum[np.maximum(k - past, 0) - lo_sym]
        active = (first[s:e] - b0)[:, None] + np.arange(ns)[None, :]
        pick = np.argmin(np.take_along_axis(cost, active, axis=1), axis=1)
        est[s:e] = -half + cols[active[np.arange(e - s), pick]] * sp
    return est


def derotate(y, phases) -> np.ndarray:
    y = np.asarray(y, dtype=np.complex128)
    phases = np.asarray(phases, dtype=float)
    if y.shape != phases.shape:
        raise ValueError(f"length mismatch: {y.shape} samples vs {phases.shape} phases")
    return y * np.exp(-1j * phases)


def genie_slip_removal(est, true_phase, symmetry_angle: float = math.pi / 2) -> np.ndarray:
    """Resolve the symmetry ambiguity of ``est`` using the true phase.

    The error ``est - true`` is split into segments at every jump larger than
    half the symmetry angle; each segment is shifted by the multiple of the
    symmetry angle that minimizes its mean absolute error.
    """
    est = np.asarray(est, dtype=float)
    true_phase = np.asarray(true_phase, dtype=float)
    if est.shape != true_phase.shape:
        raise ValueError(f"length mismatch: {est.shape} estimates vs {true_phase.shape} true phases")
    err = est - true_phase
    if err.size == 0:
        return est.copy()
    cuts = np.flatnonzero(np.abs(np.diff(err)) > symmetry_angle / 2) + 1
    out = est.copy()
    for seg in np.split(np.arange(err.size), cuts):
        e = err[seg]
        centre = -round(float(np.median(e)) / symmetry_angle)
        best = min(range(centre - 1, centre + 2),
                   key=lambda m: float(np.mean(np.abs(e + m * symmetry_angle))))
        out[seg] += best * symmetry_angle
    return out
