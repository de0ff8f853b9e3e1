"""Mutual information with a mismatched Gaussian receiver, and MI envelopes."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .constellation import Constellation

_CHUNK = 8192


@dataclass(frozen=True)
class MiReport:
    """MI statistics of one constellation in one (SNR, linewidth) cell.

    ``genie_mean``/``genie_std`` hold the MI after true-phase derotation on
    the same noise realizations, when the sweep computed it.
    """

    label: str
    snr_db: float
    linewidth_hz: float
    mi_bits_mean: float
    mi_bits_std: float
    runs: int
    symbols_per_run: int
    genie_mean: float = math.nan
    genie_std: float = math.nan
    rpn_var: float = math.nan
    error: str = ""

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")

    @property
    def cell(self) -> tuple[float, float]:
        return (self.snr_db, self.linewidth_hz)

    @property
    def stderr(self) -> float:
        return self.mi_bits_std / math.sqrt(self.runs)

    @property
    def genie_stderr(self) -> float:
        return self.genie_std / math.sqrt(self.runs)

    @property
    def failed(self) -> bool:
        return bool(self.error)


def mi_mismatched_gaussian(tx_indices, y, c: Constellation, noise_var: float) -> float:
    """Achievable rate (bits/symbol) of a Gaussian decoding metric with uniform inputs.

    q_k(i) = exp(-|y_k - c_i|^2 / noise_var); the estimate is
    log2 M + mean_k[log2 q_k(tx_k) - log2 sum_i q_k(i)]. The raw value is
    returned; it can be slightly negative when y carries no information.
    """
    tx = np.asarray(tx_indices).reshape(-1)
    y = np.asarray(y, dtype=np.complex128).reshape(-1)
    if tx.size != y.size:
        raise ValueError(f"length mismatch: {tx.size} indices vs {y.size} samples")
    if not noise_var > 0:
        raise ValueError(f"noise_var must be > 0, got {noise_var}")
    pts = c.points
    m = pts.size
    total = 0.0
    for start in range(0, y.size, _CHUNK):
        yc = y[start:start + _CHUNK]
        tc = tx[start:start + _CHUNK]
        metric = -(np.abs(yc[:, None] - pts[None, :]) ** 2) / noise_var
        top = metric.max(axis=1)
        lse = top + np.log(np.exp(metric - top[:, None]).sum(axis=1))
        total += float(np.sum(metric[np.arange(yc.size), tc] - lse))
    return math.log2(m) + total / (y.size * math.log(2))


def envelope(reports) -> dict[tuple[float, float], MiReport]:
    """Per-(snr, linewidth) best report over a family of candidates.

    ``reports`` maps candidate name -> iterable of MiReport (or is a flat
    iterable, grouped by label). Every candidate must cover the same cells.
    The winning report keeps its own label and ``rpn_var``.
    """
    if isinstance(reports, dict):
        groups = {k: list(v) for k, v in reports.items()}
    else:
        groups = {}
        for r in reports:
            groups.setdefault(r.label, []).append(r)
    if not groups:
        raise ValueError("envelope of an empty report collection")
    grids = {k: sorted(r.cell for r in v) for k, v in groups.items()}
    reference = next(iter(grids.values()))
    for name, grid in grids.items():
        if grid != reference:
            raise ValueError(f"candidate {name!r} was evaluated on a different (snr, lw) grid")
        if len(set(grid)) != len(grid):
            raise ValueError(f"candidate {name!r} has duplicate cells")

    best: dict[tuple[float, float], MiReport] = {}
    for name in sorted(groups):
        for r in groups[name]:
            cur = best.get(r.cell)
            if cur is None or r.mi_bits_mean > cur.mi_bits_mean:
                best[r.cell] = r
    return dict(sorted(best.items()))


def as_envelope_table(best: dict, label: str = "envelope") -> list[MiReport]:
    """Relabel envelope winners so they can be written as one CSV series."""
    return [replace(r, label=label) for _, r in sorted(best.items())]
