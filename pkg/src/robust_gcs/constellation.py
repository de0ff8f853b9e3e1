"""2-D constellations: construction, power normalization, QAM baseline and file I/O.

A constellation file is UTF-8 text::

    constellation v1 <M> <label> <provenance>
    # key=value          (optional metadata lines)
    <I> <Q>
    ...

Values are written with 17 significant digits so that a save/load round trip
is exact. Commas are accepted as separators on load.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

PROVENANCES = ("qam", "trained-fixed", "trained-lw-robust", "trained-snr-lw-robust")
POWER_RTOL = 1e-9
MIN_SEPARATION = 1e-6
QAM_ORDERS = (4, 16, 64, 256)


class ConstellationError(ValueError):
    """Raised when a point set violates a constellation invariant."""


def _pairwise_min(points: np.ndarray) -> float:
    d = np.abs(points[:, None] - points[None, :])
    np.fill_diagonal(d, np.inf)
    return float(d.min())


@dataclass(frozen=True)
class Constellation:
    """An immutable set of M unit-average-power complex points.

    Parameters
    ----------
    points : array_like of complex
        Constellation points, rectangular form.
    label : str
        Identifier, written into files and CSV rows. No whitespace.
    provenance : str
        One of ``PROVENANCES``.
    metadata : dict
        Training conditions or other free-form string metadata.
    """

    points: np.ndarray
    label: str = "constellation"
    provenance: str = "qam"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.complex128).reshape(-1)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if pts.size < 2:
            raise ConstellationError("a constellation needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise ConstellationError("constellation points must be finite")
        power = float(np.mean(np.abs(pts) ** 2))
        if abs(power - 1.0) > POWER_RTOL:
            raise ConstellationError(
                f"average power invariant violated: (1/M)sum|x|^2 = {power!r}, expected 1"
            )
        dmin = _pairwise_min(pts)
        if dmin < MIN_SEPARATION:
            raise ConstellationError(
                f"degenerate constellation: two points closer than {MIN_SEPARATION} ({dmin:.3g})"
            )
        if self.provenance not in PROVENANCES:
            raise ConstellationError(f"unknown provenance {self.provenance!r}")
        if not self.label or re.search(r"\s|,", self.label):
            raise ConstellationError(f"label must be non-empty without whitespace/commas: {self.label!r}")

    @property
    def order(self) -> int:
        return self.points.size

    def __len__(self):
        return self.points.size

    def __eq__(self, other):
        if not isinstance(other, Constellation):
            return NotImplemented
        return (
            self.label == other.label
            and self.provenance == other.provenance
            and np.array_equal(self.points, other.points)
        )

    __hash__ = None


def normalize_power(points, label: str = "constellation", provenance: str = "qam",
                    metadata: dict | None = None) -> Constellation:
    """Scale ``points`` by one positive real factor to unit average power."""
    pts = np.asarray(points, dtype=np.complex128).reshape(-1)
    if pts.size == 0:
        raise ConstellationError("cannot normalize an empty point set")
    if not np.all(np.isfinite(pts)):
        raise ConstellationError("cannot normalize non-finite points")
    power = np.mean(np.abs(pts) ** 2)
    if power == 0.0:
        raise ConstellationError("cannot normalize an all-zero point set")
    scaled = pts / np.sqrt(power)
    # one refinement pass so the 1e-9 power check never trips on rounding
    scaled = scaled / np.sqrt(np.mean(np.abs(scaled) ** 2))
    return Constellation(scaled, label=label, provenance=provenance, metadata=dict(metadata or {}))


def square_qam(order: int = 64) -> Constellation:
    """Square QAM on the odd-integer grid, scaled to unit average power.

    Points are ordered row-major over (I, Q); no Gray labeling is implied.
    """
    if order not in QAM_ORDERS:
        raise ConstellationError(f"unsupported QAM order {order}; choose one of {QAM_ORDERS}")
    side = math.isqrt(order)
    levels = np.arange(-side + 1, side, 2, dtype=float)
    grid = (levels[:, None] + 1j * levels[None, :]).reshape(-1)
    return normalize_power(grid, label=f"qam{order}", provenance="qam")


def min_distance(c: Constellation) -> float:
    """Minimum pairwise Euclidean distance between constellation points."""
    return _pairwise_min(c.points)


def save(c: Constellation, path) -> None:
    lines = [f"constellation v1 {c.order} {c.label} {c.provenance}"]
    for key in sorted(c.metadata):
        lines.append(f"# {key}={c.metadata[key]}")
    lines += [f"{p.real:.17g} {p.imag:.17g}" for p in c.points]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load(path) -> Constellation:
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln.strip() for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ConstellationError(f"{path}: empty constellation file")
    header = re.split(r"[,\s]+", lines[0])
    if len(header) != 5 or header[0] != "constellation" or header[1] != "v1":
        raise ConstellationError(f"{path}: bad header {lines[0]!r}")
    try:
        m = int(header[2])
    except ValueError:
        raise ConstellationError(f"{path}: bad point count {header[2]!r}") from None
    label, provenance = header[3], header[4]

    metadata = {}
    values = []
    for ln in lines[1:]:
        if ln.startswith("#"):
            key, _, val = ln[1:].strip().partition("=")
            metadata[key.strip()] = val.strip()
            continue
        parts = [p for p in re.split(r"[,\s]+", ln) if p]
        if len(parts) != 2:
            raise ConstellationError(f"{path}: malformed point line {ln!r}")
        try:
            values.append(complex(float(parts[0]), float(parts[1])))
        except ValueError:
            raise ConstellationError(f"{path}: malformed point line {ln!r}") from None
    if len(values) != m:
        raise ConstellationError(f"{path}: header declares {m} points, found {len(values)}")
    return Constellation(np.array(values), label=label, provenance=provenance, metadata=metadata)
