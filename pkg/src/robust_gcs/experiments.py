"""Monte-Carlo sweeps over the SNR x linewidth grid, CSV and SVG output.

Every (constellation, snr, linewidth, run) gets its own RNG stream derived
from the sweep seed and a hash of those four values, so results do not
depend on execution order or worker count.
"""
from __future__ import annotations

import csv
import logging
import math
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import constellation as cst
from .channels import SIGNAL, ChannelConditions, RngStream, stream_id_for, test_channel
from .cpe import BpsConfig, bps_estimate, bps_estimate_anchored, derotate, genie_slip_removal
from .metrics import MiReport, mi_mismatched_gaussian

log = logging.getLogger(__name__)

CSV_HEADER = ("constellation", "snr_db", "lw_hz", "mi_bits_mean", "mi_bits_std", "runs", "symbols")
AMBIGUITY_MODES = ("anchored", "segment", "none")
WORKERS_ENV = "ROBUST_GCS_WORKERS"
DEFAULT_SNR_GRID = tuple(float(s) for s in range(15, 21))
DEFAULT_LW_GRID = tuple(float(lw) for lw in range(50_000, 300_001, 50_000))


@dataclass
class SweepConfig:
    """Sweep grid and Monte-Carlo budget.

    ``phase_ambiguity`` selects how the BPS rotation ambiguity is resolved
    before MI is computed: ``anchored`` re-centers each symbol's test phases
    on the true phase, ``segment`` runs blind BPS then segment-wise genie
    slip removal, ``none`` uses the raw unwrapped BPS output.
    """

    constellations: list[str] = field(default_factory=lambda: ["qam64"])
    snr_grid_db: tuple[float, ...] = DEFAULT_SNR_GRID
    lw_grid_hz: tuple[float, ...] = DEFAULT_LW_GRID
    runs: int = 100
    symbols_per_run: int = 100_000
    bps: BpsConfig = field(default_factory=BpsConfig)
    phase_ambiguity: str = "anchored"
    seed: int = 1
    workers: int | None = None

    def __post_init__(self):
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        self.lw_grid_hz = tuple(float(lw) for lw in self.lw_grid_hz)
        if not self.snr_grid_db or not self.lw_grid_hz:
            raise ValueError("SNR and linewidth grids must be non-empty")
        if self.runs < 1:
            raise ValueError(f"runs must be >= 1, got {self.runs}")
        if self.symbols_per_run < self.bps.window:
            raise ValueError(
                f"symbols_per_run ({self.symbols_per_run}) must be >= the BPS window ({self.bps.window})")
        if self.phase_ambiguity not in AMBIGUITY_MODES:
            raise ValueError(f"phase_ambiguity must be one of {AMBIGUITY_MODES}")
        if self.workers is None:
            self.workers = int(os.environ.get(WORKERS_ENV, "1"))


def resolve_constellation(source) -> cst.Constellation:
    """A Constellation, a built-in name such as ``qam64``, or a file path."""
    if isinstance(source, cst.Constellation):
        return source
    m = re.fullmatch(r"qam(\d+)", str(source))
    if m:
        return cst.square_qam(int(m.group(1)))
    return cst.load(source)


def simulate_run(c: cst.Constellation, snr_db: float, lw_hz: float, run: int,
                 cfg: SweepConfig) -> tuple[float, float]:
    """MI after BPS and MI after true-phase derotation for one Monte-Carlo run."""
    rs = RngStream(cfg.seed, stream_id_for(c.label, snr_db, lw_hz, run))
    tx = rs.generator(SIGNAL).integers(0, c.order, cfg.symbols_per_run)
    cond = ChannelConditions(snr_db=snr_db, linewidth_hz=lw_hz)
    y, phi = test_channel(c.points[tx], cond, rs)
    if cfg.phase_ambiguity == "anchored":
        est = bps_estimate_anchored(y, c, phi, cfg.bps)
    else:
        est = bps_estimate(y, c, cfg.bps)
        if cfg.phase_ambiguity == "segment":
            est = genie_slip_removal(est, phi, cfg.bps.symmetry_angle)
    mi = mi_mismatched_gaussian(tx, derotate(y, est), c, cond.noise_var)
    genie = mi_mismatched_gaussian(tx, derotate(y, phi), c, cond.noise_var)
    return mi, genie


def _rpn_of(c: cst.Constellation) -> float:
    try:
        return float(c.metadata.get("rpn_var", "nan"))
    except ValueError:
        return math.nan


def run_cell(c: cst.Constellation, snr_db: float, lw_hz: float, cfg: SweepConfig) -> MiReport:
    try:
        res = np.array([simulate_run(c, snr_db, lw_hz, r, cfg) for r in range(cfg.runs)])
    except Exception as exc:  # recorded per cell; the sweep carries on
        log.error("cell %s snr=%g lw=%g failed: %s", c.label, snr_db, lw_hz, exc)
        return MiReport(c.label, snr_db, lw_hz, math.nan, math.nan, cfg.runs, cfg.symbols_per_run,
                        rpn_var=_rpn_of(c), error=f"{type(exc).__name__}: {exc}")
    ddof = 1 if cfg.runs > 1 else 0
    return MiReport(
        c.label, snr_db, lw_hz,
        mi_bits_mean=float(res[:, 0].mean()), mi_bits_std=float(res[:, 0].std(ddof=ddof)),
        runs=cfg.runs, symbols_per_run=cfg.symbols_per_run,
        genie_mean=float(res[:, 1].mean()), genie_std=float(res[:, 1].std(ddof=ddof)),
        rpn_var=_rpn_of(c),
    )


def _cell_task(args):
    return run_cell(*args)


def run_sweep(cfg: SweepConfig, constellations=None) -> list[MiReport]:
    """Evaluate every constellation on every grid cell; canonical order."""
    consts = [resolve_constellation(s) for s in (constellations or cfg.constellations)]
    labels = [c.label for c in consts]
    if len(set(labels)) != len(labels):
        raise ValueError(f"duplicate constellation labels in sweep: {labels}")
    tasks = [(c, snr, lw, cfg) for c in consts for snr in cfg.snr_grid_db for lw in cfg.lw_grid_hz]
    if cfg.workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            table = list(pool.map(_cell_task, tasks))
    else:
        table = []
        for t in tasks:
            table.append(run_cell(*t))
            log.info("%s snr=%g lw=%g MI=%.4f", t[0].label, t[1], t[2], table[-1].mi_bits_mean)
    return sort_table(table)


def sort_table(table) -> list[MiReport]:
    return sorted(table, key=lambda r: (r.label, r.snr_db, r.linewidth_hz))


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def emit_csv(table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in sort_table(table):
            w.writerow([r.label, _fmt(r.snr_db), _fmt(r.linewidth_hz), _fmt(r.mi_bits_mean),
                        _fmt(r.mi_bits_std), r.runs, r.symbols_per_run])


def read_csv(path) -> list[MiReport]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if rows and set(CSV_HEADER) - set(rows[0]):
        raise ValueError(f"{path}: missing columns {sorted(set(CSV_HEADER) - set(rows[0]))}")
    return [
        MiReport(r["constellation"], float(r["snr_db"]), float(r["lw_hz"]), float(r["mi_bits_mean"]),
                 float(r["mi_bits_std"]), int(r["runs"]), int(r["symbols"]))
        for r in rows
    ]


def emit_envelope_csv(best: dict, path) -> None:
    """Envelope rows: the sweep schema plus the winning candidate and its RPN variance."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER + ("winner", "rpn_var"))
        for (snr, lw), r in sorted(best.items()):
            w.writerow(["envelope", _fmt(snr), _fmt(lw), _fmt(r.mi_bits_mean), _fmt(r.mi_bits_std),
                        r.runs, r.symbols_per_run, r.label, _fmt(r.rpn_var)])


PLOT_AXES = ("vs_lw_at_fixed_snr", "vs_snr_per_lw")


def emit_plot(table, axis: str, path, snr_db: float | None = None) -> None:
    """SVG of MI curves, one line per constellation.

    ``vs_lw_at_fixed_snr`` plots MI against linewidth at ``snr_db`` (default:
    17 dB if present, else the lowest SNR); ``vs_snr_per_lw`` draws one panel
    per linewidth with MI against SNR.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    table = [r for r in table if not r.failed]
    if not table:
        raise ValueError("cannot plot an empty table")
    if axis not in PLOT_AXES:
        raise ValueError(f"axis must be one of {PLOT_AXES}")
    labels = sorted({r.label for r in table})
    snrs = sorted({r.snr_db for r in table})
    lws = sorted({r.linewidth_hz for r in table})
    cells = {(r.label, r.snr_db, r.linewidth_hz): r.mi_bits_mean for r in table}

    def series(label, xs, key):
        vals = [cells.get(key(x), math.nan) for x in xs]
        if any(math.isnan(v) for v in vals):
            warnings.warn(f"{label}: missing cells, plotting with gaps", stacklevel=3)
        return vals

    matplotlib.rcParams["svg.hashsalt"] = "robust-gcs"
    if axis == "vs_lw_at_fixed_snr":
        snr = snr_db if snr_db is not None else (17.0 if 17.0 in snrs else snrs[0])
        fig, ax = plt.subplots(figsize=(6, 4))
        xs = [lw / 1e3 for lw in lws]
        for label in labels:
            ax.plot(xs, series(label, lws, lambda lw: (label, snr, lw)), marker="o", label=label)
        ax.set_xlabel("Laser linewidth [kHz]")
        ax.set_ylabel("MI [bits/symbol]")
        ax.set_title(f"SNR = {snr:g} dB")
        ax.grid(True, alpha=0.3)
        ax.legend()
    else:
        fig, axes = plt.subplots(1, len(lws), figsize=(3.2 * len(lws), 3.6), squeeze=False, sharey=True)
        for ax, lw in zip(axes[0], lws):
            for label in labels:
                ax.plot(snrs, series(label, snrs, lambda s: (label, s, lw)), marker="o", label=label)
            ax.set_title(f"{lw / 1e3:g} kHz")
            ax.set_xlabel("SNR [dB]")
            ax.grid(True, alpha=0.3)
        axes[0][0].set_ylabel("MI [bits/symbol]")
        axes[0][-1].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
