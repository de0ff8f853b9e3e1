"""Autoencoder training in fixed, linewidth-robust and SNR&linewidth-robust modes.

Each epoch draws a fresh set of N = 256*M uniform symbol indices, split into
8 batches of B = 32*M. Robust modes redraw the channel conditions for every
batch: RPN variance log-uniform, SNR (snr_lw_robust only) uniform in dB.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autoencoder as ae
from .channels import ChannelConditions, RngStream, training_channel
from .constellation import Constellation, normalize_power

log = logging.getLogger(__name__)

MODES = ("fixed", "lw_robust", "snr_lw_robust")
PROVENANCE = {
    "fixed": "trained-fixed",
    "lw_robust": "trained-lw-robust",
    "snr_lw_robust": "trained-snr-lw-robust",
}
DEFAULT_RPN_RANGE = {"lw_robust": (0.005, 0.02), "snr_lw_robust": (0.005, 0.05)}
FIXED_RPN_SET = (1e-4, 5e-4, 1e-3, 5e-3, 1e-2, 2e-2, 5e-2)

# RngStream substreams used by the trainer
_INIT, _DATA, _COND, _CHANNEL = 10, 11, 12, 13


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingSchedule:
    mode: str = "fixed"
    order: int = 64
    snr_db: float = 17.0
    snr_range_db: tuple[float, float] = (15.0, 20.0)
    rpn_var: float = 0.005
    rpn_var_range: tuple[float, float] | None = None
    epochs: int = 2000
    batches_per_epoch: int = 8
    batch_size: int | None = None  # default 32*M
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    init_jitter: float = 0.01
    seed: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown training mode {self.mode!r}; choose from {MODES}")
        if self.batch_size is None:
            object.__setattr__(self, "batch_size", 32 * self.order)
        if self.rpn_var_range is None and self.mode in DEFAULT_RPN_RANGE:
            object.__setattr__(self, "rpn_var_range", DEFAULT_RPN_RANGE[self.mode])
        if self.epochs < 1 or self.batches_per_epoch < 1 or self.batch_size < 1:
            raise ValueError("epochs, batches_per_epoch and batch_size must be >= 1")
        if self.mode == "fixed" and not self.rpn_var > 0:
            raise ValueError(f"fixed mode needs rpn_var > 0, got {self.rpn_var}")
        if self.mode != "fixed":
            lo, hi = self.rpn_var_range
            if not 0 < lo < hi:
                raise ValueError(f"rpn_var_range must satisfy 0 < lo < hi, got {self.rpn_var_range}")
        if self.mode == "snr_lw_robust":
            lo, hi = self.snr_range_db
            if not lo < hi:
                raise ValueError(f"snr_range_db must satisfy lo < hi, got {self.snr_range_db}")

    @property
    def samples_per_epoch(self) -> int:
        return self.batches_per_epoch * self.batch_size

    def describe(self) -> dict[str, str]:
        meta = {"mode": self.mode, "epochs": str(self.epochs), "seed": str(self.seed)}
        if self.mode == "snr_lw_robust":
            meta["snr_range_db"] = f"{self.snr_range_db[0]:g}:{self.snr_range_db[1]:g}"
        else:
            meta["snr_db"] = f"{self.snr_db:g}"
        if self.mode == "fixed":
            meta["rpn_var"] = f"{self.rpn_var:g}"
        else:
            meta["rpn_var_range"] = f"{self.rpn_var_range[0]:g}:{self.rpn_var_range[1]:g}"
        return meta

    def default_label(self) -> str:
        if self.mode == "fixed":
            return f"ae-fixed-snr{self.snr_db:g}-rpn{self.rpn_var:g}"
        return f"ae-{self.mode.replace('_', '-')}-s{self.seed}"


def sample_batch_conditions(s: TrainingSchedule, rng: np.random.Generator) -> ChannelConditions:
    if s.mode == "fixed":
        return ChannelConditions(snr_db=s.snr_db, rpn_var=s.rpn_var)
    lo, hi = s.rpn_var_range
    rpn = math.exp(rng.uniform(math.log(lo), math.log(hi)))
    snr = rng.uniform(*s.snr_range_db) if s.mode == "snr_lw_robust" else s.snr_db
    return ChannelConditions(snr_db=float(snr), rpn_var=rpn)


def generate_epoch_data(m: int, n: int, rng: np.random.Generator, batch_size: int | None = None) -> np.ndarray:
    """N i.i.d. uniform symbol indices in [0, M)."""
    if batch_size is not None and n % batch_size:
        raise ValueError(f"epoch size {n} is not a multiple of the batch size {batch_size}")
    return rng.integers(0, m, n)


@dataclass
class TrainResult:
    constellation: Constellation
    encoder: ae.EncoderParams
    decoder: ae.DecoderParams
    loss_history: list[float] = field(default_factory=list)
    schedule: TrainingSchedule | None = None


def train(s: TrainingSchedule, rng: RngStream | None = None, label: str | None = None) -> TrainResult:
    """Jointly train encoder and decoder; return the encoder's constellation.

    ``loss_history`` holds the mean batch cross-entropy (nats) per epoch.
    """
    rng = rng or RngStream(s.seed)
    g_init, g_data = rng.generator(_INIT), rng.generator(_DATA)
    g_cond, g_chan = rng.generator(_COND), rng.generator(_CHANNEL)
    m = s.order

    enc = ae.init_encoder(m, g_init, s.init_jitter)
    dec = ae.init_decoder(m, g_init)
    params = ae.network_params(enc, dec)
    adam = ae.AdamState(lr=s.lr, beta1=s.beta1, beta2=s.beta2, eps=s.adam_eps)
    history = []

    for epoch in range(s.epochs):
        data = generate_epoch_data(m, s.samples_per_epoch, g_data, s.batch_size)
        total = 0.0
        for b in range(s.batches_per_epoch):
            batch = data[b * s.batch_size:(b + 1) * s.batch_size]
            cond = sample_batch_conditions(s, g_cond)
            _, realization = training_channel(ae.encoder_forward(enc, batch), cond, g_chan)
            value, grads = ae.backward(enc, dec, batch, realization)
            if not math.isfinite(value):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}, conditions {cond}")
            try:
                ae.adam_step(adam, params, grads)
            except FloatingPointError as exc:
                raise TrainingError(f"{exc} at epoch {epoch}, batch {b}, conditions {cond}") from exc
            total += value
        history.append(total / s.batches_per_epoch)

        pts, _ = ae.encoder_points(enc)
        power = float(np.mean(np.abs(pts) ** 2))
        assert abs(power - 1.0) < 1e-9, f"encoder output power drifted to {power}"
        if epoch % 200 == 0 or epoch == s.epochs - 1:
            log.debug("epoch %d loss %.5f nats", epoch, history[-1])

    pts, _ = ae.encoder_points(enc)
    const = normalize_power(pts, label=label or s.default_label(),
                            provenance=PROVENANCE[s.mode], metadata=s.describe())
    return TrainResult(const, enc, dec, history, s)


def train_fixed_grid(rpn_var_set, snr_set, base: TrainingSchedule) -> list[TrainResult]:
    """One fixed-mode run per (snr, rpn_var) pair, each seeded with ``base.seed``."""
    rpn_var_set, snr_set = list(rpn_var_set), list(snr_set)
    if not rpn_var_set or not snr_set:
        raise ValueError("train_fixed_grid needs non-empty rpn_var and snr sets")
    results = []
    for snr in snr_set:
        for rpn in rpn_var_set:
            s = replace(base, mode="fixed", snr_db=float(snr), rpn_var=float(rpn))
            log.info("training fixed constellation snr=%g dB rpn_var=%g", snr, rpn)
            results.append(train(s))
    return results
