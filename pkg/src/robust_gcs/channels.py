"""Training channel (AWGN + Gaussian residual phase noise) and test channel
(Wiener laser phase noise + AWGN), at one sample per symbol.

Phase rotation is applied before the additive noise in both channels.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SYMBOL_RATE = 32e9

# substream ids within one RngStream
SIGNAL, PHASE, NOISE, CONDITIONS = range(4)


@dataclass(frozen=True)
class ChannelConditions:
    snr_db: float
    rpn_var: float = 0.0
    linewidth_hz: float = 0.0
    symbol_rate_baud: float = DEFAULT_SYMBOL_RATE

    def __post_init__(self):
        if not math.isfinite(self.snr_db):
            raise ValueError(f"snr_db must be finite, got {self.snr_db}")
        if self.rpn_var < 0 or not math.isfinite(self.rpn_var):
            raise ValueError(f"rpn_var must be finite and >= 0, got {self.rpn_var}")
        if self.linewidth_hz < 0 or not math.isfinite(self.linewidth_hz):
            raise ValueError(f"linewidth_hz must be finite and >= 0, got {self.linewidth_hz}")
        if not self.symbol_rate_baud > 0:
            raise ValueError(f"symbol_rate_baud must be > 0, got {self.symbol_rate_baud}")

    @property
    def noise_var(self) -> float:
        return noise_var_from_snr(self.snr_db)


@dataclass(frozen=True)
class RngStream:
    """Seeded source of independent numpy generators.

    ``generator(sub)`` returns a fresh ``np.random.Generator`` keyed by
    ``(seed, stream_id, sub)``, so signal indices, phase noise and additive
    noise each get their own reproducible stream.
    """

    seed: int
    stream_id: int = 0

    def generator(self, sub: int = 0) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed & (2**64 - 1), spawn_key=(self.stream_id, sub))
        return np.random.Generator(np.random.PCG64(ss))

    def child(self, stream_id: int) -> "RngStream":
        return RngStream(self.seed, stream_id)


def stream_id_for(*parts) -> int:
    """Stable 63-bit stream id from arbitrary printable parts (order-sensitive)."""
    key = "|".join(repr(p) for p in parts).encode()
    return int.from_bytes(hashlib.blake2b(key, digest_size=8).digest(), "little") >> 1


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RngStream):
        return rng.generator()
    return np.random.default_rng(rng)


def noise_var_from_snr(snr_db: float) -> float:
    """Complex AWGN variance for a unit-power signal at ``snr_db``."""
    return 10.0 ** (-snr_db / 10.0)


def sigma_phi2_from_linewidth(linewidth_hz: float, symbol_rate_baud: float = DEFAULT_SYMBOL_RATE) -> float:
    """Per-symbol Wiener increment variance 2*pi*linewidth/symbol_rate (rad^2)."""
    if not linewidth_hz > 0:
        raise ValueError(f"linewidth must be > 0 Hz, got {linewidth_hz}")
    if not symbol_rate_baud > 0:
        raise ValueError(f"symbol rate must be > 0 Bd, got {symbol_rate_baud}")
    return 2.0 * math.pi * linewidth_hz / symbol_rate_baud


def awgn(n: int, noise_var: float, rng) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples, ``noise_var/2`` per quadrature."""
    if noise_var < 0:
        raise ValueError(f"noise variance must be >= 0, got {noise_var}")
    g = _as_generator(rng)
    return math.sqrt(noise_var / 2.0) * (g.standard_normal(n) + 1j * g.standard_normal(n))


@dataclass(frozen=True)
class TrainingRealization:
    theta: np.ndarray
    noise: np.ndarray


def training_channel(x, cond: ChannelConditions, rng: RngStream | np.random.Generator):
    """y = x*exp(j*theta) + n with i.i.d. theta ~ N(0, rpn_var).

    Returns ``(y, realization)``; the realization is what the autoencoder
    backward pass needs to differentiate through the exact same channel draw.
    When ``rng`` is a single Generator, theta is drawn before n from it.
    """
    x = np.asarray(x, dtype=np.complex128)
    if isinstance(rng, RngStream):
        g_phase, g_noise = rng.generator(PHASE), rng.generator(NOISE)
    else:
        g_phase = g_noise = _as_generator(rng)
    theta = math.sqrt(cond.rpn_var) * g_phase.standard_normal(x.shape)
    n = awgn(x.size, cond.noise_var, g_noise).reshape(x.shape)
    y = x * np.exp(1j * theta) + n
    return y, TrainingRealization(theta, n)


def wiener_phase(n: int, sigma_phi2: float, rng) -> np.ndarray:
    """Wiener phase trajectory with phi_0 = 0 and N(0, sigma_phi2) increments."""
    if n < 1:
        raise ValueError(f"trajectory length must be >= 1, got {n}")
    if sigma_phi2 < 0:
        raise ValueError(f"sigma_phi2 must be >= 0, got {sigma_phi2}")
    g = _as_generator(rng)
    steps = math.sqrt(sigma_phi2) * g.standard_normal(n - 1)
    phi = np.zeros(n)
    np.cumsum(steps, out=phi[1:])
    return phi


def test_channel(x, cond: ChannelConditions, rng: RngStream | np.random.Generator):
    """y = x*exp(j*phi) + n with phi a Wiener process set by the laser linewidth.

    Returns ``(y, true_phase)``.
    """
    x = np.asarray(x, dtype=np.complex128).reshape(-1)
    if isinstance(rng, RngStream):
        g_phase, g_noise = rng.generator(PHASE), rng.generator(NOISE)
    else:
        g_phase = g_noise = _as_generator(rng)
    s2 = sigma_phi2_from_linewidth(cond.linewidth_hz, cond.symbol_rate_baud) if cond.linewidth_hz > 0 else 0.0
    phi = wiener_phase(x.size, s2, g_phase)
    y = x * np.exp(1j * phi) + awgn(x.size, cond.noise_var, g_noise)
    return y, phi


# keep pytest from collecting the channel function when imported into test modules
test_channel.__test__ = False
