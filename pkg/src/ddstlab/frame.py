"""Transmit-frame construction for data-dependent superimposed training.

A frame of N QPSK symbols is projected onto the orthogonal complement of the
P-periodic subspace (removing what the receiver's pilot bins will carry) and
a known P-periodic training sequence is added on top. Data and training then
occupy disjoint frequency bins: the P pilot bins at multiples of Q = N/P hold
only training energy.
"""

from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .errors import ConfigError, DimensionError, FormatError

__all__ = [
    "DdstConfig",
    "DdstProjector",
    "TxFrame",
    "modulate_qpsk",
    "draw_bits",
    "build_training_sequence",
    "superimpose",
    "pilot_spectrum_is_cleared",
    "build_tx_frame",
]


@dataclass(frozen=True)
class DdstConfig:
    """Frame dimensions and transmit power split.

    n: frame length in samples; p: training period; q = n/p repetitions.
    t is the integer cyclic shift of the pilot comb (0 in all experiments
    here; kept general for the projector algebra). Power fractions refer to
    shares of the total pre-amplifier transmit power.
    """

    n: int = 240
    p: int = 12
    t: int = 0
    data_power_fraction: float = 0.9
    training_power_fraction: float = 0.1
    total_power: float = 1.0
    modulation: str = "qpsk"

    def __post_init__(self):
        if self.p <= 0 or self.n <= 0:
            raise ConfigError("frame length and training period must be positive")
        if self.n % self.p != 0:
            raise ConfigError(
                f"frame length {self.n} is not an integer multiple of period {self.p}"
            )
        if self.n // self.p < 2:
            raise ConfigError("need at least two training periods per frame")
        if not (0.0 < self.data_power_fraction < 1.0):
            raise ConfigError("data_power_fraction must lie in (0, 1)")
        if not (0.0 < self.training_power_fraction < 1.0):
            raise ConfigError("training_power_fraction must lie in (0, 1)")
        if abs(self.data_power_fraction + self.training_power_fraction - 1.0) > 1e-12:
            raise ConfigError("power fractions must sum to 1")
        if self.total_power <= 0:
            raise ConfigError("total_power must be positive")
        if self.modulation.lower() != "qpsk":
            raise ConfigError(f"unsupported modulation {self.modulation!r}")

    @property
    def q(self) -> int:
        return self.n // self.p

    @property
    def bits_per_frame(self) -> int:
        return 2 * self.n

    @property
    def symbol_energy(self) -> float:
        """Per-symbol energy of the modulated data before projection.

        The projection removes exactly 1/q of the average data power, so the
        raw constellation is driven q/(q-1) hot to make the *transmitted*
        data power equal data_power_fraction * total_power.
        """
        return self.data_power_fraction * self.total_power * self.q / (self.q - 1)

    @property
    def training_sample_power(self) -> float:
        return self.training_power_fraction * self.total_power

    def pilot_bins(self) -> np.ndarray:
        """Frequency bins carrying the training comb: k*q + t, k = 0..p-1."""
        return (np.arange(self.p) * self.q + self.t) % self.n


class DdstProjector:
    """Structural application of the frame projector and its complement.

    The interference operator averages the q length-p blocks of a frame with
    phase weights exp(j*2*pi*t*(block difference)/q) and replicates the
    result; the projector subtracts that component. Both are applied in O(n)
    without forming the n-by-n matrices.
    """

    def __init__(self, config: DdstConfig):
        self.config = config
        q = config.q
        # per-block phase weights; all ones for t = 0
        self._w = np.exp(2j * np.pi * config.t * np.arange(q) / q)

    def interference_component(self, s: np.ndarray) -> np.ndarray:
        """The P-periodic (phase-twisted) component removed before transmit."""
        s = self._check(s)
        blocks = s.reshape(self.config.q, self.config.p)
        combined = (np.conj(self._w)[:, None] * blocks).mean(axis=0)
        return (self._w[:, None] * combined[None, :]).reshape(-1)

    def project(self, s: np.ndarray) -> np.ndarray:
        """Remove the component that would collide with the training comb."""
        return self._check(s) - self.interference_component(s)

    def _check(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s)
        if s.shape != (self.config.n,):
            raise DimensionError(
                f"expected a length-{self.config.n} vector, got shape {s.shape}"
            )
        return s


def modulate_qpsk(bits: np.ndarray, energy_per_symbol: float) -> np.ndarray:
    """Gray-mapped QPSK: pair (b0, b1) -> ((1-2*b0) + j*(1-2*b1)) * sqrt(E/2).

    Every symbol has magnitude sqrt(energy_per_symbol) exactly.
    """
    bits = np.asarray(bits)
    if bits.size % 2 != 0:
        raise FormatError(f"QPSK needs an even number of bits, got {bits.size}")
    pairs = bits.reshape(-1, 2)
    amp = np.sqrt(energy_per_symbol / 2.0)
    return amp * ((1.0 - 2.0 * pairs[:, 0]) + 1j * (1.0 - 2.0 * pairs[:, 1]))


def draw_bits(config: DdstConfig, rng) -> np.ndarray:
    """One frame's worth of uniform random bits."""
    rng = np.random.default_rng(rng)
    return rng.integers(0, 2, size=config.bits_per_frame)


def build_training_sequence(config: DdstConfig, rng) -> np.ndarray:
    """Tile a constant-modulus random-phase base sequence over the frame.

    The base has length p and per-sample power equal to the training share of
    the total transmit power; tiling it q times makes the sequence exactly
    p-periodic, so its spectrum lives only on the q-spaced pilot bins.
    """
    rng = np.random.default_rng(rng)
    phases = rng.uniform(0.0, 2.0 * np.pi, size=config.p)
    base = np.sqrt(config.training_sample_power) * np.exp(1j * phases)
    return np.tile(base, config.q)


def superimpose(s_tds: np.ndarray, c: np.ndarray) -> np.ndarray:
    """Add the training sequence onto the projected data."""
    s_tds = np.asarray(s_tds)
    c = np.asarray(c)
    if s_tds.shape != c.shape:
        raise DimensionError(
            f"shape mismatch: data {s_tds.shape} vs training {c.shape}"
        )
    return s_tds + c


def pilot_spectrum_is_cleared(s_tds: np.ndarray, config: DdstConfig) -> bool:
    """True iff the frame carries (essentially) no energy on the pilot bins.

    Threshold: every pilot-bin magnitude below 1e-9 times the frame norm.
    The all-zero frame trivially passes.
    """
    s_tds = np.asarray(s_tds)
    norm = np.linalg.norm(s_tds)
    if norm == 0.0:
        return True
    spectrum = dsp.dft(s_tds)
    return bool(np.all(np.abs(spectrum[config.pilot_bins()]) < 1e-9 * norm))


@dataclass
class TxFrame:
    """One frame at every pre-amplifier pipeline stage."""

    bits: np.ndarray
    symbols: np.ndarray  # modulated data s
    projected: np.ndarray  # s after projection
    x: np.ndarray  # superimposed transmit frame
    training: np.ndarray = field(repr=False, default=None)


def build_tx_frame(
    bits: np.ndarray,
    training: np.ndarray,
    config: DdstConfig,
    projector: DdstProjector,
) -> TxFrame:
    """Modulate, project, and superimpose one frame."""
    s = modulate_qpsk(bits, config.symbol_energy)
    if s.shape[0] != config.n:
        raise DimensionError(
            f"bit count {len(bits)} does not give {config.n} QPSK symbols"
        )
    s_tds = projector.project(s)
    x = superimpose(s_tds, training)
    return TxFrame(bits=np.asarray(bits), symbols=s, projected=s_tds, x=x, training=training)
