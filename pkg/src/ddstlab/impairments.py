"""Transmitter nonlinearity, multipath channel, and receiver noise.

The amplifier is the classic memoryless Saleh model acting on the complex
envelope: with r the drive-scaled input magnitude, the output magnitude is
A(r) = alpha_a*r / (1 + beta_a*r^2) and the added phase is
Phi(r) = alpha_phi*r^2 / (1 + beta_phi*r^2). Distortion strength is dialed
via the drive level (input back-off), calibrated to hit a target error
vector magnitude.

The channel is an L-tap Rayleigh tapped-delay line with an exponentially
decaying power-delay profile, applied as circular convolution over the
frame, so per-bin frequency-domain processing at the receiver is exact.
"""

from dataclasses import dataclass, replace

import numpy as np

from . import frame as _frame
from .errors import CalibrationError, ConfigError, UndefinedInputError
from .frame import DdstConfig

__all__ = [
    "SalehHpa",
    "ChannelRealization",
    "NoiseSpec",
    "apply_hpa",
    "measure_evm",
    "calibrate_drive_level",
    "tap_power_profile",
    "draw_channel",
    "add_noise",
    "transmit",
    "mean_distorted_power",
]


@dataclass(frozen=True)
class SalehHpa:
    """Saleh amplifier parameters plus the drive-level scalar."""

    alpha_a: float = 1.96
    beta_a: float = 0.99
    alpha_phi: float = 2.53
    beta_phi: float = 2.82
    input_scale: float = 1.0

    def with_input_scale(self, input_scale: float) -> "SalehHpa":
        return replace(self, input_scale=input_scale)

    def amam(self, r):
        """Output magnitude for (already drive-scaled) input magnitude r."""
        r = np.asarray(r, dtype=float)
        return self.alpha_a * r / (1.0 + self.beta_a * r**2)

    def ampm(self, r):
        """Added phase (radians) for input magnitude r."""
        r = np.asarray(r, dtype=float)
        return self.alpha_phi * r**2 / (1.0 + self.beta_phi * r**2)

    @property
    def small_signal_gain(self) -> float:
        """Linear gain seen by a vanishing input, drive level included."""
        return self.alpha_a * self.input_scale


def apply_hpa(x: np.ndarray, hpa: SalehHpa) -> np.ndarray:
    """Pass a complex baseband vector through the amplifier.

    Each sample keeps its angle plus the AM/PM shift; its magnitude maps
    through the AM/AM curve at drive level input_scale * |x|.
    """
    x = np.asarray(x)
    r = hpa.input_scale * np.abs(x)
    # A(r)*exp(j*angle(x)) written gain-style so x = 0 maps to 0 cleanly
    gain = hpa.alpha_a * hpa.input_scale / (1.0 + hpa.beta_a * r**2)
    return gain * x * np.exp(1j * hpa.ampm(r))


def measure_evm(x: np.ndarray, hpa: SalehHpa) -> float:
    """Error vector magnitude (percent) of the amplifier on this input.

    The reference is the ideal linear amplifier with the same small-signal
    gain, so the EVM tends to zero as the drive level does.
    """
    x = np.asarray(x)
    reference = hpa.small_signal_gain * x
    ref_energy = np.sum(np.abs(reference) ** 2)
    if ref_energy == 0.0:
        raise UndefinedInputError("EVM is undefined for an all-zero input")
    distorted = apply_hpa(x, hpa)
    return 100.0 * float(
        np.sqrt(np.sum(np.abs(distorted - reference) ** 2) / ref_energy)
    )


def _mean_evm(frames, hpa: SalehHpa, input_scale: float) -> float:
    h = hpa.with_input_scale(input_scale)
    return float(np.mean([measure_evm(f, h) for f in frames]))


def calibrate_drive_level(
    target_evm: float,
    hpa: SalehHpa,
    reference_frames,
    tol: float = 0.05,
    max_iter: int = 200,
) -> float:
    """Bisect the drive level until the mean EVM hits target_evm percent.

    reference_frames should be drawn from the actual transmit distribution.
    EVM grows monotonically with drive level over the operating range; the
    search asserts that while expanding the bracket and fails loudly if the
    target cannot be reached.
    """
    if not (0.0 < target_evm < 90.0):
        raise CalibrationError(f"target EVM {target_evm}% outside (0, 90)")
    frames = list(reference_frames)
    if not frames:
        raise CalibrationError("need at least one reference frame")

    lo, hi = 1e-6, 0.5
    evm_lo = _mean_evm(frames, hpa, lo)
    if evm_lo > target_evm:
        raise CalibrationError(
            f"EVM at minimum drive ({evm_lo:.2f}%) already above target {target_evm}%"
        )
    evm_hi = _mean_evm(frames, hpa, hi)
    last = evm_lo
    for _ in range(60):
        if evm_hi >= target_evm:
            break
        if evm_hi < last - 1e-9:
            raise CalibrationError(
                "EVM is not increasing with drive level; cannot bracket target"
            )
        last = evm_hi
        hi *= 2.0
        evm_hi = _mean_evm(frames, hpa, hi)
    else:
        raise CalibrationError(
            f"target EVM {target_evm}% unreachable (max seen {evm_hi:.2f}%)"
        )

    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        evm_mid = _mean_evm(frames, hpa, mid)
        if abs(evm_mid - target_evm) <= tol:
            return mid
        if evm_mid < target_evm:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"bisection did not converge to {target_evm}% within {max_iter} iterations"
    )


@dataclass(frozen=True)
class ChannelRealization:
    """L complex path gains and their length-N frequency response.

    freq_response[m] = sum_l taps[l] * exp(-j*2*pi*m*l/N), i.e. the plain
    (non-normalized) DFT of the zero-padded tap vector.
    """

    taps: np.ndarray
    freq_response: np.ndarray

    @property
    def num_paths(self) -> int:
        return len(self.taps)

    def padded_taps(self, n: int = None) -> np.ndarray:
        n = n if n is not None else len(self.freq_response)
        out = np.zeros(n, dtype=complex)
        out[: len(self.taps)] = self.taps
        return out

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Circularly convolve a frame with the channel taps."""
        return np.fft.ifft(np.fft.fft(x) * self.freq_response)


def tap_power_profile(num_paths: int, decay_db_per_tap: float = 3.0) -> np.ndarray:
    """Exponential power-delay profile, normalized to unit total power."""
    profile = 10.0 ** (-decay_db_per_tap * np.arange(num_paths) / 10.0)
    return profile / profile.sum()


def draw_channel(
    num_paths: int,
    config: DdstConfig,
    rng,
    decay_db_per_tap: float = 3.0,
) -> ChannelRealization:
    """Draw one Rayleigh tapped-delay-line realization.

    Taps are i.i.d. complex Gaussian shaped by the exponential profile and
    the realization is renormalized so the tap energies sum to one exactly.
    num_paths may not exceed the training period (the receiver's tap-domain
    truncation would otherwise lose channel energy).
    """
    if not (1 <= num_paths <= config.p):
        raise ConfigError(
            f"number of paths must be in [1, {config.p}], got {num_paths}"
        )
    rng = np.random.default_rng(rng)
    profile = tap_power_profile(num_paths, decay_db_per_tap)
    taps = np.sqrt(profile / 2.0) * (
        rng.standard_normal(num_paths) + 1j * rng.standard_normal(num_paths)
    )
    taps = taps / np.linalg.norm(taps)
    freq = np.fft.fft(taps, n=config.n)
    return ChannelRealization(taps=taps, freq_response=freq)


@dataclass(frozen=True)
class NoiseSpec:
    """Receiver SNR anchored to the measured distorted-frame power."""

    snr_db: float
    signal_power: float  # mean per-sample power of the distorted frame ensemble

    @property
    def variance(self) -> float:
        if np.isinf(self.snr_db):
            return 0.0
        return self.signal_power * 10.0 ** (-self.snr_db / 10.0)


def add_noise(y: np.ndarray, variance: float, rng) -> np.ndarray:
    """Add circular complex Gaussian noise with the given per-sample variance."""
    if variance == 0.0:
        return np.asarray(y)
    rng = np.random.default_rng(rng)
    scale = np.sqrt(variance / 2.0)
    noise = scale * (
        rng.standard_normal(len(y)) + 1j * rng.standard_normal(len(y))
    )
    return y + noise


def transmit(
    x: np.ndarray,
    hpa: SalehHpa | None,
    channel: ChannelRealization | None,
    noise: NoiseSpec | None,
    rng=None,
) -> np.ndarray:
    """Amplifier, channel, and noise in sequence; None disables a stage."""
    x_dis = apply_hpa(x, hpa) if hpa is not None else np.asarray(x)
    y = channel.apply(x_dis) if channel is not None else x_dis
    if noise is not None and noise.variance > 0.0:
        y = add_noise(y, noise.variance, rng)
    return y


def mean_distorted_power(
    config: DdstConfig,
    hpa: SalehHpa | None,
    rng,
    num_frames: int = 1000,
) -> float:
    """Average per-sample power at the amplifier output.

    Estimated over random transmit frames and then frozen by the caller so
    all SNR points of a configuration share one noise anchor.
    """
    rng = np.random.default_rng(rng)
    projector = _frame.DdstProjector(config)
    total = 0.0
    for _ in range(num_frames):
        bits = _frame.draw_bits(config, rng)
        c = _frame.build_training_sequence(config, rng)
        tx = _frame.build_tx_frame(bits, c, config, projector)
        x_dis = apply_hpa(tx.x, hpa) if hpa is not None else tx.x
        total += float(np.mean(np.abs(x_dis) ** 2))
    return total / num_frames
