"""Model-driven receiver stages: channel estimation, equalization, demapping.

Channel estimation divides received by known training spectra on the pilot
bins, moves to the tap domain, truncates to the training period, and
re-expands to all bins. Because the transmit projection cleared the data
from the pilot bins, this estimate is exact in the noiseless, linear case.
Equalization is per-bin frequency-domain division (zero-forcing) or its
regularized variant.
"""

from dataclasses import dataclass

import numpy as np

from . import dsp
from .errors import ConfigError, DimensionError, IllConditionedPilotError
from .frame import DdstConfig, DdstProjector

__all__ = [
    "ChannelEstimate",
    "EqualizedFrame",
    "ls_estimate",
    "mmse_estimate",
    "remove_training",
    "zf_equalize",
    "mmse_equalize",
    "demap_qpsk",
    "count_errors",
]

# bins whose estimated gain magnitude falls below this are clipped, not inverted
ZF_GAIN_FLOOR = 1e-8


@dataclass
class ChannelEstimate:
    """Estimated channel: full-bin response plus the tap-domain vector.

    freq_full uses the same convention as ChannelRealization.freq_response
    (plain DFT of the zero-padded taps), so a perfect estimate equals the
    true response entry for entry.
    """

    freq_full: np.ndarray  # length n
    time_taps: np.ndarray  # length p
    method: str


@dataclass
class EqualizedFrame:
    """Equalizer output in the time domain."""

    time_symbols: np.ndarray
    method: str
    clipped_bins: int = 0


def ls_estimate(y: np.ndarray, c: np.ndarray, config: DdstConfig) -> ChannelEstimate:
    """Least-squares channel estimate from one received frame.

    Steps: unitary spectra of y and c; per-pilot-bin ratio; inverse P-point
    transform to taps; zero-pad; forward N-point transform. The two explicit
    sqrt factors fix the overall gain so that a noiseless, distortion-free
    frame reproduces the channel frequency response exactly.
    """
    y = np.asarray(y)
    c = np.asarray(c)
    if y.shape != (config.n,) or c.shape != (config.n,):
        raise DimensionError(
            f"received/training frames must have length {config.n}"
        )
    spectrum_y = dsp.dft(y)
    spectrum_c = dsp.dft(c)
    bins = config.pilot_bins()
    pilot_c = spectrum_c[bins]
    if np.min(np.abs(pilot_c)) <= 1e-9:
        raise IllConditionedPilotError(
            "training sequence has a near-zero pilot spectral value"
        )
    ratio = spectrum_y[bins] / pilot_c
    taps = dsp.dft(ratio, inverse=True) / np.sqrt(config.p)
    freq_full = np.sqrt(config.n) * dsp.dft(_pad(taps, config.n))
    return ChannelEstimate(freq_full=freq_full, time_taps=taps, method="ls")


def mmse_estimate(
    y: np.ndarray,
    c: np.ndarray,
    config: DdstConfig,
    tap_profile: np.ndarray,
    sigma_v2: float,
) -> ChannelEstimate:
    """Linear-MMSE refinement of the least-squares tap estimate.

    Needs second-order statistics: the per-tap power profile (diagonal tap
    covariance of the tapped-delay-line model) and the noise variance. Each
    tap of the LS estimate is shrunk by profile/(profile + per-tap noise),
    which degenerates to LS as sigma_v2 -> 0 and to zero as it grows.
    """
    if tap_profile is None or sigma_v2 is None:
        raise ConfigError("MMSE estimation needs a tap power profile and sigma_v2")
    tap_profile = np.asarray(tap_profile, dtype=float)
    if len(tap_profile) > config.p:
        raise ConfigError("tap profile longer than the training period")
    ls = ls_estimate(y, c, config)

    # noise variance reaching each tap through the pilot division + inverse DFT
    spectrum_c = dsp.dft(np.asarray(c))
    pilot_c = spectrum_c[config.pilot_bins()]
    sigma_tap2 = sigma_v2 / config.p**2 * float(np.sum(1.0 / np.abs(pilot_c) ** 2))

    profile = _pad(tap_profile, config.p).real
    denom = profile + sigma_tap2
    shrink = np.divide(profile, denom, out=np.zeros_like(profile), where=denom > 0)
    taps = shrink * ls.time_taps
    freq_full = np.sqrt(config.n) * dsp.dft(_pad(taps, config.n))
    return ChannelEstimate(freq_full=freq_full, time_taps=taps, method="mmse")


def remove_training(y: np.ndarray, projector: DdstProjector) -> np.ndarray:
    """Project the received frame off the training subspace.

    Circular convolution preserves periodicity, so for a linear channel the
    received training component is still P-periodic and is removed exactly.
    """
    return projector.project(y)


def zf_equalize(y_clean: np.ndarray, estimate: ChannelEstimate) -> EqualizedFrame:
    """Per-bin inversion of the estimated channel.

    Bins with |gain| below ZF_GAIN_FLOOR (legitimate deep fades) are clipped
    to the floor instead of inverted; the count is reported on the output.
    """
    y_clean = np.asarray(y_clean)
    n = len(estimate.freq_full)
    if y_clean.shape != (n,):
        raise DimensionError(f"expected a length-{n} frame, got {y_clean.shape}")
    spectrum = dsp.dft(y_clean)
    gains = estimate.freq_full
    mags = np.abs(gains)
    weak = mags < ZF_GAIN_FLOOR
    safe = np.where(
        weak,
        np.where(mags > 0, gains * (ZF_GAIN_FLOOR / np.maximum(mags, 1e-300)), ZF_GAIN_FLOOR),
        gains,
    )
    equalized = spectrum / safe
    return EqualizedFrame(
        time_symbols=dsp.dft(equalized, inverse=True),
        method="zf",
        clipped_bins=int(np.count_nonzero(weak)),
    )


def mmse_equalize(
    y_clean: np.ndarray,
    estimate: ChannelEstimate,
    sigma_v2: float,
    symbol_power: float,
) -> EqualizedFrame:
    """Regularized per-bin equalizer: conj(H) / (|H|^2 + sigma_v2/Es)."""
    y_clean = np.asarray(y_clean)
    n = len(estimate.freq_full)
    if y_clean.shape != (n,):
        raise DimensionError(f"expected a length-{n} frame, got {y_clean.shape}")
    spectrum = dsp.dft(y_clean)
    gains = estimate.freq_full
    weights = np.conj(gains) / (np.abs(gains) ** 2 + sigma_v2 / symbol_power)
    return EqualizedFrame(
        time_symbols=dsp.dft(weights * spectrum, inverse=True),
        method="mmse",
    )


def demap_qpsk(symbols) -> np.ndarray:
    """Hard QPSK decisions, inverse of the modulation mapping.

    Negative real part -> first bit 1, negative imaginary -> second bit 1;
    a coordinate exactly at zero decides bit 0.
    """
    if isinstance(symbols, EqualizedFrame):
        symbols = symbols.time_symbols
    symbols = np.asarray(symbols)
    bits = np.empty((symbols.size, 2), dtype=np.int64)
    bits[:, 0] = symbols.real < 0
    bits[:, 1] = symbols.imag < 0
    return bits.reshape(-1)


def count_errors(detected: np.ndarray, truth: np.ndarray) -> tuple[int, int]:
    """Hamming distance between bit blocks and the block length."""
    detected = np.asarray(detected)
    truth = np.asarray(truth)
    if detected.shape != truth.shape:
        raise DimensionError(
            f"bit blocks differ in shape: {detected.shape} vs {truth.shape}"
        )
    return int(np.count_nonzero(detected != truth)), int(truth.size)


def _pad(v: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n, dtype=complex)
    out[: len(v)] = v
    return out
