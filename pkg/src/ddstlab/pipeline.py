"""Receiver variants and the online detection pipeline.

A variant pairs a channel-estimation stage (ls, mmse, or the trained channel
refiner) with a detection stage (zf, mmse, or the trained detection
refiner). Variant labels follow the conventional CE/SD naming so sweep
output can be compared across studies.
"""

from dataclasses import dataclass

import numpy as np

from . import dsp, receiver
from .datasets import pack_detector_input
from .errors import ConfigError, DependencyError, DimensionError
from .link import FrameObservation, LinkModel
from .mlp import MlpModel
from .receiver import ChannelEstimate

__all__ = [
    "VARIANTS",
    "ReceiverModels",
    "detect_frames",
    "online_procedure",
]

# label -> (estimator kind, detector kind)
VARIANTS = {
    "LS_CE + ZF_SD": ("ls", "zf"),
    "LS_CE + MMSE_SD": ("ls", "mmse"),
    "LS_CE + SD_Net": ("ls", "sd_net"),
    "MMSE_CE + ZF_SD": ("mmse", "zf"),
    "MMSE_CE + MMSE_SD": ("mmse", "mmse"),
    "MMSE_CE + SD_Net": ("mmse", "sd_net"),
    "CE_Net + ZF_SD": ("ce_net", "zf"),
    "CE_Net + MMSE_SD": ("ce_net", "mmse"),
    "CE_Net + SD_Net": ("ce_net", "sd_net"),
}


@dataclass
class ReceiverModels:
    """Optional trained refiners; absent models restrict the variant set."""

    ce: MlpModel | None = None
    sd: MlpModel | None = None

    def require(self, estimator: str, detector: str):
        if estimator == "ce_net" and self.ce is None:
            raise DependencyError("variant needs a channel-refiner checkpoint")
        if detector == "sd_net" and self.sd is None:
            raise DependencyError("variant needs a detection-refiner checkpoint")


def _variant_kinds(variant: str):
    try:
        return VARIANTS[variant]
    except KeyError:
        raise ConfigError(
            f"unknown receiver variant {variant!r}; choose from {sorted(VARIANTS)}"
        ) from None


def detect_frames(
    observations: list[FrameObservation],
    link: LinkModel,
    variant: str,
    models: ReceiverModels,
    sigma_v2: float,
) -> np.ndarray:
    """Detect a batch of frames; returns a (frames, 2n) bit matrix.

    Frames are processed stage by stage so the refiner forward passes run on
    the whole batch at once.
    """
    estimator, detector = _variant_kinds(variant)
    models.require(estimator, detector)
    cfg = link.config
    projector = link.projector
    profile = link.tap_profile()
    symbol_power = cfg.data_power_fraction * cfg.total_power

    estimates = []
    if estimator == "ce_net":
        packed = np.empty((len(observations), 2 * cfg.n))
        for i, obs in enumerate(observations):
            ls = receiver.ls_estimate(obs.y, obs.training, cfg)
            packed[i] = dsp.complex_to_real(ls.freq_full)
        refined = models.ce.forward(packed, training=False)
        for row in refined:
            estimates.append(
                ChannelEstimate(dsp.real_to_complex(row), None, "refined")
            )
    else:
        for obs in observations:
            if estimator == "ls":
                estimates.append(receiver.ls_estimate(obs.y, obs.training, cfg))
            else:
                estimates.append(
                    receiver.mmse_estimate(obs.y, obs.training, cfg, profile, sigma_v2)
                )

    equalized = np.empty((len(observations), 2 * cfg.n))
    for i, obs in enumerate(observations):
        y_clean = receiver.remove_training(obs.y, projector)
        if detector == "mmse":
            eq = receiver.mmse_equalize(y_clean, estimates[i], sigma_v2, symbol_power)
        else:
            eq = receiver.zf_equalize(y_clean, estimates[i])
        if detector == "sd_net":
            equalized[i] = pack_detector_input(eq.time_symbols, cfg.symbol_energy)
        else:
            equalized[i] = dsp.complex_to_real(eq.time_symbols)

    if detector == "sd_net":
        equalized = models.sd.forward(equalized, training=False)
    symbols = dsp.real_to_complex(equalized)

    bits = np.empty((len(observations), cfg.bits_per_frame), dtype=np.int64)
    for i in range(len(observations)):
        bits[i] = receiver.demap_qpsk(symbols[i])
    return bits


def online_procedure(
    y: np.ndarray,
    training_sequence: np.ndarray,
    link: LinkModel,
    models: ReceiverModels,
) -> tuple[np.ndarray, list[str]]:
    """Full refined pipeline on one frame, with a stage trace.

    Stages: (1) least-squares estimation, (2) channel refinement, (3)
    zero-forcing equalization, (4) detection refinement. Returns the
    detected bits and the executed stage names in order.
    """
    models.require("ce_net", "sd_net")
    cfg = link.config
    if np.asarray(y).shape != (cfg.n,):
        raise DimensionError(
            f"frame must have length {cfg.n}, got {np.asarray(y).shape}"
        )
    trace = []
    ls = receiver.ls_estimate(y, training_sequence, cfg)
    trace.append("ls_estimate")
    refined = models.ce.forward(dsp.complex_to_real(ls.freq_full), training=False)
    estimate = ChannelEstimate(dsp.real_to_complex(refined), None, "refined")
    trace.append("channel_refinement")
    y_clean = receiver.remove_training(y, link.projector)
    eq = receiver.zf_equalize(y_clean, estimate)
    trace.append("zf_equalization")
    packed = pack_detector_input(eq.time_symbols, cfg.symbol_energy)
    detected = dsp.real_to_complex(models.sd.forward(packed, training=False))
    trace.append("detection_refinement")
    return receiver.demap_qpsk(detected), trace
