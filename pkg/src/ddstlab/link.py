"""End-to-end link context: one place that wires frames through impairments.

A LinkModel freezes everything the Monte-Carlo machinery needs per
configuration: frame geometry, the calibrated amplifier, the channel length,
and the measured mean distorted-frame power that anchors every SNR point.
"""

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from . import frame as frame_mod
from . import impairments
from .frame import DdstConfig, DdstProjector
from .impairments import ChannelRealization, SalehHpa

__all__ = ["LinkModel", "FrameObservation", "stable_hash"]


def stable_hash(payload: dict) -> str:
    """Short deterministic hash of a JSON-serializable mapping."""
    text = json.dumps(payload, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class FrameObservation:
    """Everything about one simulated frame the receiver tests may need."""

    bits: np.ndarray
    symbols: np.ndarray
    projected: np.ndarray
    x: np.ndarray
    training: np.ndarray
    channel: ChannelRealization
    y: np.ndarray
    snr_db: float


@dataclass(frozen=True)
class LinkModel:
    """Frozen per-configuration simulation context.

    Besides the noise anchor, the context carries the amplifier's mean
    complex gain (the correlated part of the distortion). The product of
    that gain with a channel's frequency response is the *effective* linear
    channel the receiver experiences; it is what estimator refinement is
    trained toward, so that per-bin inversion by a refined estimate cancels
    the amplifier's average rotation exactly like the raw estimate does.
    """

    config: DdstConfig
    hpa: SalehHpa | None
    num_paths: int
    tap_decay_db: float
    mean_tx_power: float
    amplifier_gain: complex = 1.0 + 0.0j

    @classmethod
    def build(
        cls,
        config: DdstConfig,
        hpa: SalehHpa | None,
        num_paths: int,
        rng,
        power_frames: int = 1000,
    ) -> "LinkModel":
        """Measure the distorted-power and mean-gain anchors, then freeze."""
        rng = np.random.default_rng(rng)
        projector = DdstProjector(config)
        power_sum = 0.0
        cross = 0.0 + 0.0j
        energy = 0.0
        for _ in range(power_frames):
            bits = frame_mod.draw_bits(config, rng)
            c = frame_mod.build_training_sequence(config, rng)
            tx = frame_mod.build_tx_frame(bits, c, config, projector)
            x_dis = impairments.apply_hpa(tx.x, hpa) if hpa is not None else tx.x
            power_sum += float(np.mean(np.abs(x_dis) ** 2))
            cross += complex(np.vdot(tx.x, x_dis))
            energy += float(np.vdot(tx.x, tx.x).real)
        return cls(
            config=config,
            hpa=hpa,
            num_paths=num_paths,
            tap_decay_db=3.0,
            mean_tx_power=power_sum / power_frames,
            amplifier_gain=1.0 + 0.0j if hpa is None else cross / energy,
        )

    def effective_response(self, channel: ChannelRealization) -> np.ndarray:
        """Frequency response of the linearized amplifier-channel cascade."""
        return self.amplifier_gain * channel.freq_response

    @property
    def projector(self) -> DdstProjector:
        return DdstProjector(self.config)

    def tap_profile(self) -> np.ndarray:
        return impairments.tap_power_profile(self.num_paths, self.tap_decay_db)

    def noise_variance(self, snr_db: float) -> float:
        return impairments.NoiseSpec(snr_db, self.mean_tx_power).variance

    def describe(self) -> dict:
        """JSON-friendly summary used for config hashing of artifacts."""
        cfg = self.config
        return {
            "n": cfg.n,
            "p": cfg.p,
            "t": cfg.t,
            "data_power_fraction": cfg.data_power_fraction,
            "training_power_fraction": cfg.training_power_fraction,
            "total_power": cfg.total_power,
            "hpa": None
            if self.hpa is None
            else [
                self.hpa.alpha_a,
                self.hpa.beta_a,
                self.hpa.alpha_phi,
                self.hpa.beta_phi,
                self.hpa.input_scale,
            ],
            "num_paths": self.num_paths,
            "tap_decay_db": self.tap_decay_db,
            "mean_tx_power": self.mean_tx_power,
            "amplifier_gain": [self.amplifier_gain.real, self.amplifier_gain.imag],
        }

    def simulate_frame(self, snr_db: float, rng, projector=None) -> FrameObservation:
        """Draw one frame, one channel, one noise realization."""
        rng = np.random.default_rng(rng)
        projector = projector if projector is not None else self.projector
        bits = frame_mod.draw_bits(self.config, rng)
        training = frame_mod.build_training_sequence(self.config, rng)
        tx = frame_mod.build_tx_frame(bits, training, self.config, projector)
        channel = impairments.draw_channel(
            self.num_paths, self.config, rng, self.tap_decay_db
        )
        noise = impairments.NoiseSpec(snr_db, self.mean_tx_power)
        y = impairments.transmit(tx.x, self.hpa, channel, noise, rng)
        return FrameObservation(
            bits=tx.bits,
            symbols=tx.symbols,
            projected=tx.projected,
            x=tx.x,
            training=training,
            channel=channel,
            y=y,
            snr_db=snr_db,
        )
