"""Training-set builders for the two receiver refiners.

Channel-refiner samples pair the packed least-squares channel estimate with
the packed response of the linearized amplifier-channel cascade (for a clean
linear link that is exactly the channel response). Detection-refiner samples
pair the packed zero-forcing output (equalized with the *refined* channel
estimate) with the packed transmitted constellation symbols. Each sample
gets its own seed stream, so regeneration from the same seed is
byte-identical regardless of chunking.
"""

from dataclasses import dataclass

import numpy as np

from . import dsp, receiver
from .errors import FormatError
from .link import LinkModel, stable_hash
from .mlp import MlpModel
from .receiver import ChannelEstimate

__all__ = [
    "Dataset",
    "build_ce_dataset",
    "build_sd_dataset",
    "pack_detector_input",
    "save_dataset",
    "load_dataset",
]

DATASET_VERSION = 1

# detector inputs are clipped this many per-axis constellation amplitudes out;
# zero-forcing spikes at deep-fade bins otherwise dominate the loss and the
# input statistics while carrying no decision information
DETECTOR_INPUT_CLIP = 4.0


def pack_detector_input(time_symbols: np.ndarray, symbol_energy: float) -> np.ndarray:
    """Real-pack equalized symbols and clip zero-forcing outliers."""
    bound = DETECTOR_INPUT_CLIP * np.sqrt(symbol_energy / 2.0)
    return np.clip(dsp.complex_to_real(time_symbols), -bound, bound)


@dataclass
class Dataset:
    """Real-valued sample matrix pair plus per-sample SNR metadata."""

    inputs: np.ndarray  # (count, 2n)
    labels: np.ndarray  # (count, 2n)
    snr_db: np.ndarray  # (count,)
    seed: int
    config_hash: str
    kind: str  # "ce" or "sd"

    def __len__(self) -> int:
        return self.inputs.shape[0]


def _sample_rngs(seed: int, count: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _draw_snrs(link, snr_grid_db, rngs):
    grid = np.asarray(snr_grid_db, dtype=float)
    return np.array([rng.choice(grid) for rng in rngs])


def build_ce_dataset(link: LinkModel, count: int, snr_grid_db, seed: int) -> Dataset:
    """Simulate frames and collect (packed LS estimate, packed true response)."""
    cfg = link.config
    projector = link.projector
    rngs = _sample_rngs(seed, count)
    snrs = _draw_snrs(link, snr_grid_db, rngs)
    inputs = np.empty((count, 2 * cfg.n))
    labels = np.empty((count, 2 * cfg.n))
    for i, rng in enumerate(rngs):
        obs = link.simulate_frame(snrs[i], rng, projector)
        est = receiver.ls_estimate(obs.y, obs.training, cfg)
        inputs[i] = dsp.complex_to_real(est.freq_full)
        labels[i] = dsp.complex_to_real(link.effective_response(obs.channel))
    digest = stable_hash(
        {"kind": "ce", "link": link.describe(), "count": count,
         "snr_grid_db": list(np.asarray(snr_grid_db, dtype=float)), "seed": seed}
    )
    return Dataset(inputs, labels, snrs, seed, digest, "ce")


def build_sd_dataset(
    link: LinkModel,
    ce_model: MlpModel,
    count: int,
    snr_grid_db,
    seed: int,
    chunk: int = 256,
) -> Dataset:
    """Simulate frames and collect (packed ZF output, packed sent symbols).

    The zero-forcing stage uses the channel refiner's output as its channel
    estimate, matching how the detection refiner is used online.
    """
    cfg = link.config
    projector = link.projector
    rngs = _sample_rngs(seed, count)
    snrs = _draw_snrs(link, snr_grid_db, rngs)
    inputs = np.empty((count, 2 * cfg.n))
    labels = np.empty((count, 2 * cfg.n))
    for start in range(0, count, chunk):
        stop = min(start + chunk, count)
        observations = []
        ls_packed = np.empty((stop - start, 2 * cfg.n))
        for j, i in enumerate(range(start, stop)):
            obs = link.simulate_frame(snrs[i], rngs[i], projector)
            est = receiver.ls_estimate(obs.y, obs.training, cfg)
            ls_packed[j] = dsp.complex_to_real(est.freq_full)
            observations.append(obs)
        refined = ce_model.forward(ls_packed, training=False)
        for j, i in enumerate(range(start, stop)):
            obs = observations[j]
            est = ChannelEstimate(
                freq_full=dsp.real_to_complex(refined[j]), time_taps=None, method="refined"
            )
            y_clean = receiver.remove_training(obs.y, projector)
            eq = receiver.zf_equalize(y_clean, est)
            inputs[i] = pack_detector_input(eq.time_symbols, cfg.symbol_energy)
            labels[i] = dsp.complex_to_real(obs.symbols)
    digest = stable_hash(
        {"kind": "sd", "link": link.describe(), "count": count,
         "snr_grid_db": list(np.asarray(snr_grid_db, dtype=float)), "seed": seed,
         "ce_steps": ce_model.step_count}
    )
    return Dataset(inputs, labels, snrs, seed, digest, "sd")


def save_dataset(dataset: Dataset, path):
    with open(path, "wb") as fh:
        np.savez(
            fh,
            format_version=np.array(DATASET_VERSION),
            inputs=dataset.inputs,
            labels=dataset.labels,
            snr_db=dataset.snr_db,
            seed=np.array(dataset.seed),
            config_hash=np.array(dataset.config_hash),
            kind=np.array(dataset.kind),
        )


def load_dataset(path) -> Dataset:
    try:
        with np.load(path, allow_pickle=False) as data:
            if int(data["format_version"]) != DATASET_VERSION:
                raise FormatError(f"unsupported dataset version in {path}")
            return Dataset(
                inputs=data["inputs"],
                labels=data["labels"],
                snr_db=data["snr_db"],
                seed=int(data["seed"]),
                config_hash=str(data["config_hash"]),
                kind=str(data["kind"]),
            )
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"unreadable dataset {path}: {exc}") from exc
