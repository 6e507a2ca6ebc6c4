"""Experiment orchestration: configs, calibration, training runs, BER sweeps.

Everything here is deterministic given the experiment seed: sub-seeds for
calibration, dataset generation, initialization, and Monte-Carlo cells are
derived from (seed, purpose-tag) hashes, so re-running a command reproduces
its artifacts exactly.
"""

import csv
import hashlib
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import datasets as datasets_mod
from . import frame as frame_mod
from . import mlp
from .errors import ConfigError, DependencyError
from .frame import DdstConfig, DdstProjector
from .impairments import SalehHpa, calibrate_drive_level
from .link import LinkModel, stable_hash
from .pipeline import VARIANTS, ReceiverModels, detect_frames

__all__ = [
    "ExperimentConfig",
    "SweepCell",
    "load_config_file",
    "derive_seed",
    "build_link",
    "train_refiner",
    "regularization_study",
    "run_snr_sweep",
    "run_grid_sweep",
    "write_sweep_csv",
    "write_loss_csv",
]

DEFAULT_VARIANTS = ("LS_CE + ZF_SD", "MMSE_CE + MMSE_SD", "CE_Net + SD_Net")


@dataclass(frozen=True)
class ExperimentConfig:
    """Flat experiment description; also the schema of the config file."""

    # frame geometry and power split
    n: int = 240
    p: int = 12
    t: int = 0
    data_power_fraction: float = 0.9
    training_power_fraction: float = 0.1
    # impairments
    hpa_enabled: bool = True
    alpha_a: float = 1.96
    beta_a: float = 0.99
    alpha_phi: float = 2.53
    beta_phi: float = 2.82
    target_evm_pct: float = 55.0
    num_paths: int = 12
    # refiner training
    train_samples: int = 60000
    val_samples: int = 20000
    train_snr_grid_db: tuple = (0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0)
    learning_rate: float = 1e-4
    batch_size: int = 80
    ce_l2: float = 1e-5
    sd_l2: float = 1e-7
    ce_epochs: int = 10
    sd_epochs: int = 20
    # Monte-Carlo sweep
    variants: tuple = DEFAULT_VARIANTS
    snr_grid_db: tuple = (0.0, 3.0, 6.0, 9.0, 12.0, 15.0, 18.0, 21.0, 24.0, 27.0, 30.0)
    evm_grid_pct: tuple = ()
    paths_grid: tuple = ()
    min_errors: int = 100
    max_bits_per_point: int = 1_000_000
    min_frames: int = 1
    chunk_frames: int = 100
    # bookkeeping
    seed: int = 0
    deterministic: bool = False
    calibration_frames: int = 100
    power_frames: int = 1000

    def ddst(self) -> DdstConfig:
        return DdstConfig(
            n=self.n,
            p=self.p,
            t=self.t,
            data_power_fraction=self.data_power_fraction,
            training_power_fraction=self.training_power_fraction,
        )

    def config_hash(self) -> str:
        return stable_hash(asdict(self))

    def validate(self):
        self.ddst()  # frame geometry checks
        unknown = [v for v in self.variants if v not in VARIANTS]
        if unknown:
            raise ConfigError(f"unknown variants: {unknown}")
        if len(self.snr_grid_db) == 0:
            raise ConfigError("SNR grid must not be empty")
        if self.min_frames < 1 or self.min_errors < 0:
            raise ConfigError("trial settings out of range")
        return self


def derive_seed(base: int, tag: str) -> int:
    """Stable 63-bit sub-seed for one purpose within an experiment."""
    digest = hashlib.sha256(f"{base}:{tag}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def _parse_value(text: str, kind):
    text = text.strip()
    if kind is bool:
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"expected a boolean, got {text!r}")
    if kind is int:
        return int(text)
    if kind is float:
        return float(text)
    if kind is tuple:
        if not text:
            return ()
        return tuple(item.strip() for item in text.split(","))
    return text


def _coerce_tuple(name: str, value: tuple) -> tuple:
    if name == "variants":
        return tuple(str(v) for v in value)
    if name == "paths_grid":
        return tuple(int(float(v)) for v in value)
    return tuple(float(v) for v in value)


def load_config_file(path, base: ExperimentConfig = None) -> ExperimentConfig:
    """Read a key = value file (# comments) into an ExperimentConfig."""
    config = base if base is not None else ExperimentConfig()
    kinds = {f.name: f.type for f in fields(ExperimentConfig)}
    types = {"int": int, "float": float, "bool": bool, "tuple": tuple, "str": str}
    overrides = {}
    try:
        lines = open(path, encoding="utf-8").read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line or line.startswith("["):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in kinds:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        kind = types.get(kinds[key], str) if isinstance(kinds[key], str) else kinds[key]
        try:
            parsed = _parse_value(value, kind)
            if kind is tuple:
                parsed = _coerce_tuple(key, parsed)
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from exc
        overrides[key] = parsed
    return replace(config, **overrides).validate()


# ---- link construction ----------------------------------------------------


def build_link(exp: ExperimentConfig, target_evm_pct=None, num_paths=None) -> LinkModel:
    """Calibrate the amplifier to the requested EVM and freeze the link."""
    cfg = exp.ddst()
    evm = exp.target_evm_pct if target_evm_pct is None else target_evm_pct
    paths = exp.num_paths if num_paths is None else num_paths
    hpa = None
    if exp.hpa_enabled:
        base = SalehHpa(exp.alpha_a, exp.beta_a, exp.alpha_phi, exp.beta_phi)
        rng = np.random.default_rng(derive_seed(exp.seed, f"calibration:{evm}"))
        projector = DdstProjector(cfg)
        frames = [
            frame_mod.build_tx_frame(
                frame_mod.draw_bits(cfg, rng),
                frame_mod.build_training_sequence(cfg, rng),
                cfg,
                projector,
            ).x
            for _ in range(exp.calibration_frames)
        ]
        hpa = base.with_input_scale(calibrate_drive_level(evm, base, frames))
    return LinkModel.build(
        cfg,
        hpa,
        paths,
        rng=derive_seed(exp.seed, f"link:{evm}:{paths}"),
        power_frames=exp.power_frames,
    )


# ---- training orchestration --------------------------------------------------


def train_refiner(
    kind: str,
    link: LinkModel,
    exp: ExperimentConfig,
    ce_model: mlp.MlpModel = None,
    l2_coeff: float = None,
    epochs: int = None,
    samples: int = None,
    val_samples: int = None,
):
    """Build datasets and train one refiner; returns (model, history).

    kind is "ce" or "sd"; training the detector needs the trained channel
    refiner to generate its inputs.
    """
    if kind not in ("ce", "sd"):
        raise ConfigError(f"unknown refiner kind {kind!r}")
    count = exp.train_samples if samples is None else samples
    val_count = exp.val_samples if val_samples is None else val_samples
    grid = exp.train_snr_grid_db
    if kind == "ce":
        train_set = datasets_mod.build_ce_dataset(
            link, count, grid, derive_seed(exp.seed, "ce-train")
        )
        val_set = datasets_mod.build_ce_dataset(
            link, val_count, grid, derive_seed(exp.seed, "ce-val")
        )
        arch = mlp.channel_refiner_architecture(link.config.n)
        l2 = exp.ce_l2 if l2_coeff is None else l2_coeff
        n_epochs = exp.ce_epochs if epochs is None else epochs
    else:
        if ce_model is None:
            raise DependencyError(
                "training the detection refiner requires a trained channel refiner"
            )
        train_set = datasets_mod.build_sd_dataset(
            link, ce_model, count, grid, derive_seed(exp.seed, "sd-train")
        )
        val_set = datasets_mod.build_sd_dataset(
            link, ce_model, val_count, grid, derive_seed(exp.seed, "sd-val")
        )
        arch = mlp.detection_refiner_architecture(link.config.n)
        l2 = exp.sd_l2 if l2_coeff is None else l2_coeff
        n_epochs = exp.sd_epochs if epochs is None else epochs
    model = mlp.MlpModel.glorot_init(arch, derive_seed(exp.seed, f"{kind}-init"))
    config = mlp.TrainingConfig(
        learning_rate=exp.learning_rate,
        batch_size=exp.batch_size,
        l2_coeff=l2,
        epochs=n_epochs,
        shuffle_seed=derive_seed(exp.seed, f"{kind}-shuffle"),
    )
    best, history = mlp.train(
        model, train_set.inputs, train_set.labels, val_set.inputs, val_set.labels, config
    )
    return best, history


def regularization_study(
    kind: str,
    link: LinkModel,
    exp: ExperimentConfig,
    alphas,
    ce_model: mlp.MlpModel = None,
    epochs: int = None,
    samples: int = None,
    val_samples: int = None,
) -> dict:
    """Train one refiner per regularization coefficient; returns histories."""
    histories = {}
    for alpha in alphas:
        _, history = train_refiner(
            kind,
            link,
            exp,
            ce_model=ce_model,
            l2_coeff=float(alpha),
            epochs=epochs,
            samples=samples,
            val_samples=val_samples,
        )
        histories[float(alpha)] = history
    return histories


# ---- Monte-Carlo sweep -----------------------------------------------------------


@dataclass
class SweepCell:
    """One (variant, operating point) row of a BER sweep."""

    variant: str
    snr_db: float
    evm_pct: float
    num_paths: int
    frames: int
    bits: int
    bit_errors: int
    ber: float
    wall_time_s: float
    capped: bool = False


def run_snr_sweep(
    link: LinkModel,
    variants,
    snr_grid_db,
    models: ReceiverModels,
    exp: ExperimentConfig,
    evm_pct: float = None,
) -> list[SweepCell]:
    """BER for every (variant, SNR) cell of one link configuration.

    Each cell accumulates frames until it has both the configured minimum
    frames and the minimum error count, or hits the bit cap (flagged).
    All variants of a cell share the same frame realizations, so comparisons
    are paired.
    """
    cfg = link.config
    evm = exp.target_evm_pct if evm_pct is None else evm_pct
    if not exp.hpa_enabled:
        evm = 0.0
    rows = []
    for snr in snr_grid_db:
        sigma_v2 = link.noise_variance(snr)
        rng = np.random.default_rng(
            derive_seed(exp.seed, f"sweep:{evm}:{link.num_paths}:{snr}")
        )
        counts = {v: [0, 0, 0] for v in variants}  # frames, bits, errors
        timers = {v: 0.0 for v in variants}
        pending = set(variants)
        while pending:
            observations = [
                link.simulate_frame(snr, rng) for _ in range(exp.chunk_frames)
            ]
            truth = np.stack([obs.bits for obs in observations])
            for variant in sorted(pending):
                start = time.perf_counter()
                detected = detect_frames(observations, link, variant, models, sigma_v2)
                timers[variant] += time.perf_counter() - start
                errors = int(np.count_nonzero(detected != truth))
                counts[variant][0] += len(observations)
                counts[variant][1] += truth.size
                counts[variant][2] += errors
            for variant in list(pending):
                frames, bits, errors = counts[variant]
                done = frames >= exp.min_frames and errors >= exp.min_errors
                if done or bits >= exp.max_bits_per_point:
                    pending.discard(variant)
        for variant in variants:
            frames, bits, errors = counts[variant]
            rows.append(
                SweepCell(
                    variant=variant,
                    snr_db=float(snr),
                    evm_pct=float(evm),
                    num_paths=link.num_paths,
                    frames=frames,
                    bits=bits,
                    bit_errors=errors,
                    ber=errors / bits,
                    wall_time_s=0.0 if exp.deterministic else timers[variant],
                    capped=errors < exp.min_errors,
                )
            )
    return rows


def run_grid_sweep(exp: ExperimentConfig, models: ReceiverModels) -> list[SweepCell]:
    """Sweep the full (EVM grid x path grid x SNR grid) cube.

    Empty EVM/path grids mean "hold at the base configuration". Each EVM
    value triggers its own drive-level calibration; each path count gets its
    own link context.
    """
    evm_values = exp.evm_grid_pct or (exp.target_evm_pct,)
    path_values = exp.paths_grid or (exp.num_paths,)
    rows = []
    for evm in evm_values:
        for paths in path_values:
            link = build_link(exp, target_evm_pct=evm, num_paths=paths)
            rows.extend(
                run_snr_sweep(link, exp.variants, exp.snr_grid_db, models, exp, evm_pct=evm)
            )
    rows.sort(key=lambda r: (r.variant, r.evm_pct, r.num_paths, r.snr_db))
    return rows


# ---- artifact writers ----------------------------------------------------------


def write_sweep_csv(rows: list[SweepCell], path, config_hash: str):
    """Full sweep table, one row per cell, with a config-hash header line."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(
            [
                "variant",
                "snr_db",
                "evm_pct",
                "num_paths",
                "frames",
                "bits",
                "bit_errors",
                "ber",
                "wall_time_s",
                "capped",
            ]
        )
        for r in rows:
            writer.writerow(
                [
                    r.variant,
                    f"{r.snr_db:g}",
                    f"{r.evm_pct:g}",
                    r.num_paths,
                    r.frames,
                    r.bits,
                    r.bit_errors,
                    repr(r.ber),
                    f"{r.wall_time_s:.3f}",
                    int(r.capped),
                ]
            )


def write_points_csv(rows: list[SweepCell], path, config_hash: str):
    """Plot-ready long-format companion file (one BER point per line)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["variant", "evm_pct", "num_paths", "snr_db", "ber"])
        for r in rows:
            writer.writerow(
                [r.variant, f"{r.evm_pct:g}", r.num_paths, f"{r.snr_db:g}", repr(r.ber)]
            )


def write_loss_csv(history: mlp.TrainingHistory, path, config_hash: str):
    """Per-epoch training/validation loss curves."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for epoch, (tr, va) in enumerate(zip(history.train_loss, history.val_loss)):
            writer.writerow([epoch, repr(tr), repr(va)])
