"""Command-line entry points.

Subcommands: generate (datasets), train (refiners), infer (online pipeline
on stored frames), sweep (BER Monte Carlo), calibrate-evm (drive level for a
target EVM). Exit codes: 0 success, 2 configuration error, 3 missing
dependency, 4 numerical divergence or calibration failure.
"""

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import datasets as datasets_mod
from . import harness, mlp
from .errors import (
    CalibrationError,
    ConfigError,
    DependencyError,
    DimensionError,
    FormatError,
    TrainingDivergenceError,
)
from .pipeline import ReceiverModels, online_procedure

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_NUMERICAL = 4


def _add_common(parser):
    parser.add_argument("--config", help="key = value experiment file")
    parser.add_argument("--seed", type=int, help="experiment seed override")
    parser.add_argument("--deterministic", action="store_true",
                        help="make re-runs byte-identical (zeroes timing columns)")
    parser.add_argument("--out-dir", default=".", help="directory for artifacts")


def _load_experiment(args) -> harness.ExperimentConfig:
    exp = harness.ExperimentConfig()
    if args.config:
        exp = harness.load_config_file(args.config, exp)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.deterministic:
        overrides["deterministic"] = True
    if getattr(args, "trials", None) is not None:
        overrides["min_frames"] = args.trials
    if getattr(args, "variants", None):
        overrides["variants"] = tuple(v.strip() for v in args.variants.split(","))
    if getattr(args, "snr_grid", None):
        overrides["snr_grid_db"] = tuple(float(v) for v in args.snr_grid.split(","))
    if getattr(args, "evm", None) is not None:
        overrides["target_evm_pct"] = args.evm
    if getattr(args, "paths", None) is not None:
        overrides["num_paths"] = args.paths
    return replace(exp, **overrides).validate()


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    exp = _load_experiment(args)
    out = _out_dir(args)
    link = harness.build_link(exp)
    count = args.count if args.count is not None else exp.train_samples
    if args.net == "ce":
        dataset = datasets_mod.build_ce_dataset(
            link, count, exp.train_snr_grid_db, harness.derive_seed(exp.seed, "ce-train")
        )
    else:
        ce_path = out / "ce_refiner.npz" if args.ce_checkpoint is None else Path(args.ce_checkpoint)
        if not ce_path.exists():
            raise DependencyError(
                f"detection dataset needs the channel refiner; run "
                f"'ddstlab train ce' first (missing {ce_path})"
            )
        ce_model = mlp.load_checkpoint(ce_path)
        dataset = datasets_mod.build_sd_dataset(
            link, ce_model, count, exp.train_snr_grid_db,
            harness.derive_seed(exp.seed, "sd-train"),
        )
    path = out / f"{args.net}_dataset.npz"
    datasets_mod.save_dataset(dataset, path)
    manifest = out / f"{args.net}_dataset.manifest"
    manifest.write_text(
        f"config_hash={dataset.config_hash}\nrows={len(dataset)}\nseed={dataset.seed}\n"
    )
    print(f"wrote {path} ({len(dataset)} rows, hash {dataset.config_hash})")
    return EXIT_OK


def cmd_train(args) -> int:
    exp = _load_experiment(args)
    out = _out_dir(args)
    link = harness.build_link(exp)
    ce_model = None
    if args.net == "sd":
        ce_path = out / "ce_refiner.npz" if args.ce_checkpoint is None else Path(args.ce_checkpoint)
        if not ce_path.exists():
            raise DependencyError(
                f"training the detection refiner needs a channel-refiner "
                f"checkpoint; run 'ddstlab train ce' first (missing {ce_path})"
            )
        ce_model = mlp.load_checkpoint(ce_path)
    digest = exp.config_hash()
    if args.alpha_grid:
        alphas = [float(a) for a in args.alpha_grid.split(",")]
        histories = harness.regularization_study(
            args.net, link, exp, alphas, ce_model=ce_model,
            samples=args.count, val_samples=None if args.count is None else max(args.count // 5, 10),
        )
        for alpha, history in histories.items():
            path = out / f"{args.net}_loss_alpha_{alpha:.0e}.csv"
            harness.write_loss_csv(history, path, digest)
            print(f"alpha={alpha:g}: final train {history.train_loss[-1]:.5g} "
                  f"val {history.val_loss[-1]:.5g} -> {path}")
        return EXIT_OK
    model, history = harness.train_refiner(
        args.net, link, exp, ce_model=ce_model,
        samples=args.count, val_samples=None if args.count is None else max(args.count // 5, 10),
        epochs=args.epochs,
    )
    ckpt = out / f"{args.net}_refiner.npz"
    mlp.save_checkpoint(model, ckpt, config_hash=digest)
    curve = out / f"{args.net}_loss.csv"
    harness.write_loss_csv(history, curve, digest)
    print(
        f"trained {args.net} refiner: best val loss {history.best_val_loss:.5g} "
        f"(epoch {history.best_epoch}); wrote {ckpt} and {curve}"
    )
    return EXIT_OK


def cmd_infer(args) -> int:
    exp = _load_experiment(args)
    out = _out_dir(args)
    link = harness.build_link(exp)
    models = ReceiverModels(
        ce=mlp.load_checkpoint(args.ce_checkpoint),
        sd=mlp.load_checkpoint(args.sd_checkpoint),
    )
    try:
        with np.load(args.frames, allow_pickle=False) as data:
            received = np.atleast_2d(data["y"])
            training = np.atleast_2d(data["c"])
    except (OSError, ValueError, KeyError) as exc:
        raise FormatError(f"unreadable frames file {args.frames}: {exc}") from exc
    detected = []
    latencies = []
    trace = None
    for y, c in zip(received, training):
        start = time.perf_counter()
        bits, trace = online_procedure(y, c, link, models)
        latencies.append(time.perf_counter() - start)
        detected.append(bits)
    path = out / "detected_bits.npz"
    with open(path, "wb") as fh:
        np.savez(fh, bits=np.stack(detected), config_hash=np.array(exp.config_hash()))
    print("stages: " + " -> ".join(trace))
    print(
        f"detected {len(detected)} frames -> {path} "
        f"(mean latency {1e3 * float(np.mean(latencies)):.2f} ms/frame)"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    exp = _load_experiment(args)
    out = _out_dir(args)
    needs_ce = any("CE_Net" in v for v in exp.variants)
    needs_sd = any("SD_Net" in v for v in exp.variants)
    models = ReceiverModels()
    if needs_ce or needs_sd:
        if needs_ce:
            path = Path(args.ce_checkpoint) if args.ce_checkpoint else out / "ce_refiner.npz"
            if not path.exists():
                raise DependencyError(
                    f"sweep variants need {path}; run 'ddstlab train ce' first"
                )
            models.ce = mlp.load_checkpoint(path)
        if needs_sd:
            path = Path(args.sd_checkpoint) if args.sd_checkpoint else out / "sd_refiner.npz"
            if not path.exists():
                raise DependencyError(
                    f"sweep variants need {path}; run 'ddstlab train sd' first"
                )
            models.sd = mlp.load_checkpoint(path)
    rows = harness.run_grid_sweep(exp, models)
    digest = exp.config_hash()
    sweep_path = out / "sweep.csv"
    harness.write_sweep_csv(rows, sweep_path, digest)
    points_path = out / "sweep_points.csv"
    harness.write_points_csv(rows, points_path, digest)
    capped = sum(r.capped for r in rows)
    print(f"wrote {len(rows)} cells to {sweep_path} (+{points_path})"
          + (f"; {capped} cells hit the bit cap" if capped else ""))
    return EXIT_OK


def cmd_calibrate_evm(args) -> int:
    exp = _load_experiment(args)
    link = harness.build_link(exp)
    print(
        f"target EVM {exp.target_evm_pct:.1f}% -> input_scale "
        f"{link.hpa.input_scale:.6f} (mean distorted power {link.mean_tx_power:.4f})"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ddstlab",
        description="Superimposed-training link simulation lab",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="build and store a training dataset")
    p.add_argument("net", choices=("ce", "sd"))
    p.add_argument("--count", type=int, help="number of samples (default: config)")
    p.add_argument("--ce-checkpoint", help="channel-refiner checkpoint for sd data")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a refiner network")
    p.add_argument("net", choices=("ce", "sd"))
    p.add_argument("--count", type=int, help="training samples (default: config)")
    p.add_argument("--epochs", type=int, help="epoch override")
    p.add_argument("--alpha-grid", help="comma list of L2 coefficients to study")
    p.add_argument("--ce-checkpoint", help="channel-refiner checkpoint for sd training")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="run the refined pipeline on stored frames")
    p.add_argument("frames", help="npz file with arrays y and c")
    p.add_argument("--ce-checkpoint", required=True)
    p.add_argument("--sd-checkpoint", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("sweep", help="Monte-Carlo BER over SNR/EVM/path grids")
    p.add_argument("--trials", type=int, help="minimum frames per cell")
    p.add_argument("--variants", help="comma list of receiver variants")
    p.add_argument("--snr-grid", help="comma list of SNR points (dB)")
    p.add_argument("--evm", type=float, help="target EVM percent")
    p.add_argument("--paths", type=int, help="number of channel paths (L)")
    p.add_argument("--ce-checkpoint")
    p.add_argument("--sd-checkpoint")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate-evm", help="drive level for a target EVM")
    p.add_argument("--evm", type=float, help="target EVM percent")
    _add_common(p)
    p.set_defaults(func=cmd_calibrate_evm)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, FormatError, DimensionError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"missing dependency: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except (TrainingDivergenceError, CalibrationError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
