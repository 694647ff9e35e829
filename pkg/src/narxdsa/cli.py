"""Command-line entry point: ``narxdsa {noise-sweep,gen-data,train,evaluate}``.

Exit codes are 0 on success, 1 on usage or configuration errors (nothing is
written in that case) and 2 on failures during a run.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import ExperimentConfig, load_config
from .narx import init_model, load_model, save_model, train_lm, write_training_log
from .radio import ConfigurationError

log = logging.getLogger("narxdsa")

EVALUATE_OUTPUTS = ("noise_sweep.csv", "monte_carlo.csv", "sn_cdf.csv", "cqi_hist.csv")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


@dataclass
class RunManifest:
    command: str
    config_path: str | None
    config: dict
    master_seed: int
    version: str
    out_dir: str
    started: str
    finished: str | None = None
    extra: dict = field(default_factory=dict)

    def write(self, out_dir: Path) -> None:
        path = out_dir / "manifest.json"
        path.write_text(json.dumps(self.__dict__, indent=2, sort_keys=True) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="narxdsa", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", help="JSON experiment configuration (defaults if omitted)")
        p.add_argument("--seed", type=int, help="override the master seed")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                       help="worker processes for Monte Carlo cells")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("noise-sweep", help="PN throughput versus noise power"))
    common(sub.add_parser("gen-data", help="generate the NARX training set"))
    p = common(sub.add_parser("train", help="train the NARX predictor"))
    p.add_argument("--data", help="existing dataset.csv (generated when omitted)")
    p = common(sub.add_parser("evaluate", help="Monte Carlo evaluation of every policy"))
    p.add_argument("--model", help="trained model file (required for NN policies)")
    p.add_argument("--data", help="dataset.csv whose test split feeds the CQI histogram")
    return parser


def _resolve(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    cfg = cfg.with_overrides(master_seed=args.seed)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    return cfg


def _dataset(cfg, data_path):
    from .experiments.dataset import generate_training_data, read_dataset_csv
    if data_path:
        if not Path(data_path).is_file():
            raise UsageError(f"dataset not found: {data_path}")
        return read_dataset_csv(data_path, cfg.narx.warmup)
    return generate_training_data(cfg)


def cmd_noise_sweep(cfg, args, out: Path, manifest: RunManifest) -> None:
    from .experiments.montecarlo import write_noise_sweep_csv
    from .experiments.noise import run_noise_sweep
    write_noise_sweep_csv(run_noise_sweep(cfg), out / "noise_sweep.csv")


def cmd_gen_data(cfg, args, out: Path, manifest: RunManifest) -> None:
    from .experiments.dataset import generate_training_data, write_dataset_csv
    data = generate_training_data(cfg)
    write_dataset_csv(data, out / "dataset.csv")
    manifest.extra["samples"] = data.n_samples
    manifest.extra["sequences"] = len(data.sequences)


def cmd_train(cfg, args, out: Path, manifest: RunManifest) -> None:
    from .experiments.common import TRAINING, derive_seed
    from .experiments.dataset import write_dataset_csv
    data = _dataset(cfg, args.data)
    if not args.data:
        write_dataset_csv(data, out / "dataset.csv")
    result = train_lm(init_model(cfg.narx, derive_seed(cfg.master_seed, TRAINING)), data)
    save_model(result.model, out / "model.txt")
    write_training_log(result.history, out / "training_log.csv")
    manifest.extra.update(samples=data.n_samples, best_epoch=result.best_epoch,
                          best_val_mse=result.best_val_mse, stop_reason=result.stop_reason)
    log.info("best validation MSE %.6g at epoch %d", result.best_val_mse, result.best_epoch)


def cmd_evaluate(cfg, args, out: Path, manifest: RunManifest, model=None) -> None:
    from .experiments.common import amc_table
    from .experiments.dataset import cqi_error_histogram, write_cqi_hist_csv
    from .experiments.montecarlo import (aggregate, run_monte_carlo, sn_throughput_cdf,
                                         write_monte_carlo_csv, write_noise_sweep_csv, write_sn_cdf_csv)
    from .experiments.noise import run_noise_sweep

    write_noise_sweep_csv(run_noise_sweep(cfg), out / "noise_sweep.csv")
    cells = run_monte_carlo(cfg, model, jobs=args.jobs)
    records = aggregate(cells)
    write_monte_carlo_csv(cells, records, out / "monte_carlo.csv")
    write_sn_cdf_csv(sn_throughput_cdf(records), out / "sn_cdf.csv")
    hist = {}
    if model is not None:
        held_out = _dataset(cfg, args.data).subset("test")
        hist = cqi_error_histogram(model, held_out, amc_table(cfg))
    write_cqi_hist_csv(hist, out / "cqi_hist.csv")


COMMANDS = {
    "noise-sweep": cmd_noise_sweep,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    # validate everything before touching the output directory
    try:
        cfg = _resolve(args)
        model = None
        if args.command == "evaluate":
            from .experiments.montecarlo import NN_POLICIES
            needs_model = any(p in NN_POLICIES for p in cfg.policies)
            if needs_model and not args.model:
                raise UsageError("NN policies are configured but no --model was given")
            if args.model:
                try:
                    model = load_model(args.model, cfg.narx)
                except OSError as exc:
                    raise UsageError(f"cannot read model: {exc}") from exc
            if args.data and not Path(args.data).is_file():
                raise UsageError(f"dataset not found: {args.data}")
        elif args.command == "train" and args.data and not Path(args.data).is_file():
            raise UsageError(f"dataset not found: {args.data}")
    except (UsageError, ConfigurationError, ValueError) as exc:
        print(f"narxdsa: error: {exc}", file=sys.stderr)
        return 1

    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        manifest = RunManifest(command=args.command, config_path=args.config, config=cfg.to_dict(),
                               master_seed=cfg.master_seed, version=__version__,
                               out_dir=str(out), started=_now())
        manifest.write(out)
        handler = COMMANDS[args.command]
        if args.command == "evaluate":
            handler(cfg, args, out, manifest, model=model)
        else:
            handler(cfg, args, out, manifest)
        manifest.finished = _now()
        manifest.write(out)
    except UsageError as exc:
        print(f"narxdsa: error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        log.debug("run failed", exc_info=True)
        print(f"narxdsa: {args.command} failed: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
