"""Training data for the cognitive engine and its CSV form."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from ..amc import AmcTable
from ..config import ExperimentConfig
from ..engine import execute_probe_epoch
from ..narx import NarxModel, Sequence, TrainingSet, predict_sequence, split_sequences
from .common import TRAINING_DATA, amc_table, derive_seed, load_key, prepare_cell


def generate_training_data(cfg: ExperimentConfig, seed: int | None = None) -> TrainingSet:
    """Lockstep probe sweeps labeled with the true nearest-link throughput.

    Scenarios cycle through the configured loads in equal proportion until at
    least ``cfg.train_samples`` steps are collected. Every SU contributes one
    sequence per scenario: the silent baseline step followed by one step per
    probe level.
    """
    seed = cfg.master_seed if seed is None else seed
    table = amc_table(cfg)
    per_scenario = cfg.playground.su_pair_count * (len(cfg.probe_powers) + 1)
    if per_scenario == 0:
        raise ValueError("no secondary pairs configured")
    n_loads = len(cfg.loads)
    n_scen = -(-cfg.train_samples // per_scenario)
    n_scen = -(-n_scen // n_loads) * n_loads

    sequences = []
    for i in range(n_scen):
        load = cfg.loads[i % n_loads]
        cell = prepare_cell(cfg, table, load, derive_seed(seed, TRAINING_DATA, i, load_key(load)))
        records = execute_probe_epoch(cell.gains, cell.pn_dbm, cell.nearest, cfg.probe_powers,
                                      table, cell.sigma2)
        for r in records:
            if r.nearest < 0:
                continue
            u1, u2 = r.inputs()
            sequences.append(Sequence(u1=u1, u2=u2, y=r.true_throughput.astype(float), load=load))
    split = split_sequences(len(sequences), derive_seed(seed, TRAINING_DATA, 10**6))
    return TrainingSet(sequences=sequences, split=split, pad=cfg.narx.warmup)


def write_dataset_csv(data: TrainingSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["seq", "load", "split", "step", "u1_dbm", "u2_type", "y_kbps"])
        for i, (seq, lab) in enumerate(zip(data.sequences, data.split)):
            for k in range(len(seq)):
                writer.writerow([i, f"{seq.load:.9g}", lab, k, f"{seq.u1[k]:.9g}",
                                 int(seq.u2[k]), f"{seq.y[k]:.9g}"])


def read_dataset_csv(path, pad: int) -> TrainingSet:
    rows = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rows.setdefault(int(row["seq"]), []).append(row)
    sequences, split = [], []
    for i in sorted(rows):
        steps = sorted(rows[i], key=lambda r: int(r["step"]))
        sequences.append(Sequence(
            u1=np.array([float(r["u1_dbm"]) for r in steps]),
            u2=np.array([float(r["u2_type"]) for r in steps]),
            y=np.array([float(r["y_kbps"]) for r in steps]),
            load=float(steps[0]["load"]),
        ))
        split.append(steps[0]["split"])
    return TrainingSet(sequences=sequences, split=np.array(split, dtype=object), pad=pad)


def cqi_error_histogram(model: NarxModel, held_out, table: AmcTable, pad: int | None = None):
    """Per-load relative frequency of |predicted CQI - true CQI| in bins 0, 1, 2, 3+.

    Predictions are closed-loop over each whole sequence, exactly as the
    engine runs them; predicted throughput maps to the CQI whose table
    throughput is nearest.
    """
    pad = model.config.warmup if pad is None else pad
    by_load = {}
    for seq in held_out:
        pred = predict_sequence(model, seq.u1, seq.u2, pad)
        err = np.abs(table.cqi_from_throughput(pred) - table.cqi_from_throughput(seq.y))
        by_load.setdefault(seq.load, []).append(err)
    return {load: error_bins(np.concatenate(errs)) for load, errs in sorted(by_load.items())}


def error_bins(abs_errors) -> np.ndarray:
    e = np.asarray(abs_errors, dtype=int)
    if len(e) == 0:
        return np.full(4, np.nan)
    counts = np.array([np.sum(e == 0), np.sum(e == 1), np.sum(e == 2), np.sum(e >= 3)], dtype=float)
    return counts / counts.sum()


def write_cqi_hist_csv(hist: dict, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["load", "abs_error", "freq"])
        for load, freqs in hist.items():
            for label, f in zip(("0", "1", "2", "3+"), freqs):
                writer.writerow([f"{load:.9g}", label, f"{f:.9g}"])


def dataset_path(out_dir) -> Path:
    return Path(out_dir) / "dataset.csv"
