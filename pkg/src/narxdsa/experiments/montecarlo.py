"""Monte Carlo evaluation of every SN policy against the primary-only reference."""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..config import ExperimentConfig
from ..engine import PolicyConfig, run_engine
from ..narx import NarxModel
from ..power import TargetLadder, fm_with_modulation_constraint, primary_sinr, secondary_sinr
from .baselines import exhaustive_baselines, permutation_count
from .common import MONTE_CARLO, Cell, amc_table, derive_seed, load_key, prepare_cell
from .dataset import error_bins

log = logging.getLogger(__name__)

NN_POLICIES = {
    "nn_no_mod_change": ("no_mod_change", None),
    "nn_rel_change_2": ("max_rel_change", 0.02),
    "nn_rel_change_5": ("max_rel_change", 0.05),
    "nn_rel_change_10": ("max_rel_change", 0.10),
}
EXHAUSTIVE = ("exhaustive_min", "exhaustive_max")


class MissingModelError(ValueError):
    pass


@dataclass
class CellResult:
    """Outcome of one policy on one (run, load) cell."""

    policy: str
    load: float
    run: int
    pn_kbps: float
    pn_ref_kbps: float
    sn_samples: np.ndarray
    blocked: int
    cqi_errors: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))

    @property
    def rel_change(self) -> float:
        return (self.pn_ref_kbps - self.pn_kbps) / self.pn_ref_kbps

    @property
    def sn_kbps(self) -> float:
        return float(np.mean(self.sn_samples)) if len(self.sn_samples) else 0.0

    @property
    def blocked_frac(self) -> float:
        return self.blocked / len(self.sn_samples) if len(self.sn_samples) else 0.0


@dataclass
class MetricsRecord:
    policy: str
    load: float
    pn_avg_throughput: float
    pn_rel_change: float
    sn_avg_throughput: float
    sn_throughput_samples: np.ndarray
    blocked_fraction: float
    cqi_abs_error_histogram: np.ndarray


def _nn_policies(cfg: ExperimentConfig):
    out = []
    for p in cfg.policies:
        if p in NN_POLICIES:
            kind, delta = NN_POLICIES[p]
            extra = {} if delta is None else {"delta": delta}
            out.append(PolicyConfig(kind=kind, probe_powers=cfg.probe_powers, **extra))
    return out


def _outcome(cell: Cell, table, sn_dbm):
    pn = primary_sinr(cell.pn_dbm, sn_dbm, cell.gains, cell.sigma2)
    sn = secondary_sinr(cell.pn_dbm, sn_dbm, cell.gains, cell.sigma2)
    sn_t = np.where(np.isfinite(sn_dbm), table.throughput_of(np.nan_to_num(sn)), 0.0)
    return float(table.throughput_of(pn).mean()), sn_t


def evaluate_cell(cfg: ExperimentConfig, model: NarxModel | None, load: float, run: int):
    """Every configured policy on a single scenario; returns a list of CellResult."""
    table = amc_table(cfg)
    cell = prepare_cell(cfg, table, load, derive_seed(cfg.master_seed, MONTE_CARLO, run, load_key(load)))
    n_s = cell.gains.n_s
    ref_kbps = float(table.throughput_of(cell.pn_sinr).mean())
    results = []

    def add(policy, sn_dbm, blocked, cqi_errors=None):
        pn_kbps, sn_t = _outcome(cell, table, sn_dbm)
        results.append(CellResult(policy, load, run, pn_kbps, ref_kbps, sn_t, int(blocked),
                                  np.empty(0, dtype=int) if cqi_errors is None else cqi_errors))

    for policy in cfg.policies:
        if policy == "pn_only":
            results.append(CellResult(policy, load, run, ref_kbps, ref_kbps, np.zeros(n_s), 0))
        elif policy == "fm_baseline":
            ladder = TargetLadder.from_table(table)
            fm = fm_with_modulation_constraint(cell.gains, cell.pn_dbm, cell.nearest, cell.baseline_types,
                                               ladder, table, cell.sigma2, cfg.playground.sn_power_range)
            add(policy, fm.powers, fm.blocked.sum())

    nn = _nn_policies(cfg)
    if nn:
        if model is None:
            raise MissingModelError("NN policies need a trained model")
        records, decisions = run_engine(model, cell.gains, cell.pn_dbm, nn, table, cell.sigma2,
                                        probe_powers=cfg.probe_powers, nearest=cell.nearest)
        for pol in nn:
            dec = decisions[pol.name]
            sn_dbm = np.array([d.power_dbm for d in dec])
            errs = []
            for r, d in zip(records, dec):
                if r.predicted is None:
                    continue
                pred = table.cqi_from_throughput(r.predicted[d.step])
                errs.append(abs(int(pred) - int(r.true_cqi[d.step])))
            add(pol.name, sn_dbm, sum(d.status == "blocked" for d in dec), np.array(errs, dtype=int))

    wanted = [p for p in EXHAUSTIVE if p in cfg.policies]
    grid_levels = len(cfg.probe_powers) + 1
    if wanted and permutation_count(grid_levels, n_s) <= cfg.exhaustive_cap:
        all_types = table.type_of(cell.pn_sinr)
        lo, hi = exhaustive_baselines(cell.gains, cell.pn_dbm, all_types, cfg.probe_powers,
                                      table, cell.sigma2)
        for name, setting in zip(EXHAUSTIVE, (lo, hi)):
            if name in wanted:
                add(name, setting.powers, 0)
    elif wanted:
        log.warning("exhaustive search skipped: %d^%d permutations exceed cap %d",
                    grid_levels, n_s, cfg.exhaustive_cap)
    return results


def _evaluate_task(args):
    return evaluate_cell(*args)


def run_monte_carlo(cfg: ExperimentConfig, model: NarxModel | None = None, jobs: int = 1):
    """Per-cell results for every (run, load), sorted by (policy, load, run)."""
    if _nn_policies(cfg) and model is None:
        raise MissingModelError("NN policies need a trained model")
    tasks = [(cfg, model, load, run) for load in cfg.loads for run in range(cfg.runs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_evaluate_task, tasks, chunksize=4))
    else:
        chunks = [_evaluate_task(t) for t in tasks]
    order = {p: i for i, p in enumerate(cfg.policies)}
    cells = [r for chunk in chunks for r in chunk]
    cells.sort(key=lambda r: (order[r.policy], r.load, r.run))
    return cells


def aggregate(cells) -> list:
    """One MetricsRecord per (policy, load)."""
    groups = {}
    for c in cells:
        groups.setdefault((c.policy, c.load), []).append(c)
    records = []
    for (policy, load), group in groups.items():
        pn = float(np.mean([c.pn_kbps for c in group]))
        ref = float(np.mean([c.pn_ref_kbps for c in group]))
        samples = np.concatenate([c.sn_samples for c in group])
        n_su = len(samples)
        errs = np.concatenate([c.cqi_errors for c in group])
        records.append(MetricsRecord(
            policy=policy, load=load, pn_avg_throughput=pn, pn_rel_change=(ref - pn) / ref,
            sn_avg_throughput=float(samples.mean()) if n_su else 0.0,
            sn_throughput_samples=samples,
            blocked_fraction=sum(c.blocked for c in group) / n_su if n_su else 0.0,
            cqi_abs_error_histogram=error_bins(errs) if len(errs) else np.full(4, np.nan),
        ))
    return records


def metrics_table(records) -> dict:
    return {(r.policy, r.load): r for r in records}


def sn_throughput_cdf(records):
    """Empirical CDF rows (policy, load, throughput_kbps, cdf) per SN policy."""
    rows = []
    for r in records:
        if r.policy == "pn_only" or len(r.sn_throughput_samples) == 0:
            continue
        values, counts = np.unique(r.sn_throughput_samples, return_counts=True)
        cdf = np.cumsum(counts) / counts.sum()
        rows.extend((r.policy, r.load, float(v), float(c)) for v, c in zip(values, cdf))
    return rows


def zero_mass(record: MetricsRecord) -> float:
    return float(np.mean(record.sn_throughput_samples == 0)) if len(record.sn_throughput_samples) else 0.0


def _g(v) -> str:
    return f"{v:.9g}"


def write_monte_carlo_csv(cells, records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "load", "run", "pn_kbps", "rel_change", "sn_kbps", "blocked_frac"])
        for c in cells:
            writer.writerow([c.policy, _g(c.load), c.run, _g(c.pn_kbps), _g(c.rel_change),
                             _g(c.sn_kbps), _g(c.blocked_frac)])
        for r in records:
            writer.writerow([r.policy, _g(r.load), "all", _g(r.pn_avg_throughput), _g(r.pn_rel_change),
                             _g(r.sn_avg_throughput), _g(r.blocked_fraction)])


def write_sn_cdf_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["policy", "load", "throughput_kbps", "cdf"])
        for policy, load, value, cdf in rows:
            writer.writerow([policy, _g(load), _g(value), _g(cdf)])


def write_noise_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["load", "noise_dbm", "pn_kbps", "rel_change"])
        for load, noise, kbps, rel in rows:
            writer.writerow([_g(load), _g(noise), _g(kbps), _g(rel)])
