"""Primary-network throughput versus background noise (SN absent)."""

from __future__ import annotations

import numpy as np

from ..config import ExperimentConfig
from ..power import OFF, primary_sinr, run_primary_power_control
from ..radio import dbm_to_mw, generate_scenario
from .common import NOISE_SWEEP, amc_table, derive_seed, load_key


def run_noise_sweep(cfg: ExperimentConfig, noise_grid=None):
    """Rows of (load, noise_dbm, pn_kbps, rel_change).

    Each run draws one scenario per load and reuses it across the whole noise
    grid; power control is re-converged at every noise level. The relative
    change is taken against the lowest noise level of the grid.
    """
    grid = np.sort(np.asarray(cfg.noise_grid if noise_grid is None else noise_grid, dtype=float))
    table = amc_table(cfg)
    play = cfg.playground
    rows = []
    for load in cfg.loads:
        totals = np.zeros(len(grid))
        for run in range(cfg.runs):
            seed = derive_seed(cfg.master_seed, NOISE_SWEEP, run, load_key(load))
            gains = generate_scenario(play, cfg.n_primary(load), seed).gains()
            off = np.full(gains.n_s, OFF)
            for k, noise in enumerate(grid):
                sigma2 = float(dbm_to_mw(noise))
                state = run_primary_power_control(gains, sigma2, play.pn_power_range,
                                                  initial_dbm=play.pn_power_range[1])
                sinr = primary_sinr(state.pn_powers, off, gains, sigma2)
                totals[k] += table.throughput_of(sinr).mean()
        avg = totals / cfg.runs
        rel = (avg[0] - avg) / avg[0]
        rows.extend((load, float(n), float(t), float(r)) for n, t, r in zip(grid, avg, rel))
    return rows


def elbow(rows, load: float, threshold: float = 0.05):
    """First noise level whose relative drop exceeds ``threshold`` (None if never)."""
    for ld, noise, _, rel in rows:
        if ld == load and rel > threshold:
            return noise
    return None
