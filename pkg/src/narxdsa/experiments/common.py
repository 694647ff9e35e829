"""Pieces shared by every experiment: seeding and the primary-network baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..amc import AmcTable, default_amc_table
from ..config import ExperimentConfig
from ..engine import nearest_links
from ..power import OFF, primary_sinr, run_primary_power_control
from ..radio import ChannelGains, Scenario, generate_scenario

# independent seed streams
MONTE_CARLO, NOISE_SWEEP, TRAINING_DATA, TRAINING = range(4)


def derive_seed(master: int, stream: int, *keys: int) -> int:
    seq = np.random.SeedSequence([int(master), int(stream), *(int(k) for k in keys)])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def load_key(load: float) -> int:
    return int(round(load * 10_000))


def amc_table(cfg: ExperimentConfig) -> AmcTable:
    return default_amc_table(k=cfg.amc_k, symbol_budget=cfg.symbol_budget)


@dataclass
class Cell:
    """A scenario with the primary network converged and observed with the SN silent."""

    scenario: Scenario
    gains: ChannelGains
    pn_dbm: np.ndarray
    pn_sinr: np.ndarray
    nearest: np.ndarray
    baseline_types: np.ndarray
    sigma2: float
    pn_iterations: int

    @property
    def load(self) -> float:
        return self.scenario.load


def prepare_cell(cfg: ExperimentConfig, table: AmcTable, load: float, seed: int,
                 sigma2: float | None = None) -> Cell:
    play = cfg.playground
    sigma2 = cfg.sigma2 if sigma2 is None else sigma2
    scenario = generate_scenario(play, cfg.n_primary(load), seed)
    gains = scenario.gains()
    state = run_primary_power_control(gains, sigma2, play.pn_power_range,
                                      initial_dbm=play.pn_power_range[1])
    sinr = primary_sinr(state.pn_powers, np.full(gains.n_s, OFF), gains, sigma2)
    nearest = nearest_links(gains, state.pn_powers)
    types = table.type_of(sinr)[np.maximum(nearest, 0)]
    return Cell(scenario, gains, state.pn_powers, sinr, nearest, types, sigma2, state.iteration)
