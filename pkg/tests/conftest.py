"""Session-wide artifacts built once at the default (desk-scale) configuration."""

import pytest

from narxdsa.config import ExperimentConfig
from narxdsa.experiments.common import TRAINING, derive_seed
from narxdsa.experiments.dataset import generate_training_data
from narxdsa.experiments.montecarlo import aggregate, metrics_table, run_monte_carlo
from narxdsa.experiments.noise import run_noise_sweep
from narxdsa.narx import init_model, train_lm

REPORT = {}


def report(criterion: int, ok: bool, detail: str) -> None:
    REPORT[criterion] = (ok, detail)


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig()


@pytest.fixture(scope="session")
def training_data(default_cfg):
    return generate_training_data(default_cfg)


@pytest.fixture(scope="session")
def trained(default_cfg, training_data):
    model = init_model(default_cfg.narx, derive_seed(default_cfg.master_seed, TRAINING))
    return train_lm(model, training_data)


@pytest.fixture(scope="session")
def mc_cells(default_cfg, trained):
    return run_monte_carlo(default_cfg, trained.model)


@pytest.fixture(scope="session")
def mc_records(mc_cells):
    return metrics_table(aggregate(mc_cells))


@pytest.fixture(scope="session")
def noise_rows(default_cfg):
    return run_noise_sweep(default_cfg)


def pytest_terminal_summary(terminalreporter):
    if not REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(REPORT):
        ok, detail = REPORT[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
