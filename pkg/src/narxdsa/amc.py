"""Fifteen-mode adaptive modulation and coding ladder."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

# (modulation type, code rate x 1024, efficiency in bits/symbol)
_CQI_LADDER = (
    (0, 78, 0.1523), (0, 120, 0.2344), (0, 193, 0.3770), (0, 308, 0.6016),
    (0, 449, 0.8770), (0, 602, 1.1758),
    (1, 378, 1.4766), (1, 490, 1.9141), (1, 616, 2.4063),
    (2, 466, 2.7305), (2, 567, 3.3223), (2, 666, 3.9023), (2, 772, 4.5234),
    (2, 873, 5.1152), (2, 948, 5.5547),
)

DEFAULT_SYMBOL_BUDGET = 336_000.0


class ModulationType(IntEnum):
    QPSK = 0
    QAM16 = 1
    QAM64 = 2


@dataclass(frozen=True)
class AmcMode:
    cqi: int
    modulation_type: ModulationType
    code_rate: float
    efficiency: float
    throughput: float  # kbps


@dataclass(frozen=True, eq=False)
class AmcTable:
    modes: tuple
    sinr_thresholds: np.ndarray
    k: float = 1.0
    symbol_budget: float = DEFAULT_SYMBOL_BUDGET

    def __post_init__(self):
        if self.k <= 0:
            raise ValueError("attenuation factor k must be positive")
        if np.any(np.diff(self.sinr_thresholds) <= 0):
            raise ValueError("SINR thresholds must be strictly increasing")

    def __len__(self):
        return len(self.modes)

    @property
    def throughputs(self) -> np.ndarray:
        return np.array([m.throughput for m in self.modes])

    @property
    def types(self) -> np.ndarray:
        return np.array([int(m.modulation_type) for m in self.modes])

    def cqi_index(self, gamma):
        """Vectorized ``mode_for_sinr``: CQI (1-based) for each linear SINR."""
        gamma = np.asarray(gamma, dtype=float)
        if np.any(gamma < 0):
            raise ValueError("SINR must be non-negative")
        idx = np.searchsorted(self.sinr_thresholds, gamma, side="right")
        return np.maximum(idx, 1)

    def throughput_of(self, gamma):
        """Vectorized ``effective_throughput`` in kbps (0 below the first threshold)."""
        gamma = np.asarray(gamma, dtype=float)
        cqi = self.cqi_index(gamma)
        tput = self.throughputs[cqi - 1]
        return np.where(gamma >= self.sinr_thresholds[0], tput, 0.0)

    def type_of(self, gamma):
        return self.types[self.cqi_index(gamma) - 1]

    def cqi_from_throughput(self, t_kbps):
        """Nearest-throughput CQI quantizer; ties go to the lower CQI."""
        t = np.asarray(t_kbps, dtype=float)
        dist = np.abs(t[..., None] - self.throughputs)
        return np.argmin(dist, axis=-1) + 1

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["cqi", "type", "code_rate", "efficiency", "threshold_dB", "throughput_kbps"])
            for mode, thr in zip(self.modes, self.sinr_thresholds):
                writer.writerow([mode.cqi, int(mode.modulation_type), f"{mode.code_rate:.9g}",
                                 f"{mode.efficiency:.9g}", f"{10 * np.log10(thr):.9g}",
                                 f"{mode.throughput:.9g}"])


def default_amc_table(k: float = 1.0, symbol_budget: float = DEFAULT_SYMBOL_BUDGET) -> AmcTable:
    """Standard CQI ladder with thresholds from ``efficiency = log2(1 + k*gamma)``."""
    if k <= 0:
        raise ValueError("attenuation factor k must be positive")
    modes = tuple(
        AmcMode(cqi=i + 1, modulation_type=ModulationType(mt), code_rate=rate / 1024.0,
                efficiency=eff, throughput=eff * symbol_budget / 1000.0)
        for i, (mt, rate, eff) in enumerate(_CQI_LADDER)
    )
    effs = np.array([m.efficiency for m in modes])
    thresholds = (np.power(2.0, effs) - 1.0) / k
    return AmcTable(modes=modes, sinr_thresholds=thresholds, k=k, symbol_budget=symbol_budget)


def mode_for_sinr(gamma: float, table: AmcTable) -> AmcMode:
    return table.modes[int(table.cqi_index(gamma)) - 1]


def effective_throughput(gamma: float, table: AmcTable) -> float:
    return float(table.throughput_of(gamma))


def modulation_type_of(mode: AmcMode) -> int:
    return int(mode.modulation_type)
