"""Exhaustive search over secondary power permutations (genie-aided baselines)."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from ..amc import AmcTable
from ..power import OFF
from ..radio import ChannelGains, dbm_to_mw


@dataclass(frozen=True)
class ExhaustiveSetting:
    powers: np.ndarray      # dBm, -inf for off
    pn_throughput: float    # average over primary links, kbps
    sn_throughput: float    # average over secondary links, kbps


def permutation_count(levels: int, n_s: int) -> int:
    return levels ** n_s


def exhaustive_baselines(gains: ChannelGains, pn_dbm, baseline_types_all, grid_dbm, table: AmcTable,
                         sigma2: float):
    """Return ``(min_setting, max_setting)`` over ``(grid U {off})^N_S``.

    A permutation is feasible when no primary link changes modulation type
    with respect to ``baseline_types_all``. Among feasible permutations the
    extreme average PN throughputs are picked; ties prefer lower total SN
    power.
    """
    levels = np.concatenate([[OFF], np.asarray(grid_dbm, dtype=float)])
    n_s = gains.n_s
    combos = np.array(list(itertools.product(levels, repeat=n_s)), dtype=float).reshape(-1, n_s)
    s_mw = dbm_to_mw(combos)
    p_mw = dbm_to_mw(pn_dbm)

    pn_signal = np.diag(gains.gpp) * p_mw
    pn_base = gains.gpp @ p_mw - pn_signal + sigma2
    pn_sinr = pn_signal / (pn_base + s_mw @ gains.gps.T)
    feasible = np.all(table.type_of(pn_sinr) == np.asarray(baseline_types_all), axis=1)
    pn_t = table.throughput_of(pn_sinr).mean(axis=1)

    sn_signal = s_mw * np.diag(gains.gss)
    sn_interf = s_mw @ gains.gss.T - sn_signal + gains.gsp @ p_mw + sigma2
    with np.errstate(invalid="ignore"):
        sn_sinr = sn_signal / sn_interf
    sn_t = np.where(s_mw > 0, table.throughput_of(np.nan_to_num(sn_sinr)), 0.0)
    sn_avg = sn_t.mean(axis=1) if n_s else np.zeros(len(combos))
    total = s_mw.sum(axis=1)

    idx = np.flatnonzero(feasible)
    if len(idx) == 0:
        all_off = np.full(n_s, OFF)
        setting = _setting(all_off, gains, p_mw, sigma2, table)
        return setting, setting
    # lexsort: last key is primary
    lo = idx[np.lexsort((total[idx], pn_t[idx]))[0]]
    hi = idx[np.lexsort((total[idx], -pn_t[idx]))[0]]
    make = lambda i: ExhaustiveSetting(combos[i].copy(), float(pn_t[i]), float(sn_avg[i]))
    return make(lo), make(hi)


def _setting(powers, gains, p_mw, sigma2, table):
    pn_signal = np.diag(gains.gpp) * p_mw
    sinr = pn_signal / (gains.gpp @ p_mw - pn_signal + sigma2)
    return ExhaustiveSetting(powers, float(table.throughput_of(sinr).mean()), 0.0)
