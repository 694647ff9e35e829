"""SINR evaluation and the two iterative power-control loops.

Powers cross this module's boundary in dBm. A secondary transmitter that is
off carries ``-inf`` dBm, which maps to exactly zero milliwatts.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .amc import AmcTable
from .radio import ChannelGains, dbm_to_mw, mw_to_dbm

OFF = -np.inf
PN_INITIAL_DBM = 10.0
PN_TOL_DB = 0.01
PN_MAX_ITER = 200
FM_TOL_DB = 0.1
FM_MAX_ITER = 30


@dataclass
class PowerState:
    pn_powers: np.ndarray
    sn_powers: np.ndarray
    iteration: int = 0
    converged: bool = True
    trace: list = field(default_factory=list, repr=False)


@dataclass(frozen=True, eq=False)
class TargetLadder:
    targets: np.ndarray

    def __post_init__(self):
        if len(self.targets) == 0 or np.any(np.diff(self.targets) <= 0):
            raise ValueError("ladder targets must be strictly ascending")

    @classmethod
    def from_table(cls, table: AmcTable) -> "TargetLadder":
        return cls(np.array(table.sinr_thresholds, dtype=float))

    def __len__(self):
        return len(self.targets)


def _check_dims(pn, sn, gains: ChannelGains):
    if pn.shape != (gains.n_p,) or sn.shape != (gains.n_s,):
        raise ValueError(f"power vectors {pn.shape}/{sn.shape} do not match "
                         f"{gains.n_p} primary and {gains.n_s} secondary links")


def primary_sinr(pn_dbm, sn_dbm, gains: ChannelGains, sigma2: float) -> np.ndarray:
    pn = dbm_to_mw(pn_dbm)
    sn = dbm_to_mw(sn_dbm)
    _check_dims(pn, sn, gains)
    signal = np.diag(gains.gpp) * pn
    interference = gains.gpp @ pn - signal + gains.gps @ sn
    return signal / (interference + sigma2)


def secondary_sinr(pn_dbm, sn_dbm, gains: ChannelGains, sigma2: float) -> np.ndarray:
    """SINR of every secondary link; NaN where the transmitter is off."""
    pn = dbm_to_mw(pn_dbm)
    sn = dbm_to_mw(sn_dbm)
    _check_dims(pn, sn, gains)
    signal = np.diag(gains.gss) * sn
    interference = gains.gss @ sn - signal + gains.gsp @ pn
    sinr = signal / (interference + sigma2)
    return np.where(sn > 0, sinr, np.nan)


def primary_power_update(pn_dbm, gains: ChannelGains, sigma2: float,
                         power_range=(-20.0, 40.0)) -> np.ndarray:
    """One sweep of the product-of-SINR power update, clamped to ``power_range``.

    Only primary-internal interference enters the update; the primary network
    is unaware of secondary transmissions.
    """
    p = dbm_to_mw(pn_dbm)
    g = gains.gpp
    n = len(p)
    if n == 1:
        return np.array([power_range[1]])
    # interference-plus-noise seen at every primary receiver j
    inr = g @ p - np.diag(g) * p + sigma2
    weights = g / inr[:, None]          # weights[j, i] = G_ji / inr_j
    denom = weights.sum(axis=0) - np.diag(weights)
    new = mw_to_dbm(1.0 / denom)
    return np.clip(new, *power_range)


def run_primary_power_control(gains: ChannelGains, sigma2: float, power_range=(-20.0, 40.0),
                              initial_dbm: float = PN_INITIAL_DBM, tol_db: float = PN_TOL_DB,
                              max_iter: int = PN_MAX_ITER, pn_start=None,
                              record_trace: bool = False) -> PowerState:
    n_s = gains.n_s
    sn_off = np.full(n_s, OFF)
    p = (np.full(gains.n_p, float(initial_dbm)) if pn_start is None
         else np.asarray(pn_start, dtype=float).copy())
    trace = []
    if gains.n_p == 1:
        p = np.array([power_range[1]])
        return PowerState(p, sn_off, iteration=1, converged=True)
    for it in range(1, max_iter + 1):
        new = primary_power_update(p, gains, sigma2, power_range)
        step = np.max(np.abs(new - p))
        p = new
        if record_trace:
            sinr = primary_sinr(p, sn_off, gains, sigma2)
            trace.extend((it, i, p[i], 10 * np.log10(sinr[i])) for i in range(len(p)))
        if step < tol_db:
            return PowerState(p, sn_off, iteration=it, converged=True, trace=trace)
    return PowerState(p, sn_off, iteration=max_iter, converged=False, trace=trace)


def write_trace_csv(trace, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "link", "power_dBm", "sinr_dB"])
        for it, link, pw, sinr in trace:
            writer.writerow([it, link, f"{pw:.9g}", f"{sinr:.9g}"])


def fm_update(power_dbm, target, measured, power_range=(-30.0, 20.0)):
    """Foschini-Miljanic step: scale linear power by target/measured, then clamp."""
    measured = np.asarray(measured, dtype=float)
    if np.any(~(measured > 0)):
        raise ValueError("measured SINR must be positive")
    new = np.asarray(power_dbm, dtype=float) + 10.0 * np.log10(np.asarray(target, dtype=float) / measured)
    out = np.clip(new, *power_range)
    return float(out) if out.ndim == 0 else out


def run_fm(pn_dbm, sn_start, targets, gains: ChannelGains, sigma2: float,
           power_range=(-30.0, 20.0), tol_db: float = FM_TOL_DB, max_iter: int = FM_MAX_ITER):
    """Synchronous FM iterations for the transmitting SUs (finite ``sn_start`` entries).

    Returns the final powers and the number of iterations used.
    """
    p = np.asarray(sn_start, dtype=float).copy()
    active = np.isfinite(p)
    if not active.any():
        return p, 0
    for it in range(1, max_iter + 1):
        sinr = secondary_sinr(pn_dbm, p, gains, sigma2)
        new = p.copy()
        new[active] = fm_update(p[active], targets[active], sinr[active], power_range)
        step = np.max(np.abs(new[active] - p[active]))
        p = new
        if step < tol_db:
            return p, it
    return p, max_iter


@dataclass
class FmResult:
    """Outcome of the modulation-constrained FM ladder for every SU."""

    powers: np.ndarray     # dBm, -inf when not transmitting
    rungs: np.ndarray      # ladder index in use, -1 when not transmitting
    blocked: np.ndarray    # baseline nearest link already at the lowest modulation
    off: np.ndarray        # ladder exhausted
    rounds: int


def fm_with_modulation_constraint(gains: ChannelGains, pn_dbm, nearest, baseline_types,
                                  ladder: TargetLadder, table: AmcTable, sigma2: float,
                                  power_range=(-30.0, 20.0), observer=None) -> FmResult:
    """Distributed FM power control that backs off the SINR target rung by rung.

    Every SU starts at the top rung. After each synchronous FM convergence,
    an SU whose nearest primary link changed modulation type steps one rung
    down; an SU that runs out of rungs switches off. SUs whose nearest link
    was already at the lowest modulation type with the SN silent never
    transmit. ``observer(pn_sinr) -> types`` defaults to the error-free
    modulation oracle.
    """
    observe = observer or table.type_of
    n_s = gains.n_s
    nearest = np.asarray(nearest, dtype=int)
    baseline_types = np.asarray(baseline_types, dtype=int)
    has_link = nearest >= 0
    blocked = has_link & (baseline_types == 0)
    off = np.zeros(n_s, dtype=bool)
    top = len(ladder) - 1
    rungs = np.where(blocked, -1, top)
    powers = np.where(blocked, OFF, power_range[0])

    rounds = 0
    while True:
        rounds += 1
        active = rungs >= 0
        targets = np.where(active, ladder.targets[np.maximum(rungs, 0)], 0.0)
        powers, _ = run_fm(pn_dbm, powers, targets, gains, sigma2, power_range)
        if gains.n_p == 0:
            break
        types = observe(primary_sinr(pn_dbm, powers, gains, sigma2))
        changed = active & has_link & (types[np.maximum(nearest, 0)] != baseline_types)
        if not changed.any():
            break
        exhausted = changed & (rungs == 0)
        off |= exhausted
        rungs = np.where(exhausted, -1, np.where(changed, rungs - 1, rungs))
        powers = np.where(rungs >= 0, powers, OFF)
    return FmResult(powers=powers, rungs=rungs, blocked=blocked, off=off, rounds=rounds)
