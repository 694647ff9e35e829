"""Per-SU cognitive engine: nearest-link sensing, probing, prediction, power choice."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .amc import AmcTable
from .narx import NarxModel, predict_sequence
from .power import OFF, primary_sinr
from .radio import ChannelGains, dbm_to_mw

NO_LINK = -1
DEFAULT_PROBES = tuple(float(p) for p in np.arange(-30.0, 20.0 + 1e-9, 5.0))


@dataclass(frozen=True)
class PolicyConfig:
    kind: str = "max_rel_change"
    delta: float = 0.02
    probe_powers: tuple = DEFAULT_PROBES

    def __post_init__(self):
        if self.kind not in ("no_mod_change", "max_rel_change"):
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.kind == "max_rel_change" and not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if len(self.probe_powers) == 0 or np.any(np.diff(self.probe_powers) <= 0):
            raise ValueError("probe powers must be strictly ascending")

    @property
    def name(self) -> str:
        if self.kind == "no_mod_change":
            return "nn_no_mod_change"
        return f"nn_rel_change_{round(self.delta * 100):d}"


@dataclass
class ProbeEpochRecord:
    su_index: int
    nearest: int
    floor_dbm: float
    baseline_type: int
    probe_powers: np.ndarray = field(default_factory=lambda: np.empty(0))
    sensed_types: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    # simulator ground truth of the nearest link, baseline first; never read by decisions
    true_throughput: np.ndarray = field(default_factory=lambda: np.empty(0))
    true_cqi: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    predicted: np.ndarray | None = None

    def inputs(self):
        """NARX input series: baseline step (power at the floor) then every probe."""
        u1 = np.concatenate([[self.floor_dbm], self.probe_powers])
        u2 = np.concatenate([[self.baseline_type], self.sensed_types]).astype(float)
        return u1, u2


@dataclass(frozen=True)
class Decision:
    status: str               # "tx", "blocked" or "off"
    power_dbm: float = OFF
    step: int = 0             # index into the predicted vector, 0 = baseline

    @property
    def transmits(self) -> bool:
        return self.status == "tx"


def nearest_primary_link(su_index: int, gains: ChannelGains, pn_dbm) -> int:
    """Primary transmitter received strongest by the SU; ties go to the lowest index."""
    if gains.n_p == 0:
        return NO_LINK
    rx = gains.gsp[su_index] * dbm_to_mw(pn_dbm)
    return int(np.argmax(rx))


def nearest_links(gains: ChannelGains, pn_dbm) -> np.ndarray:
    return np.array([nearest_primary_link(j, gains, pn_dbm) for j in range(gains.n_s)], dtype=int)


def sense_modulation_oracle(link_index: int, pn_sinr, table: AmcTable) -> int:
    """Error-free modulation classification of the given primary link."""
    if link_index < 0 or link_index >= len(pn_sinr):
        raise ValueError(f"primary link {link_index} is not active")
    return int(table.type_of(pn_sinr[link_index]))


def execute_probe_epoch(gains: ChannelGains, pn_dbm, nearest, probe_powers, table: AmcTable,
                        sigma2: float, active=None, floor_dbm: float | None = None):
    """Baseline sensing with the SN silent, then lockstep probing by every active SU.

    Returns one record per SU. Inactive SUs stay silent and only keep their
    baseline observation.
    """
    n_s = gains.n_s
    nearest = np.asarray(nearest, dtype=int)
    active = np.ones(n_s, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    probes = np.asarray(probe_powers, dtype=float)
    floor = probes[0] if floor_dbm is None else floor_dbm
    link = np.maximum(nearest, 0)

    def observe(sn_dbm):
        sinr = primary_sinr(pn_dbm, sn_dbm, gains, sigma2)
        return (table.type_of(sinr)[link], table.throughput_of(sinr)[link],
                table.cqi_index(sinr)[link])

    base_type, base_t, base_cqi = observe(np.full(n_s, OFF))
    steps = [observe(np.where(active, p, OFF)) for p in probes]

    records = []
    for j in range(n_s):
        if active[j] and nearest[j] >= 0:
            types = np.array([s[0][j] for s in steps], dtype=int)
            tput = np.array([base_t[j]] + [s[1][j] for s in steps])
            cqi = np.array([base_cqi[j]] + [s[2][j] for s in steps], dtype=int)
            powers = probes.copy()
        else:
            types, powers = np.empty(0, dtype=int), np.empty(0)
            tput, cqi = np.array([base_t[j]]), np.array([base_cqi[j]], dtype=int)
        records.append(ProbeEpochRecord(
            su_index=j, nearest=int(nearest[j]), floor_dbm=float(floor),
            baseline_type=int(base_type[j]), probe_powers=powers, sensed_types=types,
            true_throughput=tput, true_cqi=cqi))
    return records


def predict_throughput_vector(model: NarxModel, record: ProbeEpochRecord, pad: int | None = None):
    """Closed-loop predicted nearest-link throughput (kbps), baseline entry first."""
    pad = model.config.warmup if pad is None else pad
    u1, u2 = record.inputs()
    return predict_sequence(model, u1, u2, pad)


def predicted_baseline(model: NarxModel, record: ProbeEpochRecord, pad: int | None = None) -> float:
    """T-hat at the silent step; depends only on what was sensed before probing."""
    pad = model.config.warmup if pad is None else pad
    return float(predict_sequence(model, np.array([record.floor_dbm]),
                                  np.array([float(record.baseline_type)]), pad)[0])


def is_blocked(t0_hat: float, table: AmcTable) -> bool:
    return t0_hat <= 0 or int(table.cqi_from_throughput(t0_hat)) == 1


def select_power(record: ProbeEpochRecord, t_hat, policy: PolicyConfig, table: AmcTable) -> Decision:
    """Largest probe power whose predicted impact on the nearest link is tolerable."""
    if record.nearest < 0:
        return Decision("tx", float(policy.probe_powers[-1]), len(policy.probe_powers))
    t_hat = np.asarray(t_hat, dtype=float)
    if len(t_hat) != len(record.probe_powers) + 1:
        raise ValueError("prediction vector is not aligned with the probe schedule")
    t0 = t_hat[0]
    if is_blocked(t0, table):
        return Decision("blocked")
    probe_t = t_hat[1:]
    if policy.kind == "no_mod_change":
        base_type = table.types[table.cqi_from_throughput(t0) - 1]
        ok = table.types[table.cqi_from_throughput(probe_t) - 1] == base_type
    else:
        ok = (t0 - probe_t) / t0 <= policy.delta
    if not ok.any():
        return Decision("off")
    k = int(np.flatnonzero(ok)[-1])
    return Decision("tx", float(record.probe_powers[k]), k + 1)


def run_engine(model: NarxModel, gains: ChannelGains, pn_dbm, policies, table: AmcTable,
               sigma2: float, probe_powers=DEFAULT_PROBES, nearest=None):
    """Full SN pipeline for several policies sharing one probe epoch.

    Blocking depends only on the baseline prediction, so blocked SUs sit out
    the probing. Returns ``(records, {policy name: [Decision, ...]})``.
    """
    nearest = nearest_links(gains, pn_dbm) if nearest is None else nearest
    baseline = execute_probe_epoch(gains, pn_dbm, nearest, probe_powers, table, sigma2,
                                   active=np.zeros(gains.n_s, dtype=bool))
    active = np.array([r.nearest < 0 or not is_blocked(predicted_baseline(model, r), table)
                       for r in baseline], dtype=bool)
    records = execute_probe_epoch(gains, pn_dbm, nearest, probe_powers, table, sigma2, active=active)
    for r in records:
        if r.nearest >= 0 and len(r.probe_powers):
            r.predicted = predict_throughput_vector(model, r)
        elif r.nearest >= 0:
            r.predicted = np.array([predicted_baseline(model, r)])
    decisions = {}
    for pol in policies:
        out = []
        for r in records:
            if r.nearest < 0:
                out.append(Decision("tx", float(probe_powers[-1]), len(probe_powers)))
            elif not len(r.probe_powers):
                out.append(Decision("blocked"))
            else:
                out.append(select_power(r, r.predicted, pol, table))
        decisions[pol.name] = out
    return records, decisions


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["su", "step", "power_dBm", "sensed_type", "predicted_T_kbps"])
        for r in records:
            u1, u2 = r.inputs() if len(r.probe_powers) else ([r.floor_dbm], [r.baseline_type])
            pred = r.predicted if r.predicted is not None else np.full(len(u1), np.nan)
            for k, (p, t) in enumerate(zip(u1, u2)):
                writer.writerow([r.su_index, k, f"{p:.9g}", int(t),
                                 f"{pred[k]:.9g}" if k < len(pred) else "nan"])
