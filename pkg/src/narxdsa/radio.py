"""Coexistence playground: torus geometry, placement and channel gains.

Positions are stored in meters, distances handed to the path-loss model
are in kilometers, and every gain is a linear power ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

SCENARIO_FORMAT = "narxdsa-scenario 1"
MIN_DISTANCE_KM = 1e-3


class ConfigurationError(ValueError):
    """Raised for playground or scenario requests that cannot be realized."""


@dataclass(frozen=True)
class PlaygroundConfig:
    grid_side: int = 5
    bs_spacing: float = 200.0
    su_pair_count: int = 4
    su_link_radius: float = 50.0
    noise_power: float = -130.0
    pn_power_range: tuple[float, float] = (-20.0, 40.0)
    sn_power_range: tuple[float, float] = (-30.0, 20.0)
    penetration_loss: float = 10.0
    shadowing_sigma: float = 6.0

    def __post_init__(self):
        if self.grid_side < 2:
            raise ConfigurationError("grid_side must be at least 2")
        if self.bs_spacing <= 0:
            raise ConfigurationError("bs_spacing must be positive")
        if self.su_pair_count < 0 or self.su_link_radius <= 0:
            raise ConfigurationError("invalid secondary pair settings")
        for name in ("pn_power_range", "sn_power_range"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ConfigurationError(f"{name} must be ordered min < max")
        object.__setattr__(self, "pn_power_range", tuple(map(float, self.pn_power_range)))
        object.__setattr__(self, "sn_power_range", tuple(map(float, self.sn_power_range)))

    @property
    def side(self) -> float:
        """Side of the square playground in meters."""
        return self.grid_side * self.bs_spacing

    @property
    def n_bs(self) -> int:
        return self.grid_side ** 2

    @property
    def noise_mw(self) -> float:
        return dbm_to_mw(self.noise_power)

    def bs_positions(self) -> np.ndarray:
        """Base-station sites, one at the center of every grid cell."""
        ticks = (np.arange(self.grid_side) + 0.5) * self.bs_spacing
        xx, yy = np.meshgrid(ticks, ticks, indexing="xy")
        return np.column_stack([xx.ravel(), yy.ravel()])

    def to_dict(self) -> dict:
        return {f.name: (list(getattr(self, f.name)) if isinstance(getattr(self, f.name), tuple)
                         else getattr(self, f.name)) for f in fields(self)}

    @classmethod
    def from_dict(cls, data: dict) -> "PlaygroundConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown playground keys: {sorted(unknown)}")
        kwargs = dict(data)
        for name in ("pn_power_range", "sn_power_range"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return cls(**kwargs)


def dbm_to_mw(p):
    return np.power(10.0, np.asarray(p, dtype=float) / 10.0)


def mw_to_dbm(p):
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.asarray(p, dtype=float))


def torus_distance(a, b, cfg: PlaygroundConfig):
    """Minimum-image distance in km between points given in meters.

    Broadcasts over leading dimensions, so ``a[:, None]`` against ``b[None]``
    yields a full distance matrix.
    """
    side = cfg.side
    delta = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), side)
    delta = np.minimum(delta, side - delta)
    return np.hypot(delta[..., 0], delta[..., 1]) / 1000.0


def path_gain_linear(d_km, shadow_db, cfg: PlaygroundConfig):
    """Linear gain for 128.1 + 37.6 log10(d) + penetration + shadowing dB of loss.

    Distances are floored at 1 m before taking the logarithm.
    """
    d = np.maximum(np.asarray(d_km, dtype=float), MIN_DISTANCE_KM)
    if np.any(~np.isfinite(d)) or np.any(d <= 0):
        raise ValueError("distance must be positive and finite")
    loss_db = 128.1 + 37.6 * np.log10(d) + cfg.penetration_loss + np.asarray(shadow_db, dtype=float)
    return np.power(10.0, -loss_db / 10.0)


@dataclass(frozen=True)
class ChannelGains:
    """Gains indexed [receiver, transmitter].

    gpp: primary tx -> primary rx, gps: secondary tx -> primary rx,
    gsp: primary tx -> secondary rx, gss: secondary tx -> secondary rx.
    """

    gpp: np.ndarray
    gps: np.ndarray
    gsp: np.ndarray
    gss: np.ndarray

    @property
    def n_p(self) -> int:
        return self.gpp.shape[0]

    @property
    def n_s(self) -> int:
        return self.gss.shape[0]


@dataclass(frozen=True, eq=False)
class Scenario:
    """One realized playground.

    ``pu_shadow`` holds the shadowing of every base station towards each
    primary receiver (used for attachment and for the primary gains), while
    ``sp_shadow`` holds the same for secondary receivers.
    """

    config: PlaygroundConfig
    seed: int
    serving_bs: np.ndarray
    pu_positions: np.ndarray
    pu_shadow: np.ndarray
    su_tx: np.ndarray
    su_rx: np.ndarray
    ps_shadow: np.ndarray
    sp_shadow: np.ndarray
    ss_shadow: np.ndarray
    _gains: ChannelGains | None = field(default=None, repr=False, compare=False)

    @property
    def n_p(self) -> int:
        return len(self.serving_bs)

    @property
    def n_s(self) -> int:
        return len(self.su_tx)

    @property
    def load(self) -> float:
        return self.n_p / self.config.n_bs

    @property
    def bs_positions(self) -> np.ndarray:
        return self.config.bs_positions()[self.serving_bs]

    def gains(self) -> ChannelGains:
        if self._gains is None:
            object.__setattr__(self, "_gains", gain_matrices(self))
        return self._gains

    def __eq__(self, other):
        if not isinstance(other, Scenario):
            return NotImplemented
        arrays = ("serving_bs", "pu_positions", "pu_shadow", "su_tx", "su_rx",
                  "ps_shadow", "sp_shadow", "ss_shadow")
        return (self.config == other.config and self.seed == other.seed
                and all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays))


def generate_scenario(cfg: PlaygroundConfig, n_p: int, seed: int) -> Scenario:
    """Place ``n_p`` primary receivers and the secondary pairs.

    A primary receiver whose strongest base station is already serving
    someone is redrawn (position and shadowing) until it lands on a free one.
    """
    if not 1 <= n_p <= cfg.n_bs:
        raise ConfigurationError(f"n_p must lie in [1, {cfg.n_bs}], got {n_p}")
    rng = np.random.default_rng(seed)
    sites = cfg.bs_positions()
    sigma = cfg.shadowing_sigma

    serving = []
    positions = []
    shadows = []
    taken = np.zeros(cfg.n_bs, dtype=bool)
    while len(serving) < n_p:
        pos = rng.uniform(0.0, cfg.side, size=2)
        shadow = rng.normal(0.0, sigma, size=cfg.n_bs)
        gain = path_gain_linear(torus_distance(pos[None, :], sites, cfg), shadow, cfg)
        best = int(np.argmax(gain))
        if taken[best]:
            continue
        taken[best] = True
        serving.append(best)
        positions.append(pos)
        shadows.append(shadow)

    n_s = cfg.su_pair_count
    su_tx = rng.uniform(0.0, cfg.side, size=(n_s, 2))
    radius = cfg.su_link_radius * np.sqrt(rng.uniform(size=n_s))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n_s)
    su_rx = np.mod(su_tx + np.column_stack([radius * np.cos(angle), radius * np.sin(angle)]), cfg.side)

    return Scenario(
        config=cfg,
        seed=int(seed),
        serving_bs=np.array(serving, dtype=int),
        pu_positions=np.array(positions, dtype=float).reshape(n_p, 2),
        pu_shadow=np.array(shadows, dtype=float).reshape(n_p, cfg.n_bs),
        su_tx=su_tx,
        su_rx=su_rx,
        ps_shadow=rng.normal(0.0, sigma, size=(n_p, n_s)),
        sp_shadow=rng.normal(0.0, sigma, size=(n_s, cfg.n_bs)),
        ss_shadow=rng.normal(0.0, sigma, size=(n_s, n_s)),
    )


def gain_matrices(s: Scenario) -> ChannelGains:
    cfg = s.config
    bs = s.bs_positions
    d_pp = torus_distance(s.pu_positions[:, None, :], bs[None, :, :], cfg)
    d_ps = torus_distance(s.pu_positions[:, None, :], s.su_tx[None, :, :], cfg)
    d_sp = torus_distance(s.su_rx[:, None, :], bs[None, :, :], cfg)
    d_ss = torus_distance(s.su_rx[:, None, :], s.su_tx[None, :, :], cfg)
    return ChannelGains(
        gpp=path_gain_linear(d_pp, s.pu_shadow[:, s.serving_bs], cfg).reshape(s.n_p, s.n_p),
        gps=path_gain_linear(d_ps, s.ps_shadow, cfg).reshape(s.n_p, s.n_s),
        gsp=path_gain_linear(d_sp, s.sp_shadow[:, s.serving_bs], cfg).reshape(s.n_s, s.n_p),
        gss=path_gain_linear(d_ss, s.ss_shadow, cfg).reshape(s.n_s, s.n_s),
    )


# -- text dump -------------------------------------------------------------

def _fmt_row(values) -> str:
    return " ".join(repr(float(v)) for v in np.ravel(values))


def dump_scenario(s: Scenario, path) -> None:
    """Write a replayable field-per-line description of ``s``."""
    cfg = s.config
    lines = [SCENARIO_FORMAT, f"seed {s.seed}"]
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        lines.append(f"config.{f.name} " + (_fmt_row(value) if isinstance(value, tuple) else repr(value)))
    lines.append(f"n_p {s.n_p}")
    lines.append(f"n_s {s.n_s}")
    lines.append("serving_bs " + " ".join(str(int(b)) for b in s.serving_bs))
    for name in ("pu_positions", "pu_shadow", "su_tx", "su_rx", "ps_shadow", "sp_shadow", "ss_shadow"):
        lines.append(f"{name} " + _fmt_row(getattr(s, name)))
    Path(path).write_text("\n".join(lines) + "\n")


def load_scenario(path) -> Scenario:
    text = Path(path).read_text().splitlines()
    if not text or text[0].strip() != SCENARIO_FORMAT:
        raise ValueError(f"unsupported scenario file header: {text[:1]}")
    entries = {}
    for line in text[1:]:
        if not line.strip():
            continue
        key, _, rest = line.partition(" ")
        entries[key] = rest.split()

    cfg_kwargs = {}
    for f in fields(PlaygroundConfig):
        raw = entries[f"config.{f.name}"]
        if f.name.endswith("_range"):
            cfg_kwargs[f.name] = tuple(float(v) for v in raw)
        elif f.name in ("grid_side", "su_pair_count"):
            cfg_kwargs[f.name] = int(raw[0])
        else:
            cfg_kwargs[f.name] = float(raw[0])
    cfg = PlaygroundConfig(**cfg_kwargs)
    n_p, n_s = int(entries["n_p"][0]), int(entries["n_s"][0])

    def arr(name, shape):
        return np.array([float(v) for v in entries.get(name, [])], dtype=float).reshape(shape)

    return Scenario(
        config=cfg,
        seed=int(entries["seed"][0]),
        serving_bs=np.array([int(v) for v in entries.get("serving_bs", [])], dtype=int),
        pu_positions=arr("pu_positions", (n_p, 2)),
        pu_shadow=arr("pu_shadow", (n_p, cfg.n_bs)),
        su_tx=arr("su_tx", (n_s, 2)),
        su_rx=arr("su_rx", (n_s, 2)),
        ps_shadow=arr("ps_shadow", (n_p, n_s)),
        sp_shadow=arr("sp_shadow", (n_s, cfg.n_bs)),
        ss_shadow=arr("ss_shadow", (n_s, n_s)),
    )
