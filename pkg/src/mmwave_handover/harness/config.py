"""Simulation configuration and the YAML scenario file."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from mmwave_handover.channel import ArrayConfig, RadioConfig
from mmwave_handover.errors import ConfigurationError
from mmwave_handover.handover import HandoverConfig
from mmwave_handover.learning import LearningConfig

POLICIES = ("ours", "ours-ed", "multi-connectivity", "smart-ucb")


@dataclass(frozen=True)
class SkeletonConfig:
    max_paths: int = 3
    gain_weight: float = 0.1  # distance units per dB
    codebook_oversampling: int = 2
    ed_distance: float = 10.0  # m
    U_max: int = 10
    delta: float = 0.2
    tune_episodes: int = 200
    T_aging: int = 50  # CIs
    grid_size: float = 5.0  # m
    shadow_decorrelation: float = 10.0  # m, along the trajectory
    blockage_loss_db: float = 20.0  # extra loss on the direct cluster of a blocked link


@dataclass(frozen=True)
class SimConfig:
    extent: tuple[float, float] = (100.0, 100.0)  # m
    density: float = 5e-4  # BS per m^2
    waypoints: tuple[tuple[float, float], ...] = ((0.0, 50.0), (100.0, 50.0))  # m
    spacing: float = 2.0  # m between location indexes
    mobility_class: str = "pedestrian"
    speed_kmh: float = 5.0
    radio: RadioConfig = field(default_factory=RadioConfig)
    arrays: ArrayConfig = field(default_factory=ArrayConfig)
    handover: HandoverConfig = field(default_factory=HandoverConfig.two_level)
    learning: LearningConfig = field(default_factory=LearningConfig)
    skeleton: SkeletonConfig = field(default_factory=SkeletonConfig)
    policy: str = "ours"
    replications: int = 500
    seed: int = 1
    bank_size: int = 1000  # channel realizations the training episodes draw from
    ucb_c: float = 1.0
    reward_scale: float = 1e-9  # bps -> Gbps for Q values
    trace: Optional[str] = None  # external channel-trace CSV replacing the generator

    def __post_init__(self):
        validate(self)

    def replace(self, **changes) -> "SimConfig":
        return dataclasses.replace(self, **changes)

    def world_fingerprint(self) -> str:
        """Hash of everything that shapes the zone, the channels and the handover rule.

        Training-only knobs are left out so a policy file can be evaluated
        without repeating them.
        """
        d = asdict(self)
        for k in ("policy", "replications", "learning", "bank_size", "ucb_c", "reward_scale"):
            d.pop(k, None)
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


def validate(cfg: SimConfig) -> None:
    if cfg.policy not in POLICIES:
        raise ConfigurationError(f"unknown policy {cfg.policy!r}; expected one of {POLICIES}")
    if not cfg.density > 0:
        raise ConfigurationError("density must be positive")
    if not (cfg.extent[0] > 0 and cfg.extent[1] > 0):
        raise ConfigurationError("zone extent must have positive area")
    if not cfg.spacing > 0:
        raise ConfigurationError("spacing must be positive")
    if cfg.replications < 1:
        raise ConfigurationError("replications must be >= 1")
    if cfg.bank_size < 1:
        raise ConfigurationError("bank_size must be >= 1")
    if cfg.seed < 0:
        raise ConfigurationError("seed must be non-negative")
    if cfg.skeleton.max_paths < 1:
        raise ConfigurationError("max_paths must be >= 1")
    if not cfg.skeleton.ed_distance > 0:
        raise ConfigurationError("ed_distance must be positive")
    if cfg.skeleton.blockage_loss_db < 0:
        raise ConfigurationError("blockage_loss_db must be >= 0")
    if not 0.0 <= cfg.skeleton.delta <= 1.0:
        raise ConfigurationError("delta must be a probability")


def asdict(cfg: SimConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["extent"] = list(cfg.extent)
    d["waypoints"] = [list(p) for p in cfg.waypoints]
    d["handover"]["boundaries"] = list(cfg.handover.boundaries)
    return d


_SECTIONS = {
    "radio": RadioConfig,
    "arrays": ArrayConfig,
    "learning": LearningConfig,
    "skeleton": SkeletonConfig,
}


def from_dict(d: dict) -> SimConfig:
    d = dict(d)
    kw = {}
    try:
        for name, klass in _SECTIONS.items():
            if name in d:
                kw[name] = klass(**(d.pop(name) or {}))
        if "handover" in d:
            h = dict(d.pop("handover") or {})
            if "t_ho_db" in h:
                kw["handover"] = HandoverConfig.two_level(h.pop("t_ho_db"), **h)
            else:
                if "boundaries" in h:
                    h["boundaries"] = tuple(float(b) for b in h["boundaries"])
                kw["handover"] = HandoverConfig(**h)
        zone = d.pop("zone", None) or {}
        if "extent" in zone:
            kw["extent"] = tuple(float(x) for x in zone["extent"])
        if "density" in zone:
            kw["density"] = float(zone["density"])
        traj = d.pop("trajectory", None) or {}
        if "waypoints" in traj:
            kw["waypoints"] = tuple(tuple(float(c) for c in p) for p in traj["waypoints"])
        for key in ("spacing", "mobility_class", "speed_kmh"):
            if key in traj:
                kw[key] = traj[key]
        if "extent" in d:
            d["extent"] = tuple(d["extent"])
        if "waypoints" in d:
            d["waypoints"] = tuple(tuple(p) for p in d["waypoints"])
        kw.update(d)
        return SimConfig(**kw)
    except TypeError as exc:
        raise ConfigurationError(f"bad scenario: {exc}") from exc
    except ValueError as exc:
        raise ConfigurationError(f"bad scenario: {exc}") from exc


def load_scenario(path) -> SimConfig:
    with open(Path(path)) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ConfigurationError(f"{path}: scenario must be a mapping")
    return from_dict(data)


EXAMPLE_SCENARIO = """\
# Sparse pedestrian scenario. Lengths in meters, density in BS per m^2.
zone:
  extent: [100, 100]        # m x m
  density: 5.0e-4           # BS / m^2
trajectory:
  waypoints: [[0, 50], [100, 50]]   # m
  spacing: 2.0              # m between location indexes
  mobility_class: pedestrian
  speed_kmh: 5.0
radio:
  carrier_frequency: 28.0e+9 # Hz
  bandwidth: 500.0e+6       # Hz
  tx_power_dbm: 30.0        # dBm
  noise_psd_dbm_hz: -174.0  # dBm/Hz
  n_los: 3.0
  n_nlos: 4.0
arrays: {bs_rows: 8, bs_cols: 8, ue_rows: 4, ue_cols: 4}
handover:
  t_ho_db: 40.0             # dB, two-level quantisation
  trigger_window: 1         # CIs
learning: {alpha: 0.1, gamma: 0.99, epsilon: 0.01, episodes: 200000}
skeleton: {U_max: 10, delta: 0.2, ed_distance: 10.0, T_aging: 50, grid_size: 5.0}
replications: 500
bank_size: 1000
"""
