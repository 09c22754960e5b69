"""Simulated world: PPP base-station deployment, UE trajectories and per-link blockage."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from mmwave_handover.errors import ConfigurationError

BS_HEIGHT_M = 6.0
UE_HEIGHT_M = 1.5

LOS = True
NLOS = False


@dataclass(frozen=True)
class BaseStation:
    id: int
    position: tuple[float, float]
    height: float = BS_HEIGHT_M


@dataclass(frozen=True)
class Zone:
    extent: tuple[float, float]
    bs_list: tuple[BaseStation, ...]
    density: float

    @property
    def area(self) -> float:
        return self.extent[0] * self.extent[1]

    @property
    def n_bs(self) -> int:
        return len(self.bs_list)

    def positions(self) -> np.ndarray:
        return np.array([bs.position for bs in self.bs_list], dtype=float).reshape(-1, 2)


@dataclass(frozen=True)
class Trajectory:
    points: np.ndarray  # (M, 2), meters
    spacing: float
    mobility_class: str = "pedestrian"
    speed_kmh: float = 5.0
    ue_height: float = UE_HEIGHT_M

    @property
    def M(self) -> int:
        return len(self.points)


@dataclass(frozen=True)
class LinkState:
    bs_id: int
    location_index: int
    los: bool
    distance_3d: float


@dataclass
class LinkTable:
    """Blockage draw for one episode: ``los[j, i]`` for BS j at location index i."""

    los: np.ndarray
    distance_3d: np.ndarray
    bs_ids: Sequence[int] = field(default_factory=list)

    def state(self, j: int, i: int) -> LinkState:
        return LinkState(int(self.bs_ids[j]), i, bool(self.los[j, i]), float(self.distance_3d[j, i]))

    def __iter__(self) -> Iterator[LinkState]:
        n, m = self.los.shape
        for j in range(n):
            for i in range(m):
                yield self.state(j, i)

    def __len__(self) -> int:
        return self.los.size


def deploy_bs(extent: tuple[float, float], density: float, rng: np.random.Generator) -> Zone:
    """Draw a homogeneous PPP of base stations over a rectangle.

    The count is Poisson(density * area), redrawn while zero so that every
    zone has at least one BS.
    """
    width, height = extent
    if not (density > 0) or not (width > 0 and height > 0):
        raise ConfigurationError(f"need density > 0 and a non-degenerate extent, got {density}, {extent}")
    mean = density * width * height
    count = 0
    while count == 0:
        count = int(rng.poisson(mean))
    xy = rng.uniform(0.0, 1.0, size=(count, 2)) * np.array([width, height])
    bs = tuple(BaseStation(id=k, position=(float(x), float(y))) for k, (x, y) in enumerate(xy))
    return Zone(extent=(float(width), float(height)), bs_list=bs, density=float(density))


def build_trajectory(
    waypoints: Sequence[Sequence[float]],
    spacing: float,
    mobility_class: str = "pedestrian",
    speed_kmh: float = 5.0,
) -> Trajectory:
    """Resample a polyline by arclength into location indexes ``spacing`` meters apart.

    Returns M = floor(length / spacing) + 1 points, first point at the first waypoint.
    """
    if not spacing > 0:
        raise ConfigurationError(f"spacing must be positive, got {spacing}")
    wp = np.asarray(waypoints, dtype=float)
    if wp.ndim != 2 or wp.shape[1] != 2 or len(wp) < 2:
        raise ConfigurationError("need at least two 2D waypoints")
    seg = np.diff(wp, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    total = float(seg_len.sum())
    if total + 1e-9 < spacing:
        raise ConfigurationError(f"path length {total} shorter than spacing {spacing}")
    m = int(math.floor(total / spacing + 1e-9)) + 1
    s = np.arange(m) * spacing
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    x = np.interp(s, cum, wp[:, 0])
    y = np.interp(s, cum, wp[:, 1])
    return Trajectory(np.column_stack([x, y]), float(spacing), mobility_class, float(speed_kmh))


def los_probability(d):
    """LoS probability at 3D distance ``d`` (meters), NYC 28 GHz fit.

    Accepts scalars or arrays.
    """
    d_arr = np.asarray(d, dtype=float)
    if np.any(d_arr <= 0):
        raise ValueError("distance must be positive")
    decay = np.exp(-d_arr / 71.0)
    p = (np.minimum(27.0 / d_arr, 1.0) * (1.0 - decay) + decay) ** 2
    # the bracket is exactly 1 inside 27 m; avoid 1 - 1e-16 from rounding
    p = np.where(d_arr <= 27.0, 1.0, p)
    return float(p) if np.ndim(d) == 0 else p


def nlos_probability(d):
    return 1.0 - los_probability(d)


def distance_3d(zone: Zone, traj: Trajectory) -> np.ndarray:
    """(N, M) matrix of BS-to-UE 3D distances."""
    bs_xy = zone.positions()
    heights = np.array([bs.height for bs in zone.bs_list])
    dxy = bs_xy[:, None, :] - traj.points[None, :, :]
    dz = heights[:, None] - traj.ue_height
    return np.sqrt(dxy[..., 0] ** 2 + dxy[..., 1] ** 2 + dz**2)


def draw_link_states(zone: Zone, traj: Trajectory, rng: np.random.Generator) -> LinkTable:
    """One Bernoulli(p_LoS(d)) blockage draw per (BS, location) for an episode."""
    d = distance_3d(zone, traj)
    p = los_probability(d)
    los = rng.random(d.shape) < p
    return LinkTable(los=los, distance_3d=d, bs_ids=[bs.id for bs in zone.bs_list])
