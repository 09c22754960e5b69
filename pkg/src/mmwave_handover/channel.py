"""Narrowband cluster channel, planar-array responses, pathloss, SNR and rate."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mmwave_handover.environment import BaseStation, LinkState, UE_HEIGHT_M
from mmwave_handover.errors import ShapeError

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayConfig:
    bs_rows: int = 8
    bs_cols: int = 8
    ue_rows: int = 4
    ue_cols: int = 4

    def __post_init__(self):
        if min(self.bs_rows, self.bs_cols, self.ue_rows, self.ue_cols) < 1:
            raise ValueError("array dimensions must be >= 1")

    @property
    def n_bs(self) -> int:
        return self.bs_rows * self.bs_cols

    @property
    def n_ue(self) -> int:
        return self.ue_rows * self.ue_cols


@dataclass(frozen=True)
class RadioConfig:
    carrier_frequency: float = 28e9  # Hz
    bandwidth: float = 500e6  # Hz
    tx_power_dbm: float = 30.0
    noise_psd_dbm_hz: float = -174.0
    n_los: float = 3.0
    n_nlos: float = 4.0
    shadow_los_db: float = 3.6
    shadow_nlos_db: float = 9.7
    d0: float = 1.0  # m
    # cluster model
    mean_clusters: float = 1.8
    subpaths: int = 10
    angular_spread_deg: float = 10.0
    power_split_exponent: float = 2.8
    power_split_shadow_db: float = 4.0
    elevation_sector: float = math.pi / 6

    def __post_init__(self):
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        if not self.d0 > 0:
            raise ValueError("reference distance must be positive")
        if self.subpaths < 1:
            raise ValueError("need at least one subpath per cluster")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.carrier_frequency

    @property
    def noise_power(self) -> float:
        """Noise power over the band, normalized by the transmit power (linear)."""
        return 10.0 ** ((self.noise_psd_dbm_hz - self.tx_power_dbm) / 10.0) * self.bandwidth


@dataclass
class PathCluster:
    """One propagation cluster: R subpaths with complex gains and angle pairs.

    Angle arrays have shape (R, 2): column 0 azimuth in [-pi, pi], column 1
    elevation in [-pi/2, pi/2].
    """

    index: int
    gains: np.ndarray  # (R,) complex
    aod: np.ndarray  # (R, 2)
    aoa: np.ndarray  # (R, 2)
    center_aod: tuple[float, float] = (0.0, 0.0)
    center_aoa: tuple[float, float] = (0.0, 0.0)
    los: bool = False

    @property
    def R(self) -> int:
        return len(self.gains)

    @property
    def dominant_gain(self) -> float:
        return float(np.max(np.abs(self.gains)))


@dataclass
class ChannelMatrix:
    entries: np.ndarray  # (N_UE, N_BS) complex
    bs_id: int = 0
    location_index: int = 0
    ci_index: int = 0

    @property
    def shape(self):
        return self.entries.shape


def spatial_frequencies(theta, phi):
    """Map (azimuth, elevation) to the (row, column) phase slopes of the planar array."""
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    s = np.sin(theta)
    return s * np.cos(phi), s * np.sin(phi)


def array_response(theta: float, phi: float, rows: int, cols: int) -> np.ndarray:
    """Half-wavelength UPA response, entries exp(j*pi*(n_r*u + n_c*v)), row-major."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    u, v = spatial_frequencies(theta, phi)
    return _responses(np.atleast_1d(u), np.atleast_1d(v), rows, cols)[0]


def _responses(u: np.ndarray, v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """(K, rows*cols) responses for K spatial-frequency pairs."""
    nr = np.repeat(np.arange(rows), cols)
    nc = np.tile(np.arange(cols), rows)
    return np.exp(1j * np.pi * (np.outer(u, nr) + np.outer(v, nc)))


def array_responses(angles: np.ndarray, rows: int, cols: int) -> np.ndarray:
    """Stack of responses for an (K, 2) array of (azimuth, elevation) pairs."""
    angles = np.asarray(angles, dtype=float).reshape(-1, 2)
    u, v = spatial_frequencies(angles[:, 0], angles[:, 1])
    return _responses(u, v, rows, cols)


def dirichlet(n: int, x: np.ndarray) -> np.ndarray:
    """sum_{k<n} exp(j*pi*k*x), the 1D array factor."""
    k = np.arange(n)
    return np.exp(1j * np.pi * np.multiply.outer(x, k)).sum(axis=-1)


def response_inner(rows: int, cols: int, u1, v1, u2, v2) -> np.ndarray:
    """conj(a(u1, v1)) . a(u2, v2) for UPA responses, broadcasting over inputs."""
    return dirichlet(rows, np.subtract(u2, u1)) * dirichlet(cols, np.subtract(v2, v1))


def pathloss_db(d: float, los: bool, cfg: RadioConfig, rng: Optional[np.random.Generator] = None) -> float:
    """Close-in free-space reference pathloss with log-normal shadowing."""
    if d < cfg.d0:
        raise ValueError(f"distance {d} below reference distance {cfg.d0}")
    n_hat = cfg.n_los if los else cfg.n_nlos
    mu = cfg.shadow_los_db if los else cfg.shadow_nlos_db
    fspl = 20.0 * math.log10(4.0 * math.pi * cfg.d0 / cfg.wavelength)
    shadow = float(rng.normal(0.0, mu)) if (rng is not None and mu > 0) else 0.0
    return fspl + 10.0 * n_hat * math.log10(d / cfg.d0) + shadow


def _wrap(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def direction(src_xyz: Sequence[float], dst_xyz: Sequence[float]) -> tuple[float, float]:
    """(azimuth, elevation) of the ray leaving ``src`` towards ``dst``."""
    dx, dy, dz = (float(b) - float(a) for a, b in zip(src_xyz, dst_xyz))
    return math.atan2(dy, dx), math.atan2(dz, math.hypot(dx, dy))


def cluster_powers(n: int, cfg: RadioConfig, rng: np.random.Generator) -> np.ndarray:
    """Uniform-exponential power split across clusters, descending, summing to 1."""
    u = rng.uniform(0.0, 1.0, n)
    z = rng.normal(0.0, cfg.power_split_shadow_db, n)
    raw = u ** (cfg.power_split_exponent - 1.0) * 10.0 ** (-0.1 * z)
    raw = np.maximum(raw, 1e-12)
    return np.sort(raw / raw.sum())[::-1]


def draw_cluster_centers(n: int, cfg: RadioConfig, rng: np.random.Generator) -> list[tuple[float, float, float, float]]:
    """Central (AoD az, AoD el, AoA az, AoA el) for ``n`` scattered clusters."""
    az = rng.uniform(-math.pi, math.pi, size=(n, 2))
    el = rng.uniform(-cfg.elevation_sector, cfg.elevation_sector, size=(n, 2))
    return [(az[k, 0], el[k, 0], az[k, 1], el[k, 1]) for k in range(n)]


def draw_clusters(
    centers: Sequence[tuple[float, float, float, float]],
    powers: Sequence[float],
    pathloss_lin: float,
    cfg: RadioConfig,
    rng: np.random.Generator,
    los_first: bool = False,
) -> list[PathCluster]:
    """Subpath angles and Rayleigh gains around given cluster centers."""
    R = cfg.subpaths
    spread = math.radians(cfg.angular_spread_deg)
    out = []
    for p, (center, gamma) in enumerate(zip(centers, powers)):
        c = np.asarray(center, dtype=float)
        ang = c[None, :] + rng.normal(0.0, spread, size=(R, 4))
        ang[:, [0, 2]] = _wrap(ang[:, [0, 2]])
        ang[:, [1, 3]] = np.clip(ang[:, [1, 3]], -math.pi / 2, math.pi / 2)
        fading = (rng.normal(size=R) + 1j * rng.normal(size=R)) / math.sqrt(2.0)
        h = math.sqrt(gamma / pathloss_lin) * fading
        out.append(
            PathCluster(
                index=p,
                gains=h,
                aod=ang[:, 0:2].copy(),
                aoa=ang[:, 2:4].copy(),
                center_aod=(float(c[0]), float(c[1])),
                center_aoa=(float(c[2]), float(c[3])),
                los=bool(los_first and p == 0),
            )
        )
    return out


def channel_from_clusters(clusters: Sequence[PathCluster], arrays: ArrayConfig) -> np.ndarray:
    """H = (1/sqrt(R)) sum_p sum_r h_rp u_UE(aoa) u_BS(aod)^H."""
    H = np.zeros((arrays.n_ue, arrays.n_bs), dtype=complex)
    for c in clusters:
        u_ue = array_responses(c.aoa, arrays.ue_rows, arrays.ue_cols)  # (R, N_UE)
        u_bs = array_responses(c.aod, arrays.bs_rows, arrays.bs_cols)  # (R, N_BS)
        H += (u_ue.T * c.gains) @ u_bs.conj() / math.sqrt(c.R)
    return H


def generate_channel(
    bs: BaseStation,
    location: Sequence[float],
    link: LinkState,
    arrays: ArrayConfig,
    cfg: RadioConfig,
    rng: np.random.Generator,
    centers: Optional[Sequence[tuple[float, float, float, float]]] = None,
    ci_index: int = 0,
) -> tuple[ChannelMatrix, list[PathCluster]]:
    """Draw one cluster-channel realization for a BS/UE link.

    Without ``centers`` the cluster count is max(Poisson(mean_clusters), 1) and
    scattered clusters get uniform central angles; a LoS link additionally
    puts its first (strongest) cluster on the geometric BS-UE direction.
    ``centers`` pins the scattered clusters, which is how the harness keeps
    them spatially consistent along a trajectory.
    """
    bs_xyz = (bs.position[0], bs.position[1], bs.height)
    ue_xyz = (float(location[0]), float(location[1]), UE_HEIGHT_M)
    if centers is None:
        n_scatter = max(int(rng.poisson(cfg.mean_clusters)), 1) - (1 if link.los else 0)
        scattered = draw_cluster_centers(n_scatter, cfg, rng)
    else:
        scattered = list(centers)
    all_centers = []
    if link.los:
        aod = direction(bs_xyz, ue_xyz)
        aoa = direction(ue_xyz, bs_xyz)
        all_centers.append((aod[0], aod[1], aoa[0], aoa[1]))
    all_centers.extend(scattered)
    if not all_centers:
        all_centers = draw_cluster_centers(1, cfg, rng)
    pl_db = pathloss_db(max(link.distance_3d, cfg.d0), link.los, cfg, rng)
    powers = cluster_powers(len(all_centers), cfg, rng)
    clusters = draw_clusters(all_centers, powers, 10.0 ** (pl_db / 10.0), cfg, rng, los_first=link.los)
    H = channel_from_clusters(clusters, arrays)
    return ChannelMatrix(H, bs.id, link.location_index, ci_index), clusters


def _as_array(H) -> np.ndarray:
    return H.entries if isinstance(H, ChannelMatrix) else np.asarray(H)


def beamforming_gain(H, f: np.ndarray, w: np.ndarray) -> float:
    """|w^H H f|^2."""
    Hm = _as_array(H)
    f = np.asarray(f)
    w = np.asarray(w)
    if Hm.ndim != 2 or f.shape != (Hm.shape[1],) or w.shape != (Hm.shape[0],):
        raise ShapeError(f"H {Hm.shape}, f {f.shape}, w {w.shape} do not line up")
    return float(abs(np.vdot(w, Hm @ f)) ** 2)


def snr_linear(H, f: np.ndarray, w: np.ndarray, cfg: RadioConfig) -> float:
    """Noise-limited SNR |w^H H f|^2 / (sigma^2 W); interference is ignored."""
    return beamforming_gain(H, f, w) / cfg.noise_power


def snr_db(snr: float) -> float:
    return 10.0 * math.log10(snr) if snr > 0 else -math.inf


def rate_bps(snr_linear: float, W: float) -> float:
    """Achievable rate W*log2(1 + SNR) in bits per second."""
    if snr_linear < 0:
        raise ValueError("SNR must be non-negative")
    return W * math.log2(1.0 + snr_linear)
