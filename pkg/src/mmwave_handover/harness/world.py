"""Static world per seed and per-episode channel realizations.

A world fixes the BS deployment, the trajectory, per-BS scatterers and the
large-scale fading along the trajectory. An episode redraws blockage, the
subpath spread and the small-scale fading. For every (BS, location) pair the
realization carries the restricted beam-search gain obtained when the
skeleton of location ``i0`` is used at location ``i`` and the skeleton
distance between the two locations; the trackers read those two matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from mmwave_handover.baselines import EdPolicy, ed_should_refresh
from mmwave_handover.channel import (
    PathCluster,
    _wrap,
    cluster_powers,
    direction,
    pathloss_db,
    spatial_frequencies,
)
from mmwave_handover.environment import (
    BS_HEIGHT_M,
    UE_HEIGHT_M,
    BaseStation,
    Trajectory,
    Zone,
    build_trajectory,
    deploy_bs,
    distance_3d,
    draw_link_states,
    los_probability,
)
from mmwave_handover.errors import ConfigurationError
from mmwave_handover.harness.config import SimConfig
from mmwave_handover.rng import stream
from mmwave_handover.skeleton import Codebook, batched_distance, make_codebook

SCATTER_MARGIN_M = 20.0


@dataclass
class World:
    cfg: SimConfig
    zone: Zone
    traj: Trajectory
    F: Codebook
    W: Codebook
    los_prob: np.ndarray  # (N, M)
    centers: list  # per BS: (M, C, 4) cluster centers, slot 0 is the LoS direction
    powers_los: list  # per BS: (C,) power split, slot 0 is the direct cluster
    powers_nlos: list  # per BS: (C,) split with the direct cluster attenuated by blockage
    pl_los: np.ndarray  # (N, M) linear pathloss incl. shadowing
    pl_nlos: np.ndarray
    trace: Optional[object] = None

    @property
    def N(self) -> int:
        return self.zone.n_bs

    @property
    def M(self) -> int:
        return self.traj.M


@dataclass
class RayBatch:
    """All subpaths of one BS along the trajectory, padded to S per location."""

    h: np.ndarray  # (M, S) complex, already divided by sqrt(R)
    aod: np.ndarray  # (M, S, 2)
    aoa: np.ndarray  # (M, S, 2)
    cluster_of: np.ndarray  # (S,) cluster slot of each subpath
    centers: np.ndarray  # (M, C, 4)
    dominant: np.ndarray  # (M, C) strongest subpath amplitude, -inf if absent
    present: np.ndarray  # (M, C)
    R: int
    link_amp: Optional[np.ndarray] = None  # (M,) large-scale amplitude 1/sqrt(PL), the skeleton gain

    def clusters(self, i: int) -> list[PathCluster]:
        """The clusters of location ``i`` as PathCluster objects."""
        out = []
        for c in np.flatnonzero(self.present[i]):
            sel = self.cluster_of == c
            out.append(
                PathCluster(
                    index=int(c),
                    gains=self.h[i, sel] * math.sqrt(self.R),
                    aod=self.aod[i, sel].copy(),
                    aoa=self.aoa[i, sel].copy(),
                    center_aod=tuple(self.centers[i, c, 0:2]),
                    center_aoa=tuple(self.centers[i, c, 2:4]),
                )
            )
        return out


def _ar1(M: int, sigma: float, rho: float, rng) -> np.ndarray:
    z = rng.normal(0.0, sigma, M)
    out = np.empty(M)
    out[0] = z[0]
    k = math.sqrt(1.0 - rho * rho)
    for i in range(1, M):
        out[i] = rho * out[i - 1] + k * z[i]
    return out


def build_world(cfg: SimConfig) -> World:
    if cfg.trace is not None:
        from mmwave_handover.harness.io import load_trace

        return world_from_trace(cfg, load_trace(cfg.trace))
    rng = stream(cfg.seed, 0, "world")
    zone = deploy_bs(cfg.extent, cfg.density, rng)
    traj = build_trajectory(cfg.waypoints, cfg.spacing, cfg.mobility_class, cfg.speed_kmh)
    radio = cfg.radio
    d3 = distance_3d(zone, traj)
    rho = math.exp(-cfg.spacing / cfg.skeleton.shadow_decorrelation)
    fspl_term = lambda d, los: pathloss_db(max(d, radio.d0), los, radio)  # noqa: E731

    centers, p_los, p_nlos = [], [], []
    pl_los = np.empty(d3.shape)
    pl_nlos = np.empty(d3.shape)
    ue = np.column_stack([traj.points, np.full(traj.M, UE_HEIGHT_M)])
    for j, bs in enumerate(zone.bs_list):
        n_s = max(int(rng.poisson(radio.mean_clusters)), 1)
        lo = -SCATTER_MARGIN_M
        sx = rng.uniform(lo, cfg.extent[0] - lo, n_s)
        sy = rng.uniform(lo, cfg.extent[1] - lo, n_s)
        sz = rng.uniform(0.0, 2.0 * BS_HEIGHT_M, n_s)
        bs_xyz = (bs.position[0], bs.position[1], bs.height)
        c = np.empty((traj.M, n_s + 1, 4))
        for i in range(traj.M):
            c[i, 0, 0:2] = direction(bs_xyz, ue[i])
            c[i, 0, 2:4] = direction(ue[i], bs_xyz)
            for k in range(n_s):
                s_xyz = (sx[k], sy[k], sz[k])
                c[i, k + 1, 0:2] = direction(bs_xyz, s_xyz)
                c[i, k + 1, 2:4] = direction(ue[i], s_xyz)
        centers.append(c)
        pw = cluster_powers(n_s + 1, radio, rng)
        p_los.append(pw)
        pn = pw.copy()
        pn[0] *= 10.0 ** (-cfg.skeleton.blockage_loss_db / 10.0)
        p_nlos.append(pn / pn.sum())
        sh_l = _ar1(traj.M, radio.shadow_los_db, rho, rng)
        sh_n = _ar1(traj.M, radio.shadow_nlos_db, rho, rng)
        for i in range(traj.M):
            pl_los[j, i] = 10.0 ** ((fspl_term(d3[j, i], True) + sh_l[i]) / 10.0)
            pl_nlos[j, i] = 10.0 ** ((fspl_term(d3[j, i], False) + sh_n[i]) / 10.0)
    ovs = cfg.skeleton.codebook_oversampling
    arrays = cfg.arrays
    return World(
        cfg=cfg,
        zone=zone,
        traj=traj,
        F=make_codebook(arrays.bs_rows, arrays.bs_cols, ovs, "BS"),
        W=make_codebook(arrays.ue_rows, arrays.ue_cols, ovs, "UE"),
        los_prob=los_probability(d3),
        centers=centers,
        powers_los=p_los,
        powers_nlos=p_nlos,
        pl_los=pl_los,
        pl_nlos=pl_nlos,
    )


def world_from_trace(cfg: SimConfig, trace) -> World:
    N, M = trace.n_bs, trace.n_locations
    traj = build_trajectory(cfg.waypoints, cfg.spacing, cfg.mobility_class, cfg.speed_kmh)
    if traj.M != M:
        pts = np.column_stack([np.arange(M) * cfg.spacing, np.zeros(M)])
        traj = Trajectory(pts, cfg.spacing, cfg.mobility_class, cfg.speed_kmh)
    bs = tuple(BaseStation(j, (math.nan, math.nan)) for j in range(N))
    zone = Zone(cfg.extent, bs, cfg.density)
    ovs = cfg.skeleton.codebook_oversampling
    arrays = cfg.arrays
    empty = np.zeros((N, M))
    return World(cfg, zone, traj, make_codebook(arrays.bs_rows, arrays.bs_cols, ovs, "BS"),
                 make_codebook(arrays.ue_rows, arrays.ue_cols, ovs, "UE"), empty, [], [], [],
                 empty, empty, trace=trace)


def link_rays(world: World, j: int, los_row: np.ndarray, rng: np.random.Generator) -> RayBatch:
    """Subpaths of BS ``j`` at every location for one episode."""
    radio = world.cfg.radio
    R = radio.subpaths
    centers = world.centers[j]
    M, C, _ = centers.shape
    present = np.ones((M, C), bool)
    power = np.where(los_row[:, None], world.powers_los[j][None, :], world.powers_nlos[j][None, :])
    pl = np.where(los_row, world.pl_los[j], world.pl_nlos[j])
    spread = math.radians(radio.angular_spread_deg)
    ang = centers[:, :, None, :] + rng.normal(0.0, spread, size=(M, C, R, 4))
    ang[..., [0, 2]] = _wrap(ang[..., [0, 2]])
    ang[..., [1, 3]] = np.clip(ang[..., [1, 3]], -math.pi / 2, math.pi / 2)
    fading = (rng.normal(size=(M, C, R)) + 1j * rng.normal(size=(M, C, R))) / math.sqrt(2.0)
    amp = np.sqrt(power / pl[:, None]) * present
    gains = amp[:, :, None] * fading
    dominant = np.where(present, np.abs(gains).max(axis=2), -np.inf)
    return RayBatch(
        h=(gains / math.sqrt(R)).reshape(M, C * R),
        aod=ang[..., 0:2].reshape(M, C * R, 2),
        aoa=ang[..., 2:4].reshape(M, C * R, 2),
        cluster_of=np.repeat(np.arange(C), R),
        centers=centers,
        dominant=dominant,
        present=present,
        R=R,
        link_amp=1.0 / np.sqrt(pl),
    )


def trace_rays(world: World, rlz: int, j: int) -> tuple[RayBatch, np.ndarray]:
    """Single-ray clusters read from a channel trace; returns (rays, los row)."""
    tr = world.trace
    k = rlz % tr.n_realizations
    cl = tr.clusters[k][j]  # list over locations of (C_i, 6) arrays
    M = world.M
    C = max(1, max(len(x) for x in cl))
    centers = np.zeros((M, C, 4))
    present = np.zeros((M, C), bool)
    amp = np.zeros((M, C))
    los = np.zeros(M, bool)
    for i, rows in enumerate(cl):
        n = len(rows)
        if n:
            centers[i, :n] = rows[:, 0:4]
            amp[i, :n] = 10.0 ** (rows[:, 4] / 20.0)
            present[i, :n] = True
            los[i] = bool(rows[:, 5].any())
    rays = RayBatch(
        h=amp.astype(complex),
        aod=centers[..., 0:2].copy(),
        aoa=centers[..., 2:4].copy(),
        cluster_of=np.arange(C),
        centers=centers,
        dominant=np.where(present, amp, -np.inf),
        present=present,
        R=1,
    )
    return rays, los


def _dirichlet_fast(n: int, x: np.ndarray) -> np.ndarray:
    """Closed-form sum_{k<n} exp(j*pi*k*x), falling back to the sum near its poles."""
    half = 0.5 * np.pi * x
    den = np.sin(half)
    bad = np.abs(den) < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.exp(1j * (n - 1) * half) * np.sin(n * half) / den
    if bad.any():
        xb = x[bad]
        out[bad] = np.exp(1j * np.pi * np.multiply.outer(xb, np.arange(n))).sum(axis=-1)
    return out


def nearest_codewords(cb: Codebook, theta: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Vectorised ``Codebook.nearest``: the array factor is separable, so each axis is maximised alone."""
    pu, pv = spatial_frequencies(theta, phi)
    n_v = int(np.count_nonzero(cb.u == cb.u[0]))
    grid_u = cb.u[::n_v]
    grid_v = cb.v[:n_v]
    au = np.abs(_dirichlet_fast(cb.rows, pu[..., None] - grid_u))
    av = np.abs(_dirichlet_fast(cb.cols, pv[..., None] - grid_v))
    return np.argmax(au, axis=-1) * n_v + np.argmax(av, axis=-1)


def _codeword_factors(cb: Codebook, ids: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """conj(c_k) . a(u, v) * sqrt(n) for codewords ``ids``; one array factor per distinct grid value."""
    n_v = int(np.count_nonzero(cb.u == cb.u[0]))
    iu, iv = np.divmod(ids, n_v)
    ru, iu_inv = np.unique(iu, return_inverse=True)
    rv, iv_inv = np.unique(iv, return_inverse=True)
    du = _dirichlet_fast(cb.rows, u[None] - cb.u[ru * n_v][:, None, None])
    dv = _dirichlet_fast(cb.cols, v[None] - cb.v[rv][:, None, None])
    return du[iu_inv] * dv[iv_inv]


@dataclass
class LinkMatrices:
    G: np.ndarray  # (M, M) gain at location i with the skeleton of i0
    D: np.ndarray  # (M, M) skeleton distance between i0 and i


def link_matrices(world: World, rays: RayBatch) -> LinkMatrices:
    sk = world.cfg.skeleton
    K = sk.max_paths
    F, W = world.F, world.W
    M = rays.h.shape[0]
    order = np.argsort(-rays.dominant, axis=1, kind="stable")[:, :K]
    K = order.shape[1]
    rows = np.arange(M)[:, None]
    valid = np.take_along_axis(rays.present, order, axis=1)
    cen = rays.centers[rows, order]  # (M, K, 4)
    dom = rays.dominant[rows, order]
    if rays.link_amp is not None:
        dom = np.broadcast_to(rays.link_amp[:, None], dom.shape)
    with np.errstate(divide="ignore"):
        gdb = np.where(valid, 20.0 * np.log10(np.where(valid, dom, 1.0)), 0.0)
    feats = np.concatenate([cen, (sk.gain_weight * gdb)[..., None]], axis=-1)
    feats[~valid] = 0.0

    f_idx = nearest_codewords(F, cen[..., 0], cen[..., 1])  # (M, K)
    w_idx = nearest_codewords(W, cen[..., 2], cen[..., 3])
    pf = f_idx[valid]
    pw = w_idx[valid]
    uf_ids, pf_inv = np.unique(pf, return_inverse=True)
    uw_ids, pw_inv = np.unique(pw, return_inverse=True)
    ud, vd = spatial_frequencies(rays.aod[..., 0], rays.aod[..., 1])  # (M, S)
    ua, va = spatial_frequencies(rays.aoa[..., 0], rays.aoa[..., 1])
    # u_BS(aod)^H f_b and w_a^H u_UE(aoa) for the codewords actually used
    uf = np.conj(_codeword_factors(F, uf_ids, ud, vd))
    wu = _codeword_factors(W, uw_ids, ua, va)
    norm = math.sqrt(W.rows * W.cols * F.rows * F.cols)
    g = np.einsum("pms,pms,ms->pm", wu[pw_inv], uf[pf_inv], rays.h) / norm
    pg = np.abs(g) ** 2  # (P, M) with P = number of valid skeleton paths
    G = np.zeros((M, K, M))
    G[valid] = pg
    G = G.max(axis=1)

    # trackers only look forward (i0 <= i); the lower triangle mirrors the upper one
    ii, jj = np.triu_indices(M)
    D = np.zeros((M, M))
    D[ii, jj] = batched_distance(feats[ii], valid[ii], feats[jj], valid[jj])
    D[jj, ii] = D[ii, jj]
    return LinkMatrices(G, D)


def track_threshold(D: np.ndarray, T_D: float) -> tuple[np.ndarray, int]:
    """Reference location in use at each i and the number of skeleton renewals.

    The skeleton is renewed whenever its distance to the current one exceeds
    ``T_D``; the initial acquisition at i = 0 is not counted.
    """
    M = D.shape[0]
    ref = np.empty(M, dtype=int)
    r, U = 0, 0
    ref[0] = 0
    for i in range(1, M):
        if D[r, i] > T_D:
            r = i
            U += 1
        ref[i] = r
    return ref, U


def track_distance(M: int, spacing: float, policy: EdPolicy) -> tuple[np.ndarray, int]:
    """Renew the skeleton every ``refresh_distance`` meters of travel."""
    ref = np.empty(M, dtype=int)
    r, U = 0, 0
    ref[0] = 0
    for i in range(1, M):
        if ed_should_refresh((i - r) * spacing, policy):
            r = i
            U += 1
        ref[i] = r
    return ref, U


@dataclass
class Tracked:
    """Per-BS link quality along the trajectory under one tracker."""

    snr_db: np.ndarray  # (N, M)
    level: np.ndarray  # (N, M) int
    rate: np.ndarray  # (N, M) bps
    U: np.ndarray  # (N,) renewals per BS

    @property
    def U_total(self) -> int:
        return int(self.U.sum())


def tracked_quality(world: World, mats: list[LinkMatrices], refs: list[np.ndarray], U) -> Tracked:
    radio = world.cfg.radio
    hcfg = world.cfg.handover
    N, M = len(mats), world.M
    cols = np.arange(M)
    gain = np.array([m.G[r, cols] for m, r in zip(mats, refs)]).reshape(N, M)
    snr = gain / radio.noise_power
    with np.errstate(divide="ignore"):
        sdb = 10.0 * np.log10(snr)
    level = np.ones((N, M), dtype=int)
    for b in hcfg.boundaries:
        level += sdb >= b
    rate = radio.bandwidth * np.log2(1.0 + snr)
    return Tracked(sdb, level, rate, np.asarray(U, dtype=int))


@dataclass
class Realization:
    index: int
    los: np.ndarray  # (N, M)
    mats: list  # per BS LinkMatrices, kept only when requested


def realize(world: World, index: int, tag: str) -> Realization:
    """One episode's channels, drawn from the (seed, index, tag) stream."""
    if world.trace is not None:
        mats, los = [], []
        for j in range(world.N):
            rays, l = trace_rays(world, index, j)
            mats.append(link_matrices(world, rays))
            los.append(l)
        return Realization(index, np.array(los).reshape(world.N, world.M), mats)
    rng = stream(world.cfg.seed, index, tag)
    links = draw_link_states(world.zone, world.traj, rng)
    mats = [link_matrices(world, link_rays(world, j, links.los[j], rng)) for j in range(world.N)]
    return Realization(index, links.los, mats)


def track(world: World, rlz: Realization, T_D: Optional[np.ndarray] = None, ed: Optional[EdPolicy] = None) -> Tracked:
    if (T_D is None) == (ed is None):
        raise ConfigurationError("pick exactly one of T_D or ed")
    refs, U = [], []
    for j, m in enumerate(rlz.mats):
        if ed is not None:
            r, u = track_distance(world.M, world.traj.spacing, ed)
        else:
            r, u = track_threshold(m.D, float(T_D[j]))
        refs.append(r)
        U.append(u)
    return tracked_quality(world, rlz.mats, refs, U)
