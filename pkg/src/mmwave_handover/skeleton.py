"""Path skeletons: extraction, restricted beam search, tracking distance, threshold search, database."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from mmwave_handover.channel import (
    ChannelMatrix,
    PathCluster,
    _responses,
    response_inner,
    spatial_frequencies,
)
from mmwave_handover.environment import LinkState
from mmwave_handover.errors import (
    BlockedSkeletonError,
    InfeasibleThresholdError,
    SkeletonUnavailable,
)

ALL = "ALL"  # beam_search sentinel: exhaustive search over every codeword pair

DEFAULT_GAIN_WEIGHT = 0.1  # distance units per dB of path gain


@dataclass(frozen=True)
class SkeletonPath:
    aod: tuple[float, float]
    aoa: tuple[float, float]
    gain: float  # linear amplitude

    @property
    def gain_db(self) -> float:
        return 20.0 * math.log10(self.gain) if self.gain > 0 else -400.0


@dataclass(frozen=True)
class PathSkeleton:
    paths: tuple[SkeletonPath, ...] = ()
    bs_id: int = 0
    grid_id: int = 0

    def __len__(self) -> int:
        return len(self.paths)

    def features(self, gain_weight: float = DEFAULT_GAIN_WEIGHT) -> np.ndarray:
        """(K, 5) rows of (AoD az, AoD el, AoA az, AoA el, weighted gain dB)."""
        if not self.paths:
            return np.zeros((0, 5))
        return np.array([[*p.aod, *p.aoa, gain_weight * p.gain_db] for p in self.paths])


@dataclass(frozen=True)
class Codebook:
    """DFT-style steering codebook for a planar array.

    Codewords sit on a uniform grid of spatial frequencies (u, v) in [-1, 1)^2,
    ``oversampling`` points per array dimension per axis, and are unit norm.
    """

    codewords: np.ndarray  # (n_antennas, n_codewords)
    u: np.ndarray
    v: np.ndarray
    rows: int
    cols: int
    side: str = "BS"

    def __len__(self) -> int:
        return self.codewords.shape[1]

    def nearest(self, theta: float, phi: float) -> int:
        """Index of the codeword with the largest |c^H a(theta, phi)|."""
        pu, pv = spatial_frequencies(theta, phi)
        return int(np.argmax(np.abs(response_inner(self.rows, self.cols, self.u, self.v, pu, pv))))


def make_codebook(rows: int, cols: int, oversampling: int = 2, side: str = "BS") -> Codebook:
    gu = -1.0 + 2.0 * np.arange(oversampling * rows) / (oversampling * rows)
    gv = -1.0 + 2.0 * np.arange(oversampling * cols) / (oversampling * cols)
    u = np.repeat(gu, len(gv))
    v = np.tile(gv, len(gu))
    cw = _responses(u, v, rows, cols).T / math.sqrt(rows * cols)
    return Codebook(cw, u, v, rows, cols, side)


def extract_skeleton(
    clusters: Sequence[PathCluster],
    link: Optional[LinkState] = None,
    max_paths: int = 3,
    grid_id: int = 0,
    gain: Optional[float] = None,
) -> PathSkeleton:
    """Keep the ``max_paths`` clusters with the strongest dominant subpath.

    ``gain`` is the link's large-scale amplitude 1/sqrt(PL) recorded on every
    path; without it each path records its dominant-subpath amplitude.
    """
    ranked = sorted(clusters, key=lambda c: c.dominant_gain, reverse=True)[:max_paths]
    paths = tuple(
        SkeletonPath(tuple(c.center_aod), tuple(c.center_aoa), c.dominant_gain if gain is None else gain)
        for c in ranked
    )
    return PathSkeleton(paths, bs_id=link.bs_id if link else 0, grid_id=grid_id)


def skeleton_pairs(ps: PathSkeleton, F: Codebook, W: Codebook) -> list[tuple[int, int]]:
    """(w index, f index) steered at each skeleton path."""
    return [(W.nearest(*p.aoa), F.nearest(*p.aod)) for p in ps.paths]


def beam_search(H, F: Codebook, W: Codebook, ps=ALL) -> tuple[int, int, float]:
    """Pick (f index, w index, |w^H H f|^2).

    ``ps=ALL`` scans every pair through G = W^H H F. A skeleton restricts the
    scan to one codeword pair per skeleton path.
    """
    Hm = H.entries if isinstance(H, ChannelMatrix) else np.asarray(H)
    if ps is ALL or (isinstance(ps, str) and ps == ALL):
        G = np.abs(W.codewords.conj().T @ Hm @ F.codewords) ** 2
        a, b = np.unravel_index(int(np.argmax(G)), G.shape)
        return int(b), int(a), float(G[a, b])
    if len(ps) == 0:
        raise BlockedSkeletonError("empty path skeleton: link blocked, re-query the skeleton")
    best = (-1, -1, -1.0)
    for a, b in skeleton_pairs(ps, F, W):
        g = float(abs(np.vdot(W.codewords[:, a], Hm @ F.codewords[:, b])) ** 2)
        if g > best[2]:
            best = (b, a, g)
    return best


def pair_gains(clusters: Sequence[PathCluster], pairs, F: Codebook, W: Codebook) -> np.ndarray:
    """|w_a^H H f_b|^2 for each (a, b) in ``pairs`` without forming H.

    Uses the closed-form array factor, so it costs O(pairs * subpaths).
    """
    pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
    if not clusters or len(pairs) == 0:
        return np.zeros(len(pairs))
    h = np.concatenate([c.gains / math.sqrt(c.R) for c in clusters])
    aod = np.concatenate([c.aod for c in clusters])
    aoa = np.concatenate([c.aoa for c in clusters])
    return _pair_gains(h, aod, aoa, pairs, F, W)


def _pair_gains(h, aod, aoa, pairs, F: Codebook, W: Codebook) -> np.ndarray:
    ud, vd = spatial_frequencies(aod[:, 0], aod[:, 1])
    ua, va = spatial_frequencies(aoa[:, 0], aoa[:, 1])
    a, b = pairs[:, 0], pairs[:, 1]
    # w_a^H u_UE(aoa) and u_BS(aod)^H f_b, each (pairs, subpaths)
    wu = response_inner(W.rows, W.cols, W.u[a][:, None], W.v[a][:, None], ua[None, :], va[None, :])
    uf = np.conj(response_inner(F.rows, F.cols, F.u[b][:, None], F.v[b][:, None], ud[None, :], vd[None, :]))
    norm = math.sqrt(W.rows * W.cols * F.rows * F.cols)
    g = (wu * uf) @ h / norm
    return np.abs(g) ** 2


# --- skeleton distance -------------------------------------------------------


def _angle_cost(fa: np.ndarray, fb: np.ndarray) -> np.ndarray:
    daz = _wrap(fa[:, None, 0] - fb[None, :, 0])
    del_ = fa[:, None, 1] - fb[None, :, 1]
    return np.hypot(daz, del_)


def _wrap(x):
    return (np.asarray(x) + np.pi) % (2 * np.pi) - np.pi


def _feature_diff(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    d = x - y
    d[..., 0] = _wrap(d[..., 0])
    d[..., 2] = _wrap(d[..., 2])
    return d


def skeleton_distance(a: PathSkeleton, b: PathSkeleton, gain_weight: float = DEFAULT_GAIN_WEIGHT) -> float:
    """Euclidean norm between two skeletons after greedy AoD matching.

    Paths are paired by repeatedly taking the globally closest remaining AoD
    pair; leftover paths count with their whole feature vector.
    """
    fa = a.features(gain_weight)
    fb = b.features(gain_weight)
    if len(fa) == 0 and len(fb) == 0:
        return 0.0
    total = 0.0
    free_a = np.ones(len(fa), bool)
    free_b = np.ones(len(fb), bool)
    if len(fa) and len(fb):
        cost = _angle_cost(fa, fb)
        for _ in range(min(len(fa), len(fb))):
            masked = np.where(free_a[:, None] & free_b[None, :], cost, np.inf)
            i, j = np.unravel_index(int(np.argmin(masked)), masked.shape)
            total += float(np.sum(_feature_diff(fa[i], fb[j]) ** 2))
            free_a[i] = free_b[j] = False
    total += float(np.sum(fa[free_a] ** 2)) + float(np.sum(fb[free_b] ** 2))
    return math.sqrt(total)


def pack_features(skeletons: Sequence[PathSkeleton], k_max: int, gain_weight: float = DEFAULT_GAIN_WEIGHT):
    """Pad skeleton features into (S, k_max, 5) plus a validity mask."""
    feats = np.zeros((len(skeletons), k_max, 5))
    mask = np.zeros((len(skeletons), k_max), bool)
    for s, sk in enumerate(skeletons):
        f = sk.features(gain_weight)[:k_max]
        feats[s, : len(f)] = f
        mask[s, : len(f)] = True
    return feats, mask


def batched_distance(fa, ma, fb, mb) -> np.ndarray:
    """Vectorised ``skeleton_distance`` over a batch of padded skeleton pairs.

    ``fa``/``fb`` are (B, K, 5) features with (B, K) masks; same greedy
    matching and tie order as the scalar version.
    """
    B, K, _ = fa.shape
    daz = _wrap(fa[:, :, None, 0] - fb[:, None, :, 0])
    del_ = fa[:, :, None, 1] - fb[:, None, :, 1]
    cost = np.hypot(daz, del_)
    free_a = ma.copy()
    free_b = mb.copy()
    total = np.zeros(B)
    rows = np.arange(B)
    for _ in range(K):
        avail = free_a[:, :, None] & free_b[:, None, :]
        any_avail = avail.reshape(B, -1).any(axis=1)
        if not any_avail.any():
            break
        flat = np.where(avail, cost, np.inf).reshape(B, -1)
        idx = np.argmin(flat, axis=1)
        i, j = np.divmod(idx, K)
        diff = _feature_diff(fa[rows, i], fb[rows, j])
        total += np.where(any_avail, np.sum(diff**2, axis=1), 0.0)
        free_a[rows[any_avail], i[any_avail]] = False
        free_b[rows[any_avail], j[any_avail]] = False
    total += np.sum(np.where(free_a[..., None], fa, 0.0) ** 2, axis=(1, 2))
    total += np.sum(np.where(free_b[..., None], fb, 0.0) ** 2, axis=(1, 2))
    return np.sqrt(total)


# --- threshold optimisation ----------------------------------------------------

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_max(f: Callable[[float], float], lo: float, hi: float, tol: float):
    """Golden-section search for the maximum of ``f`` on [lo, hi].

    Returns (x_best, f_best, evaluations) where x_best is the best point
    evaluated. When both interior points score -inf the bracket moves right,
    i.e. larger arguments are assumed to be the feasible side.
    """
    if hi < lo:
        lo, hi = hi, lo
    evals: list[tuple[float, float]] = []

    def g(x):
        y = f(x)
        evals.append((x, y))
        return y

    a, b = lo, hi
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = g(c), g(d)
    while b - a > tol:
        move_right = fc < fd or (fc == fd == -math.inf)
        if move_right:
            a, c, fc = c, d, fd
            d = a + INV_PHI * (b - a)
            fd = g(d)
        else:
            b, d, fd = d, c, fc
            c = b - INV_PHI * (b - a)
            fc = g(c)
    x_best, f_best = max(evals, key=lambda e: (e[1], -e[0]))
    return x_best, f_best, evals


@dataclass(frozen=True)
class ThresholdPolicy:
    T_D: float
    U_max: int = 10
    delta: float = 0.2

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ValueError("delta must be a probability")
        if self.U_max < 0:
            raise ValueError("U_max must be non-negative")


def optimize_threshold(
    evaluate: Callable[[float], tuple],
    hi: float,
    U_max: int = 10,
    delta: float = 0.2,
    lo: float = 0.0,
    tol: Optional[float] = None,
) -> float:
    """Largest expected rate over T_D in [lo, hi] subject to Pr{U > U_max} <= delta.

    ``evaluate(T_D)`` returns ``(objective, u)`` where ``u`` is either the
    estimated exceedance probability or the per-episode query counts.
    Infeasible candidates score -inf.
    """
    if tol is None:
        tol = 1e-3 * max(hi - lo, 1e-12)

    def penalised(t):
        obj, u = evaluate(t)
        p = float(u) if np.ndim(u) == 0 else float(np.mean(np.asarray(u) > U_max))
        return obj if p <= delta else -math.inf

    x, fx, _ = golden_section_max(penalised, lo, hi, tol)
    if fx == -math.inf:
        raise InfeasibleThresholdError(f"no T_D in [{lo}, {hi}] keeps Pr{{U > {U_max}}} <= {delta}")
    return x


# --- database ------------------------------------------------------------------


@dataclass
class SkeletonDatabase:
    """Per-BS grid database: fresh skeletons in the normal list, stale grid ids in the watch list."""

    T_aging: int = 50
    grid_size: float = 5.0
    normal: dict = field(default_factory=dict)  # grid_id -> [PathSkeleton, aging counter]
    watch: set = field(default_factory=set)
    query_count: int = 0

    def grid_id(self, x: float, y: float, width: float = 100.0) -> int:
        cols = max(int(math.ceil(width / self.grid_size)), 1)
        return int(y // self.grid_size) * cols + int(x // self.grid_size)

    def check(self):
        assert not (set(self.normal) & self.watch), "normal and watch lists overlap"


def db_tick(db: SkeletonDatabase) -> SkeletonDatabase:
    """Age every normal-list entry by one CI; expired entries move to the watch list."""
    for gid in list(db.normal):
        entry = db.normal[gid]
        entry[1] += 1
        if entry[1] > db.T_aging:
            del db.normal[gid]
            db.watch.add(gid)
    return db


def db_store(db: SkeletonDatabase, grid_id: int, skeleton: PathSkeleton) -> SkeletonDatabase:
    db.normal[grid_id] = [skeleton, 0]
    db.watch.discard(grid_id)
    return db


def db_query(db: SkeletonDatabase, grid_id: int, rebuild_fn: Callable[[int], Optional[PathSkeleton]]):
    """Return the stored skeleton for ``grid_id``, rebuilding it on a miss.

    Every rebuild counts one query. A rebuild that yields None means no UE
    took the finder request; callers fall back to exhaustive search.
    """
    entry = db.normal.get(grid_id)
    if entry is not None:
        return entry[0], db
    sk = rebuild_fn(grid_id)
    db.query_count += 1
    if sk is None:
        raise SkeletonUnavailable(f"no skeleton could be built for grid {grid_id}")
    db_store(db, grid_id, sk)
    return sk, db


def service_watch_list(
    db: SkeletonDatabase,
    ues_per_grid: Callable[[int], int],
    p_accept: float,
    finder: Callable[[int], PathSkeleton],
    rng: np.random.Generator,
) -> list[int]:
    """One slot of the background maintenance loop.

    For every watch-listed grid, the UEs present are asked in turn until one
    accepts; an accepting UE runs the finder and the result is stored fresh.
    Returns the grid ids rebuilt this slot.
    """
    rebuilt = []
    for gid in sorted(db.watch):
        for _ in range(ues_per_grid(gid)):
            if rng.random() < p_accept:
                db_store(db, gid, finder(gid))
                rebuilt.append(gid)
                break
    return rebuilt


def zero_acceptance_probability(p: float, n_ues: int, t_aging: int) -> float:
    """Chance that no UE accepts a finder request over ``t_aging`` slots: (1-p)^(U*T)."""
    return (1.0 - p) ** (n_ues * t_aging)
