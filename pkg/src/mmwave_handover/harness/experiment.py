"""Tuning, training and evaluation pipelines plus aggregation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from mmwave_handover.baselines import EdPolicy, UcbStats
from mmwave_handover.errors import ConfigurationError
from mmwave_handover.harness.config import POLICIES, SimConfig
from mmwave_handover.harness.episode import (
    EpisodeMetrics,
    HandoverEnv,
    masked_greedy,
    run_multi_connectivity,
    run_q_policy,
    run_ucb_policy,
    train_ucb,
)
from mmwave_handover.harness.world import World, build_world, realize, track, track_threshold
from mmwave_handover.learning import QTable, train
from mmwave_handover.rng import stream
from mmwave_handover.skeleton import optimize_threshold

log = logging.getLogger(__name__)

NEEDS_Q = ("ours", "ours-ed")


@dataclass
class Artifacts:
    """Everything evaluation needs from tuning and training."""

    T_D: np.ndarray  # (N,) per-BS skeleton distance threshold
    fingerprint: str
    Q: Optional[QTable] = None
    ucb: Optional[UcbStats] = None
    tuning: dict = field(default_factory=dict)


# --- skeleton threshold --------------------------------------------------------


def tuning_set(world: World, n: Optional[int] = None) -> list:
    n = world.cfg.skeleton.tune_episodes if n is None else n
    return [realize(world, k, "tune") for k in range(n)]


def _bs_objective(world: World, rlzs, j: int):
    radio = world.cfg.radio
    cols = np.arange(world.M)

    def evaluate(T):
        total, U = 0.0, []
        for r in rlzs:
            m = r.mats[j]
            ref, u = track_threshold(m.D, T)
            snr = m.G[ref, cols] / radio.noise_power
            total += float(np.sum(radio.bandwidth * np.log2(1.0 + snr)))
            U.append(u)
        return total / len(rlzs), np.array(U)

    return evaluate


def tune_thresholds(world: World, rlzs=None) -> tuple[np.ndarray, dict]:
    """Per-BS T_D maximising the mean trajectory rate with Pr{U > U_max} <= delta."""
    sk = world.cfg.skeleton
    rlzs = tuning_set(world) if rlzs is None else rlzs
    T_D = np.zeros(world.N)
    exceed = np.zeros(world.N)
    for j in range(world.N):
        hi = max(float(r.mats[j].D.max()) for r in rlzs) + 1e-9
        f = _bs_objective(world, rlzs, j)
        T_D[j] = optimize_threshold(f, hi, U_max=sk.U_max, delta=sk.delta)
        exceed[j] = float(np.mean(f(T_D[j])[1] > sk.U_max))
    return T_D, {"p_exceed": exceed.tolist(), "episodes": len(rlzs)}


# --- training --------------------------------------------------------------------


def bank_episode(world: World, rlz, T_D=None, ed: Optional[EdPolicy] = None):
    tr = track(world, rlz, T_D=T_D, ed=ed)
    return (tr.level.tolist(), tr.rate.tolist()), tr.U_total


def build_bank(world: World, T_D: np.ndarray, n: Optional[int] = None) -> list:
    n = world.cfg.bank_size if n is None else n
    return [bank_episode(world, realize(world, k, "bank"), T_D=T_D)[0] for k in range(n)]


def make_env(world: World, episodes) -> HandoverEnv:
    return HandoverEnv(episodes, world.cfg.handover, world.N, world.M, world.cfg.reward_scale)


def train_artifacts(world: World, policies: Iterable[str] = ("ours", "smart-ucb"),
                    T_D: Optional[np.ndarray] = None, tuning: Optional[dict] = None) -> Artifacts:
    cfg = world.cfg
    if T_D is None:
        T_D, tuning = tune_thresholds(world)
    art = Artifacts(np.asarray(T_D, float), cfg.world_fingerprint(), tuning=tuning or {})
    policies = set(policies)
    want_q = bool(policies & set(NEEDS_Q))
    want_ucb = "smart-ucb" in policies
    if not (want_q or want_ucb):
        return art
    log.info("building training bank of %d realizations", cfg.bank_size)
    env = make_env(world, build_bank(world, art.T_D))
    if want_q:
        log.info("Q-learning for %d episodes", cfg.learning.episodes)
        art.Q, _, _ = train(env, cfg.learning, stream(cfg.seed, 0, "train-q"))
    if want_ucb:
        log.info("UCB statistics over %d episodes", cfg.learning.episodes)
        art.ucb = train_ucb(env, cfg.learning.episodes, stream(cfg.seed, 0, "train-ucb"), cfg.ucb_c)
    return art


# --- evaluation ------------------------------------------------------------------


def check_artifacts(world: World, art: Artifacts, policies: Sequence[str]) -> None:
    if art.fingerprint != world.cfg.world_fingerprint():
        raise ConfigurationError("policy file was trained on a different scenario or seed")
    if len(art.T_D) != world.N:
        raise ConfigurationError(f"policy file has {len(art.T_D)} thresholds for {world.N} BSs")
    for p in policies:
        if p not in POLICIES:
            raise ConfigurationError(f"unknown policy {p!r}")
        if p in NEEDS_Q and art.Q is None:
            raise ConfigurationError(f"policy {p!r} needs a trained Q-table")
        if p == "smart-ucb" and art.ucb is None:
            raise ConfigurationError("policy 'smart-ucb' needs trained UCB statistics")


def run_replication(world: World, art: Artifacts, policies: Sequence[str], r: int,
                    pi: Optional[np.ndarray] = None) -> list[EpisodeMetrics]:
    """All requested policies on the same channel realization (common random numbers)."""
    cfg = world.cfg
    rlz = realize(world, r, "eval")
    out = []
    td, U_td = bank_episode(world, rlz, T_D=art.T_D)
    env = make_env(world, [td])
    if pi is None and art.Q is not None:
        pi = masked_greedy(art.Q)
    for p in policies:
        if p == "ours":
            out.append(run_q_policy(env, pi, 0, "ours", r, U_td))
        elif p == "ours-ed":
            ed, U_ed = bank_episode(world, rlz, ed=EdPolicy(cfg.skeleton.ed_distance))
            out.append(run_q_policy(make_env(world, [ed]), pi, 0, "ours-ed", r, U_ed))
        elif p == "multi-connectivity":
            out.append(run_multi_connectivity(td[0], td[1], cfg.handover.T_HO, r, U_td))
        elif p == "smart-ucb":
            out.append(run_ucb_policy(env, art.ucb, cfg.ucb_c, 0, r, U_td))
        else:
            raise ConfigurationError(f"unknown policy {p!r}")
    return out


def run_episode(world: World, art: Artifacts, policy: str, replication: int = 0) -> EpisodeMetrics:
    check_artifacts(world, art, [policy])
    return run_replication(world, art, [policy], replication)[0]


def evaluate(world: World, art: Artifacts, policies: Sequence[str], replications: int,
             first: int = 0) -> list[EpisodeMetrics]:
    if replications < 1:
        raise ConfigurationError("replications must be >= 1")
    check_artifacts(world, art, policies)
    pi = masked_greedy(art.Q) if art.Q is not None else None
    out = []
    for r in range(first, first + replications):
        out.extend(run_replication(world, art, policies, r, pi))
    return out


def run_experiment(cfg: SimConfig, policies: Sequence[str] = POLICIES, replications: Optional[int] = None,
                   art: Optional[Artifacts] = None):
    """Train what is missing, evaluate every policy and return (metrics, artifacts, world)."""
    world = build_world(cfg)
    if art is None:
        art = train_artifacts(world, policies)
    reps = cfg.replications if replications is None else replications
    return evaluate(world, art, policies, reps), art, world


# --- aggregation -----------------------------------------------------------------


@dataclass
class PolicySummary:
    policy: str
    episodes: int
    mean_Rtraj_bps: float
    std_Rtraj_bps: float
    mean_handovers: float
    median_handovers: float
    mean_rate_std_bps: float  # per-episode std of R(i) across locations, averaged
    mean_rate_by_location: np.ndarray
    std_rate_by_location: np.ndarray
    handover_histogram: dict
    mean_U: float
    mean_probes: float
    rlf_fraction: float


def summarize(metrics: Sequence[EpisodeMetrics]) -> list[PolicySummary]:
    order = []
    by = {}
    for m in metrics:
        if m.policy not in by:
            order.append(m.policy)
            by[m.policy] = []
        by[m.policy].append(m)
    out = []
    for p in order:
        ms = by[p]
        n = len(ms)
        rt = [m.R_traj for m in ms]
        mean = math.fsum(rt) / n
        std = math.sqrt(math.fsum((x - mean) ** 2 for x in rt) / (n - 1)) if n > 1 else 0.0
        rates = np.array([m.rate for m in ms])
        hos = np.array([m.handovers for m in ms])
        hist = {int(k): int(v) for k, v in zip(*np.unique(hos, return_counts=True))}
        out.append(
            PolicySummary(
                policy=p,
                episodes=n,
                mean_Rtraj_bps=mean,
                std_Rtraj_bps=std,
                mean_handovers=float(hos.mean()),
                median_handovers=float(np.median(hos)),
                mean_rate_std_bps=float(np.mean(rates.std(axis=1))),
                mean_rate_by_location=rates.mean(axis=0),
                std_rate_by_location=rates.std(axis=0, ddof=1) if n > 1 else np.zeros(rates.shape[1]),
                handover_histogram=hist,
                mean_U=float(np.mean([m.U for m in ms])),
                mean_probes=float(np.mean([m.probes for m in ms])),
                rlf_fraction=float(sum(m.rlf for m in ms) / rates.size),
            )
        )
    return out
