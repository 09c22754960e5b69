"""One pass along the trajectory under a given backup-selection policy."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mmwave_handover.baselines import UcbStats, multi_connectivity_step, ucb_pick
from mmwave_handover.handover import HandoverConfig, SnrLogTable, step_ci
from mmwave_handover.learning import QTable, _argmax


@dataclass
class EpisodeMetrics:
    policy: str
    replication: int
    rate: np.ndarray  # (M,) bps delivered at each location
    serving: np.ndarray  # (M,) BS delivering data at each location
    handover: np.ndarray  # (M,) bool, handover executed at that CI
    U: int  # skeleton renewals, summed over BSs
    probes: int
    rlf: int = 0  # radio-link failures

    @property
    def handovers(self) -> int:
        return int(self.handover.sum())

    @property
    def R_traj(self) -> float:
        return math.fsum(self.rate.tolist())

    def same_as(self, other: "EpisodeMetrics") -> bool:
        return (
            self.policy == other.policy
            and self.replication == other.replication
            and np.array_equal(self.rate, other.rate)
            and np.array_equal(self.serving, other.serving)
            and np.array_equal(self.handover, other.handover)
            and (self.U, self.probes, self.rlf) == (other.U, other.probes, other.rlf)
        )


class HandoverEnv:
    """Backup-and-handover episode over pre-tracked link levels, as an RL environment.

    State is (location, serving BS, serving level - 1) with the level taken
    from the SNR log (level 1 before the first probe). The action is the
    backup BS; the reward is the rate of the BS serving after the handover
    decision (zero on radio-link failure), times ``reward_scale``.
    """

    def __init__(self, episodes: Sequence, hcfg: HandoverConfig, n_bs: int, n_loc: int, reward_scale: float = 1.0):
        self.episodes = episodes  # list of (levels[j][i], rates[j][i]) nested lists, rates in bps
        self.hcfg = hcfg
        self.N = n_bs
        self.M = n_loc
        self.scale = reward_scale
        self.state_shape = (n_loc, n_bs, hcfg.L)
        self.n_actions = n_bs
        self._allowed = [[a for a in range(n_bs) if a != j] or [j] for j in range(n_bs)]
        self.k = 0

    @property
    def horizon(self) -> int:
        return self.M

    def reset(self, rng: Optional[np.random.Generator] = None, k: Optional[int] = None):
        if k is not None:
            self.k = k
        elif rng is not None:
            self.k = int(rng.integers(len(self.episodes)))
        self.levels, self.rates = self.episodes[self.k]
        self.log = SnrLogTable.fresh(self.N)
        self.serving = 0
        self.i = 0
        self.trace_rate = []
        self.trace_serving = []
        self.trace_ho = []
        self.probes = 0
        self.rlf = 0
        return self.state()

    def state(self):
        lvl = self.log.levels[self.serving]
        return (self.i, self.serving, 0 if lvl is None else lvl - 1)

    def allowed(self, s):
        return self._allowed[s[1]]

    def _probe(self, j: int) -> int:
        self.probes += 1
        return self.levels[j][self.i]

    def step(self, a: int):
        i = self.i
        backup = None if a == self.serving else a
        nxt, rec, _ = step_ci(self.log, self.serving, backup, self._probe, self.hcfg, i, i)
        rate = 0.0 if rec.radio_link_failure else self.rates[nxt][i]
        self.rlf += rec.radio_link_failure
        self.trace_rate.append(rate)
        self.trace_serving.append(nxt)
        self.trace_ho.append(rec.handover_executed)
        self.serving = nxt
        self.i = i + 1
        terminal = self.i == self.M
        return rate * self.scale, (None if terminal else self.state()), terminal

    def metrics(self, policy: str, replication: int, U: int) -> EpisodeMetrics:
        return EpisodeMetrics(
            policy,
            replication,
            np.array(self.trace_rate, dtype=float),
            np.array(self.trace_serving, dtype=int),
            np.array(self.trace_ho, dtype=bool),
            int(U),
            self.probes,
            self.rlf,
        )


def masked_greedy(Q: QTable) -> np.ndarray:
    """pi(i, serving, level) = argmax over backups other than the serving BS, lowest index on ties."""
    M, N, L = Q.state_shape
    pi = np.zeros((M, N, L), dtype=int)
    for i in range(M):
        for j in range(N):
            acts = [a for a in range(N) if a != j] or [j]
            for lv in range(L):
                pi[i, j, lv] = _argmax(Q.values[i, j, lv].tolist(), acts)
    return pi


def run_q_policy(env: HandoverEnv, pi: np.ndarray, k: int, name: str, replication: int, U: int) -> EpisodeMetrics:
    s = env.reset(k=k)
    pi = pi.tolist()
    while s is not None:
        _, s, _ = env.step(pi[s[0]][s[1]][s[2]])
    return env.metrics(name, replication, U)


def run_ucb_policy(env: HandoverEnv, stats: UcbStats, c: float, k: int, replication: int, U: int) -> EpisodeMetrics:
    """UCB1 backup choice; the statistics keep learning during the episode (on a copy)."""
    counts = stats.counts.tolist()
    means = stats.means.tolist()
    s = env.reset(k=k)
    while s is not None:
        cr, mr = counts[s[0]][s[1]][s[2]], means[s[0]][s[1]][s[2]]
        a = ucb_pick(cr, mr, c, env.allowed(s))
        r, s_next, _ = env.step(a)
        cr[a] += 1
        mr[a] += (r - mr[a]) / cr[a]
        s = s_next
    return env.metrics("smart-ucb", replication, U)


def train_ucb(env: HandoverEnv, episodes: int, rng: np.random.Generator, c: float) -> UcbStats:
    """Accumulate UCB1 statistics over training episodes drawn from the bank."""
    stats = UcbStats(env.state_shape, env.n_actions)
    counts = stats.counts.tolist()
    means = stats.means.tolist()
    for _ in range(episodes):
        s = env.reset(rng)
        while s is not None:
            cr, mr = counts[s[0]][s[1]][s[2]], means[s[0]][s[1]][s[2]]
            a = ucb_pick(cr, mr, c, env.allowed(s))
            r, s_next, _ = env.step(a)
            cr[a] += 1
            mr[a] += (r - mr[a]) / cr[a]
            s = s_next
    stats.counts[...] = np.array(counts, dtype=np.int64)
    stats.means[...] = np.array(means)
    return stats


def run_multi_connectivity(levels, rates, T_HO: int, replication: int, U: int) -> EpisodeMetrics:
    """Probe every BS each CI; zero rate when no BS clears T_HO."""
    N, M = len(levels), len(levels[0])
    serving = 0
    rate = np.zeros(M)
    srv = np.zeros(M, dtype=int)
    ho = np.zeros(M, dtype=bool)
    rlf = 0
    for i in range(M):
        lv = [levels[j][i] for j in range(N)]
        nxt = multi_connectivity_step(lv, serving, T_HO)
        if lv[nxt] > T_HO:
            rate[i] = rates[nxt][i]
        else:
            rlf += 1
        srv[i] = nxt
        ho[i] = nxt != serving
        serving = nxt
    return EpisodeMetrics("multi-connectivity", replication, rate, srv, ho, int(U), N * M, rlf)
