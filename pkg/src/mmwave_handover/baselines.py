"""Reference policies: multi-connectivity handover, UCB1 backup selection, fixed-distance skeleton refresh."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np


def multi_connectivity_step(levels: Sequence[int], serving: int, T_HO: int) -> int:
    """Keep the serving BS while it is above T_HO, otherwise jump to the strongest level.

    Ties go to the lowest BS index. With every BS at or below T_HO the
    strongest one is still returned; the caller books a zero rate.
    """
    if levels[serving] > T_HO:
        return serving
    best = 0
    for j in range(1, len(levels)):
        if levels[j] > levels[best]:
            best = j
    return best


class UcbStats:
    """Visit counts and running mean rewards per (state, action)."""

    def __init__(self, state_shape: Sequence[int], n_actions: int):
        self.state_shape = tuple(state_shape)
        self.n_actions = int(n_actions)
        self.counts = np.zeros(self.state_shape + (n_actions,), dtype=np.int64)
        self.means = np.zeros(self.state_shape + (n_actions,))

    def t(self, s) -> int:
        return int(self.counts[tuple(s)].sum())

    def update(self, s, a: int, r: float) -> None:
        idx = tuple(s) + (a,)
        self.counts[idx] += 1
        self.means[idx] += (r - self.means[idx]) / self.counts[idx]

    def copy(self) -> "UcbStats":
        out = UcbStats(self.state_shape, self.n_actions)
        out.counts = self.counts.copy()
        out.means = self.means.copy()
        return out


def ucb_index(mean: float, n: int, t: int, c: float) -> float:
    return mean + c * math.sqrt(2.0 * math.log(t) / n)


def ucb_select(stats: UcbStats, s, c: float = 1.0, allowed: Optional[Sequence[int]] = None) -> int:
    """UCB1: untried actions first in index order, then max mean + c*sqrt(2 ln t / n)."""
    s = tuple(s)
    acts = range(stats.n_actions) if allowed is None else allowed
    return ucb_pick(stats.counts[s].tolist(), stats.means[s].tolist(), c, acts)


def ucb_pick(counts: Sequence[int], means: Sequence[float], c: float, acts: Sequence[int]) -> int:
    """UCB1 choice from one state's count and mean rows (t is the row's total count)."""
    for a in acts:
        if counts[a] == 0:
            return int(a)
    t = sum(counts)
    best, best_v = None, -math.inf
    for a in acts:
        v = ucb_index(means[a], counts[a], t, c)
        if v > best_v:
            best, best_v = int(a), v
    return best


@dataclass(frozen=True)
class EdPolicy:
    refresh_distance: float = 10.0  # meters

    def __post_init__(self):
        if not self.refresh_distance > 0:
            raise ValueError("refresh_distance must be positive")


def ed_should_refresh(distance_since_last_refresh: float, policy: EdPolicy) -> bool:
    """True once the UE has moved at least ``refresh_distance`` since the last skeleton update."""
    if distance_since_last_refresh < 0:
        raise ValueError("distance must be non-negative")
    return distance_since_last_refresh >= policy.refresh_distance - 1e-9


def run_ucb_bandit(means: Sequence[float], steps: int, rng: np.random.Generator, c: float = 1.0):
    """Play UCB1 on a Bernoulli bandit; returns (pulls per arm, cumulative pseudo-regret per step)."""
    means = np.asarray(means, dtype=float)
    stats = UcbStats((1,), len(means))
    best = means.max()
    regret = np.empty(steps)
    acc = 0.0
    for k in range(steps):
        a = ucb_select(stats, (0,), c)
        r = float(rng.random() < means[a])
        stats.update((0,), a, r)
        acc += best - means[a]
        regret[k] = acc
    return stats.counts[0].copy(), regret
