"""Tabular epsilon-greedy Q-learning over (location, serving BS, SNR level) states."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

QTABLE_FORMAT = "mmwave-handover-qtable"
QTABLE_VERSION = 1


@dataclass(frozen=True)
class LearningConfig:
    alpha: float = 0.1
    gamma: float = 0.99
    epsilon: float = 0.01
    episodes: int = 200_000

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError("alpha must be in (0, 1]")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must be in [0, 1]")
        if not 0.0 <= self.epsilon <= 1.0:
            raise ValueError("epsilon must be in [0, 1]")


class QTable:
    """Action values indexed by state tuple then action.

    For the handover problem the state is (location, serving BS, level - 1)
    and the table has shape (M, N, L, N).
    """

    def __init__(self, state_shape: Sequence[int], n_actions: int, values: Optional[np.ndarray] = None):
        self.state_shape = tuple(int(s) for s in state_shape)
        self.n_actions = int(n_actions)
        shape = self.state_shape + (self.n_actions,)
        if values is None:
            values = np.zeros(shape)
        values = np.asarray(values, dtype=float)
        if values.shape != shape:
            raise ValueError(f"values shape {values.shape} != {shape}")
        self.values = values

    def __getitem__(self, s):
        return self.values[s]

    def copy(self) -> "QTable":
        return QTable(self.state_shape, self.n_actions, self.values.copy())

    def greedy_policy(self) -> np.ndarray:
        """pi(s) = argmax_a Q(s, a) with lowest-index ties (np.argmax semantics)."""
        return np.argmax(self.values, axis=-1)

    def save(self, path, **metadata) -> None:
        header = {
            "format": QTABLE_FORMAT,
            "version": QTABLE_VERSION,
            "state_shape": list(self.state_shape),
            "n_actions": self.n_actions,
            "metadata": metadata,
        }
        np.savez(
            path,
            header=np.array(json.dumps(header, sort_keys=True)),
            values=np.ascontiguousarray(self.values).ravel(order="C"),
        )

    @classmethod
    def load(cls, path) -> tuple["QTable", dict]:
        with np.load(Path(path), allow_pickle=False) as z:
            header = json.loads(str(z["header"]))
            if header.get("format") != QTABLE_FORMAT or header.get("version") != QTABLE_VERSION:
                raise ValueError(f"{path}: not a version-{QTABLE_VERSION} Q-table file")
            shape = tuple(header["state_shape"]) + (header["n_actions"],)
            values = z["values"].reshape(shape, order="C")
        return cls(header["state_shape"], header["n_actions"], values), header["metadata"]


def _check_index(Q: QTable, s, a) -> None:
    s = tuple(s)
    if len(s) != len(Q.state_shape) or any(not 0 <= x < n for x, n in zip(s, Q.state_shape)):
        raise IndexError(f"state {s} outside {Q.state_shape}")
    if not 0 <= a < Q.n_actions:
        raise IndexError(f"action {a} outside [0, {Q.n_actions})")


def q_update(Q: QTable, s, a: int, r: float, s_next, alpha: float, gamma: float, terminal: bool = False) -> QTable:
    """Q(s,a) += alpha * (r + gamma * max_a' Q(s', a') - Q(s,a)); only (s, a) changes.

    ``terminal`` bootstraps from a zero-valued terminal state instead of s'.
    """
    _check_index(Q, s, a)
    s = tuple(s)
    if terminal:
        target = r
    else:
        _check_index(Q, s_next, 0)
        target = r + gamma * float(np.max(Q.values[tuple(s_next)]))
    Q.values[s + (a,)] += alpha * (target - Q.values[s + (a,)])
    return Q


def _argmax(row, allowed: Optional[Sequence[int]] = None) -> int:
    if allowed is None:
        best, best_v = 0, row[0]
        for k in range(1, len(row)):
            if row[k] > best_v:
                best, best_v = k, row[k]
        return best
    best, best_v = allowed[0], row[allowed[0]]
    for k in allowed[1:]:
        if row[k] > best_v:
            best, best_v = k, row[k]
    return best


def select_action(Q: QTable, s, epsilon: float, rng: np.random.Generator, allowed: Optional[Sequence[int]] = None) -> int:
    """Epsilon-greedy: uniform over the allowed actions with prob. epsilon, else greedy.

    Greedy ties go to the lowest action index.
    """
    acts = list(range(Q.n_actions)) if allowed is None else list(allowed)
    if rng.random() < epsilon:
        return int(acts[int(rng.integers(len(acts)))])
    return int(_argmax(Q.values[tuple(s)], acts))


class EpisodicEnv(Protocol):
    """What ``train`` needs from an environment."""

    def reset(self, rng: np.random.Generator):
        """Start an episode and return the first state tuple."""

    def allowed(self, s) -> Sequence[int]:
        """Actions available in ``s``."""

    def step(self, a: int):
        """Apply ``a``; return (reward, next_state, terminal)."""

    @property
    def horizon(self) -> int:
        """Maximum steps per episode."""


def train(env: EpisodicEnv, cfg: LearningConfig, rng: np.random.Generator, Q: Optional[QTable] = None,
          state_shape=None, n_actions=None) -> tuple[QTable, np.ndarray, list]:
    """Run epsilon-greedy Q-learning for ``cfg.episodes`` episodes.

    Returns the Q-table, the greedy policy and the undiscounted return of
    every episode.
    """
    if Q is None:
        Q = QTable(state_shape or env.state_shape, n_actions or env.n_actions)
    V = Q.values
    alpha, gamma, eps = cfg.alpha, cfg.gamma, cfg.epsilon
    horizon = env.horizon
    # plain-list rows are much faster than numpy scalars in this loop; written back at the end
    rows: dict = {}

    def row(s):
        r = rows.get(s)
        if r is None:
            r = rows[s] = V[s].tolist()
        return r

    returns = []
    for _ in range(cfg.episodes):
        s = env.reset(rng)
        taus = rng.random(horizon).tolist()
        picks = rng.random(horizon).tolist()
        total = 0.0
        for k in range(horizon):
            acts = env.allowed(s)
            q = row(s)
            if taus[k] < eps:
                a = acts[int(picks[k] * len(acts))]
            else:
                a = _argmax(q, acts)
            r, s_next, terminal = env.step(a)
            total += r
            target = r if terminal else r + gamma * max(row(s_next))
            q[a] += alpha * (target - q[a])
            if terminal or s_next is None:
                break
            s = s_next
        returns.append(total)
    for s, r in rows.items():
        V[s] = r
    return Q, Q.greedy_policy(), returns


def trajectory_return(rewards: Sequence[float]) -> float:
    """Undiscounted sum of per-location rates."""
    return float(math.fsum(rewards))


def value_iteration_oracle(P: np.ndarray, R: np.ndarray, gamma: float, tol: float = 1e-12,
                           max_iter: int = 100_000, terminal: Optional[np.ndarray] = None) -> np.ndarray:
    """Bellman-optimality iteration on an explicit MDP.

    ``P[s, a, s']`` transition probabilities, ``R[s, a]`` expected rewards.
    States flagged in ``terminal`` have value zero. Raises RuntimeError when
    the sup-norm change stays above ``tol`` after ``max_iter`` sweeps.
    """
    P = np.asarray(P, dtype=float)
    R = np.asarray(R, dtype=float)
    nS, nA = R.shape
    if P.shape != (nS, nA, nS):
        raise ValueError(f"P has shape {P.shape}, expected {(nS, nA, nS)}")
    term = np.zeros(nS, bool) if terminal is None else np.asarray(terminal, bool)
    Q = np.zeros((nS, nA))
    for _ in range(max_iter):
        V = np.where(term, 0.0, Q.max(axis=1))
        Q_new = R + gamma * P @ V
        if np.max(np.abs(Q_new - Q)) < tol:
            return Q_new
        Q = Q_new
    raise RuntimeError(f"value iteration did not converge within {max_iter} sweeps (gamma={gamma})")


class TabularMDPEnv:
    """Episodic wrapper around an explicit (P, R) MDP, used to test ``train``."""

    def __init__(self, P, R, horizon: int, start_state: Optional[int] = None):
        self.P = np.asarray(P, dtype=float)
        self.R = np.asarray(R, dtype=float)
        self.nS, self.nA = self.R.shape
        self._horizon = horizon
        self.start_state = start_state
        self.state_shape = (self.nS,)
        self.n_actions = self.nA
        self._cdf = np.cumsum(self.P, axis=2)
        self._acts = list(range(self.nA))

    @property
    def horizon(self) -> int:
        return self._horizon

    def reset(self, rng):
        self._rng = rng
        self._s = int(rng.integers(self.nS)) if self.start_state is None else self.start_state
        return (self._s,)

    def allowed(self, s):
        return self._acts

    def step(self, a):
        s = self._s
        nxt = int(np.searchsorted(self._cdf[s, a], self._rng.random(), side="right"))
        self._s = min(nxt, self.nS - 1)
        return float(self.R[s, a]), (self._s,), False
