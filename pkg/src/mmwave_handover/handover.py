"""Per-CI probing of serving and backup BSs, SNR logging and the handover-execution rule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

INF = math.inf


@dataclass(frozen=True)
class HandoverConfig:
    """SNR quantisation and handover trigger settings.

    Levels run 1..L; a BS is acceptable when its level is strictly above
    ``T_HO``. ``boundaries`` are the L-1 dB cut points.
    """

    T_HO: int = 1
    L: int = 2
    boundaries: tuple[float, ...] = (40.0,)
    trigger_window: int = 1
    max_log_age: Optional[int] = None

    def __post_init__(self):
        if len(self.boundaries) != self.L - 1:
            raise ValueError(f"need {self.L - 1} boundaries for L={self.L}, got {len(self.boundaries)}")
        if any(b2 <= b1 for b1, b2 in zip(self.boundaries, self.boundaries[1:])):
            raise ValueError("boundaries must be strictly increasing")
        if not 0 <= self.T_HO <= self.L:
            raise ValueError("T_HO must be a level in [0, L]")
        if self.trigger_window < 1:
            raise ValueError("trigger_window must be >= 1")

    @classmethod
    def two_level(cls, t_ho_db: float = 40.0, **kw) -> "HandoverConfig":
        return cls(T_HO=1, L=2, boundaries=(float(t_ho_db),), **kw)

    @classmethod
    def uniform(cls, L: int, snr_min_db: float, snr_max_db: float, T_HO: int, **kw) -> "HandoverConfig":
        step = (snr_max_db - snr_min_db) / L
        b = tuple(snr_min_db + step * k for k in range(1, L))
        return cls(T_HO=T_HO, L=L, boundaries=b, **kw)


def quantize_snr(snr_db: float, cfg: HandoverConfig) -> int:
    """Level 1 + number of boundaries at or below ``snr_db`` (a tie goes up)."""
    return 1 + sum(1 for b in cfg.boundaries if snr_db >= b)


@dataclass
class SnrLogTable:
    levels: list  # per BS: last quantized level, or None if never probed
    t_log: list  # per BS: CIs since the last probe, inf if never probed
    below_streak: int = 0

    @classmethod
    def fresh(cls, n_bs: int) -> "SnrLogTable":
        return cls([None] * n_bs, [INF] * n_bs)

    def record(self, j: int, level: int) -> None:
        self.levels[j] = level
        self.t_log[j] = 0

    def copy(self) -> "SnrLogTable":
        return SnrLogTable(list(self.levels), list(self.t_log), self.below_streak)


@dataclass
class CiRecord:
    ci_index: int
    location_index: int
    serving: int
    backup: Optional[int]
    serving_level: int
    backup_level: Optional[int]
    next_serving: int
    handover_executed: bool
    radio_link_failure: bool = False
    levels: Sequence = field(default_factory=tuple)

    CSV_HEADER = "ci,location,serving,backup,serving_level,backup_level,next_serving,handover,rlf"

    def csv_row(self) -> str:
        backup = "" if self.backup is None else self.backup
        blevel = "" if self.backup_level is None else self.backup_level
        return (
            f"{self.ci_index},{self.location_index},{self.serving},{backup},{self.serving_level},"
            f"{blevel},{self.next_serving},{int(self.handover_executed)},{int(self.radio_link_failure)}"
        )


def tick_log(state: SnrLogTable) -> SnrLogTable:
    """Age every log entry by one CI (inf stays inf)."""
    t = state.t_log
    for j in range(len(t)):
        t[j] += 1
    return state


def freshest_acceptable(state: SnrLogTable, T_HO: int, max_age=None) -> Optional[int]:
    """argmin t_Log over logged BSs with level > T_HO; lowest index on ties."""
    best, best_age = None, INF
    for j, (lvl, age) in enumerate(zip(state.levels, state.t_log)):
        if lvl is None or lvl <= T_HO:
            continue
        if max_age is not None and age > max_age:
            continue
        if best is None or age < best_age:
            best, best_age = j, age
    return best


def strongest_logged(state: SnrLogTable) -> Optional[int]:
    """Highest logged level, freshest on ties, then lowest index."""
    best, key = None, None
    for j, (lvl, age) in enumerate(zip(state.levels, state.t_log)):
        if lvl is None:
            continue
        k = (-lvl, age)
        if key is None or k < key:
            best, key = j, k
    return best


def step_ci(
    state: SnrLogTable,
    serving: int,
    backup: Optional[int],
    probe_fn: Callable[[int], int],
    cfg: HandoverConfig,
    ci_index: int = 0,
    location_index: int = 0,
):
    """Run one coherence interval of the handover algorithm.

    Probes the serving BS (mini-slot S) and the backup (mini-slot B), then
    decides the serving BS for the next CI. Returns
    ``(next_serving, record, state)``; ``state`` is updated in place.
    A radio-link failure (no acceptable BS anywhere in the log) keeps the
    strongest logged BS and is flagged on the record.
    """
    T_HO = cfg.T_HO
    lvl_s = probe_fn(serving)
    state.record(serving, lvl_s)
    lvl_b = None
    if backup is not None and backup != serving:
        lvl_b = probe_fn(backup)
        state.record(backup, lvl_b)

    rlf = False
    nxt = serving
    if lvl_s > T_HO:
        state.below_streak = 0
    else:
        state.below_streak += 1
        if state.below_streak >= cfg.trigger_window:
            if lvl_b is not None and lvl_b > T_HO:
                nxt = backup
            else:
                cand = freshest_acceptable(state, T_HO, cfg.max_log_age)
                if cand is None:
                    rlf = True
                    cand = strongest_logged(state)
                nxt = serving if cand is None else cand
            if nxt != serving:
                state.below_streak = 0

    record = CiRecord(
        ci_index=ci_index,
        location_index=location_index,
        serving=serving,
        backup=backup,
        serving_level=lvl_s,
        backup_level=lvl_b,
        next_serving=nxt,
        handover_executed=nxt != serving,
        radio_link_failure=rlf,
        levels=tuple(state.levels),
    )
    tick_log(state)
    return nxt, record, state
