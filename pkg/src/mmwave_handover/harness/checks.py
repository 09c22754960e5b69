"""Fast oracle checks behind ``mmwave-handover validate``."""

from __future__ import annotations

import math

import numpy as np

from mmwave_handover.channel import RadioConfig, pathloss_db, rate_bps
from mmwave_handover.environment import los_probability
from mmwave_handover.handover import HandoverConfig, SnrLogTable, step_ci
from mmwave_handover.learning import LearningConfig, TabularMDPEnv, train, value_iteration_oracle
from mmwave_handover.rng import stream
from mmwave_handover.skeleton import (
    PathSkeleton,
    SkeletonDatabase,
    SkeletonPath,
    beam_search,
    db_store,
    db_tick,
    golden_section_max,
    make_codebook,
)


def check_handover_example():
    state = SnrLogTable([None, 2, 2, None], [math.inf, 1, 2, math.inf])
    probe = {0: 1, 3: 1}.__getitem__
    nxt, rec, _ = step_ci(state, 0, 3, probe, HandoverConfig.two_level(40.0))
    return nxt == 1 and rec.handover_executed, f"next serving BS index {nxt} (expected 1)"


def check_beam_search(n: int = 200):
    rng = stream(0, 0, "validate-beams")
    F, W = make_codebook(8, 8), make_codebook(4, 4)
    vis_f, vis_w = visible(F), visible(W)
    worst = 0.0
    for _ in range(n):
        P = max(int(rng.poisson(1.8)), 1)
        b = rng.choice(vis_f, size=P)
        a = rng.choice(vis_w, size=P)
        h = (rng.normal(size=P) + 1j * rng.normal(size=P)) * 10 ** rng.uniform(-3, 0, P)
        H = sum(h[p] * W.codewords[:, a[p]][:, None] * F.codewords[:, b[p]].conj()[None, :] for p in range(P))
        H = H * math.sqrt(len(F.codewords) * len(W.codewords))  # array responses, not unit codewords
        paths = []
        for p in range(P):
            th_f, ph_f = angles_for(F.u[b[p]], F.v[b[p]])
            th_w, ph_w = angles_for(W.u[a[p]], W.v[a[p]])
            paths.append(SkeletonPath((th_f, ph_f), (th_w, ph_w), abs(h[p])))
        g_all = beam_search(H, F, W)[2]
        g_ps = beam_search(H, F, W, PathSkeleton(tuple(paths)))[2]
        worst = max(worst, abs(g_all - g_ps) / g_all)
    return worst < 1e-10, f"max relative gap {worst:.2e} over {n} channels"


def angles_for(u: float, v: float):
    """(azimuth, elevation) with spatial frequencies (u, v); needs u^2 + v^2 <= 1."""
    s = math.hypot(u, v)
    if s > 1.0 + 1e-12:
        raise ValueError("(u, v) outside the visible region")
    theta, phi = math.asin(min(s, 1.0)), math.atan2(v, u)
    if phi > math.pi / 2:
        theta, phi = -theta, phi - math.pi
    elif phi < -math.pi / 2:
        theta, phi = -theta, phi + math.pi
    return theta, phi


def visible(cb) -> np.ndarray:
    return np.flatnonzero(cb.u**2 + cb.v**2 <= 1.0 + 1e-12)


def check_formulas():
    cfg = RadioConfig()
    ok = los_probability(27.0) == 1.0 and los_probability(5.0) == 1.0
    p71 = float(los_probability(71.0))
    x = math.exp(-1.0)
    ok &= abs(p71 - ((27 / 71) * (1 - x) + x) ** 2) < 1e-12
    fs = 20 * math.log10(4 * math.pi * cfg.d0 / cfg.wavelength)
    ok &= abs(pathloss_db(cfg.d0, True, cfg) - fs) < 1e-9
    ok &= rate_bps(1.0, 500e6) == 5e8
    return bool(ok), f"p_LoS(71)={p71:.4f}, FSPL(d0)={fs:.3f} dB"


def check_golden_section():
    x, _, _ = golden_section_max(lambda t: -(t - 3.0) ** 2, 0.0, 10.0, 1e-6)
    return abs(x - 3.0) < 1e-4, f"argmax {x:.6f}"


def check_database():
    db = SkeletonDatabase(T_aging=2)
    db_store(db, 7, PathSkeleton())
    db_tick(db)
    db_tick(db)
    before = 7 in db.normal
    db_tick(db)
    return before and 7 in db.watch and 7 not in db.normal, "entry migrates after T_Aging ticks"


def check_q_learning():
    P, R = _chain_mdp()
    Qs = value_iteration_oracle(P, R, 0.9)
    env = TabularMDPEnv(P, R, horizon=1)
    Q, _, _ = train(env, LearningConfig(alpha=0.1, gamma=0.9, epsilon=1.0, episodes=60_000), stream(0, 0, "validate-q"))
    err = float(np.max(np.abs(Q.values - Qs)))
    return err < 1e-3, f"sup-norm error {err:.2e}"


def _chain_mdp():
    """Deterministic 5-state, 3-action MDP."""
    nS, nA = 5, 3
    P = np.zeros((nS, nA, nS))
    R = np.zeros((nS, nA))
    for s in range(nS):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, s] = 1.0
        P[s, 2, min(s + 1, nS - 1)] = 1.0
        R[s] = [0.1 * s, 0.2, 1.0 if s == nS - 1 else 0.0]
    return P, R


CHECKS = [
    ("handover example", check_handover_example),
    ("beam search restricted == exhaustive", check_beam_search),
    ("formula suite", check_formulas),
    ("golden-section surrogate", check_golden_section),
    ("database aging", check_database),
    ("Q-learning vs value iteration", check_q_learning),
]


def run_checks():
    for name, fn in CHECKS:
        try:
            ok, detail = fn()
        except Exception as exc:  # report, keep going
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        yield name, bool(ok), detail
