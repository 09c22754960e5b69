import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwave_handover.channel import (
    ArrayConfig,
    PathCluster,
    RadioConfig,
    array_response,
    channel_from_clusters,
    cluster_powers,
    generate_channel,
    pathloss_db,
    rate_bps,
    snr_linear,
)
from mmwave_handover.environment import BaseStation, LinkState
from mmwave_handover.errors import ShapeError
from mmwave_handover.rng import stream

angles = st.floats(min_value=-math.pi, max_value=math.pi)
elev = st.floats(min_value=-math.pi / 2, max_value=math.pi / 2)
dims = st.integers(min_value=1, max_value=6)


def explicit_channel(clusters, arrays):
    # element-by-element double sum, independent of the vectorised builder
    H = np.zeros((arrays.n_ue, arrays.n_bs), dtype=complex)
    for c in clusters:
        for r in range(c.R):
            u_ue = np.array([
                np.exp(1j * np.pi * (a * math.sin(c.aoa[r, 0]) * math.cos(c.aoa[r, 1])
                                     + b * math.sin(c.aoa[r, 0]) * math.sin(c.aoa[r, 1])))
                for a in range(arrays.ue_rows) for b in range(arrays.ue_cols)
            ])
            u_bs = np.array([
                np.exp(1j * np.pi * (a * math.sin(c.aod[r, 0]) * math.cos(c.aod[r, 1])
                                     + b * math.sin(c.aod[r, 0]) * math.sin(c.aod[r, 1])))
                for a in range(arrays.bs_rows) for b in range(arrays.bs_cols)
            ])
            H += c.gains[r] * np.outer(u_ue, u_bs.conj())
    return H / math.sqrt(clusters[0].R)


def test_array_response_broadside_is_all_ones():
    for phi in (0.0, 0.7, -1.2):
        assert np.allclose(array_response(0.0, phi, 3, 5), np.ones(15))
    assert np.allclose(array_response(1.1, 0.3, 1, 1), [1.0])


def test_array_response_endfire_pair():
    assert np.allclose(array_response(math.pi / 2, 0.0, 2, 1), [1.0, -1.0])


@given(angles, elev, dims, dims)
def test_array_response_unit_modulus(theta, phi, rows, cols):
    u = array_response(theta, phi, rows, cols)
    assert u.shape == (rows * cols,)
    assert np.allclose(np.abs(u), 1.0)
    assert np.vdot(u, u).real == pytest.approx(rows * cols)


def test_pathloss_reference_values():
    cfg = RadioConfig()
    oracle = 20 * math.log10(4 * math.pi / (299_792_458.0 / 28e9))
    assert pathloss_db(1.0, True, cfg) == pytest.approx(61.4, abs=0.05)
    assert abs(pathloss_db(1.0, True, cfg) - oracle) < 1e-9
    assert pathloss_db(10.0, True, cfg) == pytest.approx(oracle + 30.0, abs=1e-9)
    assert pathloss_db(10.0, False, cfg) == pytest.approx(oracle + 40.0, abs=1e-9)


def test_pathloss_domain_and_shadowing():
    cfg = RadioConfig()
    with pytest.raises(ValueError):
        pathloss_db(0.5, True, cfg)
    rng = stream(0, 0, "pl")
    draws = np.array([pathloss_db(10.0, False, cfg, rng) for _ in range(20_000)])
    base = pathloss_db(10.0, False, cfg)
    assert abs(draws.mean() - base) < 4 * 9.7 / math.sqrt(draws.size)
    assert draws.std() == pytest.approx(9.7, rel=0.03)


@given(st.floats(min_value=1.0, max_value=500.0), st.floats(min_value=1e-3, max_value=100.0))
def test_pathloss_increasing(d, step):
    cfg = RadioConfig()
    for los in (True, False):
        assert pathloss_db(d + step, los, cfg) > pathloss_db(d, los, cfg)


def test_channel_scalar_cases():
    arrays = ArrayConfig(1, 1, 1, 1)
    one = PathCluster(0, np.array([0.3 - 0.4j]), np.zeros((1, 2)), np.zeros((1, 2)))
    assert channel_from_clusters([one], arrays)[0, 0] == pytest.approx(0.3 - 0.4j)
    four = PathCluster(0, np.ones(4, complex), np.zeros((4, 2)), np.zeros((4, 2)))
    assert channel_from_clusters([four], arrays)[0, 0] == pytest.approx(2.0)


def _draw(seed, los=True, arrays=ArrayConfig()):
    rng = stream(seed, 0, "chan")
    link = LinkState(0, 0, los, 40.0)
    return generate_channel(BaseStation(0, (0.0, 0.0)), (30.0, 25.0), link, arrays, RadioConfig(), rng)


@pytest.mark.parametrize("seed", range(8))
def test_generate_channel_matches_explicit_sum(seed):
    arrays = ArrayConfig(2, 3, 2, 2)
    Hm, clusters = _draw(seed, los=bool(seed % 2), arrays=arrays)
    H = Hm.entries
    ref = explicit_channel(clusters, arrays)
    assert np.linalg.norm(H - ref) <= 1e-12 * np.linalg.norm(ref)


@pytest.mark.parametrize("seed", range(8))
def test_generate_channel_rank_bound(seed):
    Hm, clusters = _draw(seed, arrays=ArrayConfig(8, 8, 4, 4))
    assert Hm.shape == (16, 64)
    assert np.all(np.isfinite(Hm.entries))
    s = np.linalg.svd(Hm.entries, compute_uv=False)
    rank = int(np.sum(s > s[0] * 1e-10))
    assert rank <= sum(c.R for c in clusters)


def test_generate_channel_los_cluster_points_at_ue():
    _, clusters = _draw(3, los=True)
    assert clusters[0].los
    az, el = clusters[0].center_aod
    assert az == pytest.approx(math.atan2(25.0, 30.0))
    assert el < 0  # BS above the UE
    assert all(not c.los for c in clusters[1:])


def test_generate_channel_deterministic():
    a, ca = _draw(11)
    b, cb = _draw(11)
    assert np.array_equal(a.entries, b.entries)
    assert len(ca) == len(cb)


@given(st.integers(min_value=1, max_value=8), st.integers(min_value=0, max_value=2**31 - 1))
def test_cluster_powers_split(n, seed):
    p = cluster_powers(n, RadioConfig(), np.random.default_rng(seed))
    assert p.shape == (n,)
    assert np.all(p > 0) and math.isclose(p.sum(), 1.0, rel_tol=1e-12)
    assert np.all(np.diff(p) <= 0)


def test_snr_examples():
    cfg = RadioConfig()
    f = w = np.array([1.0 + 0j])
    assert snr_linear(np.zeros((1, 1)), f, w, cfg) == 0.0
    h = math.sqrt(cfg.noise_power)
    assert snr_linear(np.array([[h]]), f, w, cfg) == pytest.approx(1.0, rel=1e-12)
    H = np.array([[0.2 + 0.1j]])
    assert snr_linear(2 * H, f, w, cfg) == pytest.approx(4 * snr_linear(H, f, w, cfg), rel=1e-12)


def test_snr_noise_power_oracle():
    cfg = RadioConfig()
    # -174 dBm/Hz over 500 MHz, referred to 30 dBm transmit power
    expect_db = -174.0 + 10 * math.log10(500e6) - 30.0
    assert 10 * math.log10(cfg.noise_power) == pytest.approx(expect_db, abs=1e-9)


@settings(max_examples=50)
@given(st.floats(min_value=-math.pi, max_value=math.pi), st.floats(min_value=-math.pi, max_value=math.pi),
       st.integers(min_value=0, max_value=1000))
def test_snr_phase_invariance(a, b, seed):
    cfg = RadioConfig()
    rng = np.random.default_rng(seed)
    H = rng.normal(size=(4, 6)) + 1j * rng.normal(size=(4, 6))
    f = rng.normal(size=6) + 1j * rng.normal(size=6)
    w = rng.normal(size=4) + 1j * rng.normal(size=4)
    f /= np.linalg.norm(f)
    w /= np.linalg.norm(w)
    s0 = snr_linear(H, f, w, cfg)
    s1 = snr_linear(H, f * np.exp(1j * a), w * np.exp(1j * b), cfg)
    assert s1 == pytest.approx(s0, rel=1e-10)


def test_snr_shape_mismatch():
    with pytest.raises(ShapeError):
        snr_linear(np.zeros((4, 6)), np.ones(5), np.ones(4), RadioConfig())
    with pytest.raises(ShapeError):
        snr_linear(np.zeros((4, 6)), np.ones(6), np.ones(3), RadioConfig())


def test_rate_examples():
    assert rate_bps(0.0, 500e6) == 0.0
    assert rate_bps(1.0, 500e6) == 5e8
    assert rate_bps(3.0, 500e6) == 1e9
    with pytest.raises(ValueError):
        rate_bps(-0.1, 500e6)


@given(st.floats(min_value=0, max_value=1e9), st.floats(min_value=0, max_value=1e9))
def test_rate_monotone(a, b):
    lo, hi = sorted((a, b))
    assert rate_bps(lo, 500e6) <= rate_bps(hi, 500e6)
