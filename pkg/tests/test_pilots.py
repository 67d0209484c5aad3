import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lischan.channel import LisState, draw_channels, reflect_vector
from lischan.config import ScenarioConfig, db_to_ratio
from lischan.pilots import (
    corrupt_pilots,
    make_pilots,
    phase1_receive,
    phase2_element_receive,
    phase2_joint_receive,
    simulate_pilots,
)

CFG = ScenarioConfig(M=4, L=3, K=2)


@pytest.fixture
def ch():
    return draw_channels(CFG, np.random.default_rng(0))


def test_make_pilots_examples():
    p = make_pilots(4, 4)
    np.testing.assert_allclose(p.X @ p.X.conj().T, 4 * np.eye(4), atol=1e-12)
    np.testing.assert_allclose(np.abs(p.X), 1.0)
    with pytest.raises(ValueError):
        make_pilots(4, 3)
    p = make_pilots(2, 2, 2)
    assert p.X_bar.shape == (4, 4)
    np.testing.assert_allclose(p.X_bar @ p.X_bar.conj().T, 4 * np.eye(4), atol=1e-12)
    assert make_pilots(2, 2).X_bar is None


@given(st.integers(1, 12), st.integers(0, 8), st.floats(0.1, 10))
def test_pilot_rows_orthogonal(M, extra, power):
    P = M + extra
    p = make_pilots(M, P, 2, power)
    np.testing.assert_allclose(p.X @ p.X.conj().T, power * P * np.eye(M), atol=1e-9 * P * power)
    np.testing.assert_allclose(np.abs(p.X) ** 2, power)
    n = 2 * M
    np.testing.assert_allclose(p.X_bar @ p.X_bar.conj().T, power * n * np.eye(n), atol=1e-9 * n * power)


def test_make_pilots_deterministic():
    assert np.array_equal(make_pilots(5, 7, 2).X, make_pilots(5, 7, 2).X)


# corruption -------------------------------------------------------------------


def test_corrupt_infinite_snr_is_identity():
    p = make_pilots(4, 4, 2)
    assert corrupt_pilots(p, math.inf, np.random.default_rng(0)) is p
    assert not p.is_corrupted


def test_corrupt_zero_db_gives_unit_variance():
    assert 1.0 / db_to_ratio(0.0) == 1.0
    p = make_pilots(100, 100, 1)
    q = corrupt_pilots(p, 0.0, np.random.default_rng(1))
    d = (q.X - q.X_clean).ravel()
    assert abs(np.mean(np.abs(d) ** 2) - 1.0) < 0.05
    assert q.is_corrupted
    assert q.X_clean is p.X


@pytest.mark.parametrize("snr, convention, expected", [(20, "amplitude", 0.1), (20, "power", 0.01), (10, "power", 0.1)])
def test_corruption_variance_matches_convention(snr, convention, expected):
    p = make_pilots(100, 100, 2)
    q = corrupt_pilots(p, snr, np.random.default_rng(2), convention)
    var = np.mean(np.abs(q.X - q.X_clean) ** 2)
    assert abs(var / expected - 1) < 0.05
    var_bar = np.mean(np.abs(q.X_bar - q.X_bar_clean) ** 2)
    assert abs(var_bar / expected - 1) < 0.05


def test_corruption_rejects_nonfinite():
    with pytest.raises(ValueError):
        corrupt_pilots(make_pilots(2, 2), -math.inf, np.random.default_rng(0))


# received signals ---------------------------------------------------------------


def test_phase1_noiseless(ch):
    p = make_pilots(4, 4, 3)
    y = phase1_receive(ch, LisState.all_off(3), p, 0.0, np.random.default_rng(0))
    np.testing.assert_allclose(y, ch.h_direct.conj() @ p.X, atol=1e-12)


def test_phase1_leakage(ch):
    p = make_pilots(4, 4, 3)
    eps0 = 0.01
    phi = np.array([0.0, 1.0, 2.0])
    lis = LisState(beta=np.full(3, eps0), phi=phi, eps_off=eps0)
    y = phase1_receive(ch, lis, p, 0.0, np.random.default_rng(0))
    leak = np.stack([eps0 * (ch.G_cascaded[k] @ np.exp(1j * phi)) for k in range(2)])
    np.testing.assert_allclose(y - ch.h_direct.conj() @ p.X, leak.conj() @ p.X, atol=1e-12)


def test_phase1_requires_off_state(ch):
    with pytest.raises(ValueError):
        phase1_receive(ch, LisState.all_on(3), make_pilots(4, 4), 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        phase1_receive(ch, LisState.all_off(3), make_pilots(5, 5), 0.0, np.random.default_rng(0))


def test_phase1_noise_variance():
    cfg = ScenarioConfig(M=1, L=1, K=1)
    c = draw_channels(cfg, np.random.default_rng(0))
    p = make_pilots(1, 10_000)
    y = phase1_receive(c, LisState.all_off(1), p, 1.0, np.random.default_rng(4))
    n = y - c.h_direct.conj() @ p.X
    assert abs(np.var(n) - 1.0) < 0.05


def test_phase2_element_examples(ch):
    p = make_pilots(4, 4, 3)
    rng = np.random.default_rng(0)
    for l in range(3):
        y = phase2_element_receive(ch, l, p, 0.0, 0.0, 0.0, rng)
        expected = (ch.h_direct + ch.G_cascaded[:, :, l]).conj() @ p.X
        np.testing.assert_allclose(y, expected, atol=1e-12)
    y = phase2_element_receive(ch, 1, p, 0.0, 0.1, 0.0, rng)
    np.testing.assert_allclose(y, (ch.h_direct + 0.9 * ch.G_cascaded[:, :, 1]).conj() @ p.X, atol=1e-12)
    y = phase2_element_receive(ch, 1, p, 0.0, 0.0, 0.001, rng)
    leak = 0.001 * (ch.G_cascaded[:, :, 0] + ch.G_cascaded[:, :, 2])
    np.testing.assert_allclose(y, (ch.h_direct + ch.G_cascaded[:, :, 1] + leak).conj() @ p.X, atol=1e-12)
    with pytest.raises(IndexError):
        phase2_element_receive(ch, 3, p, 0.0, 0.0, 0.0, rng)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=20, deadline=None)
def test_phase2_minus_phase1_isolates_column(seed):
    c = draw_channels(CFG, np.random.default_rng(seed))
    p = make_pilots(4, 6, 3)
    y1 = phase1_receive(c, LisState.all_off(3), p, 0.0, np.random.default_rng(0))
    for l in range(3):
        y2 = phase2_element_receive(c, l, p, 0.0, 0.0, 0.0, np.random.default_rng(0))
        np.testing.assert_allclose(y2 - y1, c.G_cascaded[:, :, l].conj() @ p.X, atol=1e-12)


def test_receive_does_not_touch_channels(ch):
    before = {n: getattr(ch, n).copy() for n in ("h_direct", "G_cascaded", "H_bs_lis", "h_lis_user")}
    p = make_pilots(4, 4, 3)
    rng = np.random.default_rng(0)
    phase1_receive(ch, LisState.all_on(3, eps_on=0.2), p, 0.1, rng, require_off=False)
    phase1_receive(ch, LisState.all_off(3), p, 0.1, rng)
    simulate_pilots(ch, p, 0.1, rng, 0.01, 0.01)
    for n, arr in before.items():
        assert np.array_equal(getattr(ch, n), arr)


def test_joint_receive(ch):
    p = make_pilots(4, 4, 3)
    y = phase2_joint_receive(ch, p, 0.0, 0.0, np.random.default_rng(0))
    assert y.shape == (2, 12)
    for k in range(2):
        stacked = np.tile(ch.h_direct[k], 3) + ch.G_cascaded[k].ravel(order="F")
        np.testing.assert_allclose(y[k], stacked.conj() @ p.X_bar, atol=1e-12)
    y = phase2_joint_receive(ch, p, 0.0, 0.1, np.random.default_rng(0))
    stacked = np.tile(ch.h_direct[0], 3) + 0.9 * ch.G_cascaded[0].ravel(order="F")
    np.testing.assert_allclose(y[0], stacked.conj() @ p.X_bar, atol=1e-12)
    with pytest.raises(ValueError):
        phase2_joint_receive(ch, make_pilots(4, 4), 0.0, 0.0, np.random.default_rng(0))


def test_joint_degenerates_to_single_element_when_L_is_one():
    cfg = ScenarioConfig(M=4, L=1, K=2)
    c = draw_channels(cfg, np.random.default_rng(3))
    p = make_pilots(4, 4, 1)
    yj = phase2_joint_receive(c, p, 0.0, 0.0, np.random.default_rng(0))
    ye = phase2_element_receive(c, 0, p, 0.0, 0.0, 0.0, np.random.default_rng(0))
    np.testing.assert_allclose(yj, ye, atol=1e-12)  # X_bar equals X for L = 1, P = M


def test_simulate_is_deterministic_and_shaped(ch):
    p = make_pilots(4, 5, 3)
    a = simulate_pilots(ch, p, 0.1, np.random.default_rng(9), snr_db=10)
    b = simulate_pilots(ch, p, 0.1, np.random.default_rng(9), snr_db=10)
    assert a.y_direct.shape == (2, 5)
    assert a.y_cascaded_cols.shape == (2, 3, 5)
    assert a.y_cascaded_joint.shape == (2, 12)
    for name in ("y_direct", "y_cascaded_cols", "y_cascaded_joint"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_per_element_noise_is_fresh(ch):
    p = make_pilots(4, 4, 3)
    rx = simulate_pilots(ch, p, 1.0, np.random.default_rng(0), joint=False)
    n0 = rx.y_cascaded_cols[:, 0] - (ch.h_direct + ch.G_cascaded[:, :, 0]).conj() @ p.X
    n1 = rx.y_cascaded_cols[:, 1] - (ch.h_direct + ch.G_cascaded[:, :, 1]).conj() @ p.X
    assert not np.allclose(n0, n1)
    assert reflect_vector(LisState.all_off(3)).sum() == 0
