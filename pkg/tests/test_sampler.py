"""Control-point decoder and the diagonal-Gaussian proposal sampler."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from recovergen.envs import PointReach, augmented_demo_actions
from recovergen.geometry import Pose
from recovergen.sampler import (Proposal, decode, fit_control_points,
                                generate_success_batch, init_proposal,
                                interp_matrix, sample_batch, widen)


# ---------------------------------------------------------------------------
# decoder


def test_decode_identity_when_m_equals_horizon():
    rng = np.random.default_rng(0)
    c = rng.standard_normal((7, 3))
    assert np.allclose(decode(c, 7), c, atol=1e-12)


def test_decode_linear_interpolation_endpoints():
    c = np.array([[0.0], [1.0]])
    assert np.allclose(decode(c, 3), [[0.0], [0.5], [1.0]], atol=1e-12)


def test_decode_exact_at_knots():
    rng = np.random.default_rng(1)
    horizon, m = 21, 5
    c = rng.standard_normal((m, 2))
    out = decode(c, horizon)
    knots = np.linspace(0, horizon - 1, m)
    for j, t in enumerate(knots):
        assert np.allclose(out[int(round(t))], c[j], atol=1e-12)


def test_decode_rejects_single_control_point():
    with pytest.raises(ValueError):
        decode(np.zeros((1, 2)), 5)


@given(st.integers(0, 2 ** 32 - 1), st.integers(2, 8), st.integers(8, 30))
@settings(max_examples=50, deadline=None)
def test_decode_is_linear_in_control_points(seed, m, horizon):
    rng = np.random.default_rng(seed)
    c1 = rng.standard_normal((m, 2))
    c2 = rng.standard_normal((m, 2))
    a, b = rng.standard_normal(2)
    assert np.allclose(decode(a * c1 + b * c2, horizon),
                       a * decode(c1, horizon) + b * decode(c2, horizon),
                       atol=1e-12)


def test_interp_matrix_rows_sum_to_one():
    w = interp_matrix(17, 5)
    assert np.allclose(w.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(w >= 0.0)


# ---------------------------------------------------------------------------
# least-squares fit


def test_fit_recovers_piecewise_linear_demo():
    rng = np.random.default_rng(2)
    horizon, m = 25, 7
    c_true = rng.standard_normal((m, 3))
    demo = decode(c_true, horizon)
    c_fit = fit_control_points(demo, m)
    assert np.allclose(c_fit, c_true, atol=1e-9)
    assert np.allclose(decode(c_fit, horizon), demo, atol=1e-9)


def test_fit_constant_demo_gives_constant_points():
    demo = np.full((20, 2), 0.37)
    c = fit_control_points(demo, 6)
    assert np.allclose(c, 0.37, atol=1e-10)


def test_fit_identity_when_m_equals_horizon():
    rng = np.random.default_rng(3)
    demo = rng.standard_normal((12, 2))
    assert np.allclose(fit_control_points(demo, 12), demo, atol=1e-9)


def test_fit_rejects_short_demo():
    with pytest.raises(ValueError):
        fit_control_points(np.zeros((3, 2)), 5)


def test_fit_is_least_squares_optimal():
    # residual of the returned fit matches the lstsq residual of the
    # interpolation system
    rng = np.random.default_rng(4)
    demo = rng.standard_normal((30, 2))
    m = 6
    c = fit_control_points(demo, m)
    w = interp_matrix(30, m)
    # normal equations hold at the optimum: W^T (W c - demo) = 0
    assert np.allclose(w.T @ (w @ c - demo), 0.0, atol=1e-9)


# ---------------------------------------------------------------------------
# proposal initialization and sampling


def test_init_proposal_mean_is_fit():
    rng = np.random.default_rng(5)
    demo = rng.standard_normal((20, 2)) * 0.03
    q = init_proposal(demo, 6, sigma0=0.01, variance_floor=1e-8)
    assert np.allclose(q.mean, fit_control_points(demo, 6).reshape(-1))
    assert np.allclose(q.std, 0.01)
    assert q.iteration == 0 and not q.stalled


def test_init_proposal_floors_sigma():
    demo = np.zeros((20, 2))
    q = init_proposal(demo, 5, sigma0=0.0, variance_floor=1e-3)
    assert np.allclose(q.std, np.sqrt(1e-3))


def test_init_proposal_broadcasts_scalar_sigma():
    demo = np.zeros((20, 3))
    q = init_proposal(demo, 4, sigma0=0.05, variance_floor=1e-8)
    assert q.std.shape == (12,)
    assert np.allclose(q.std, 0.05)


def test_init_proposal_rejects_negative_sigma():
    with pytest.raises(ValueError):
        init_proposal(np.zeros((20, 2)), 5, sigma0=-0.1)


def test_sample_batch_deterministic_and_shaped():
    q = Proposal(mean=np.zeros(8), std=np.ones(8), m_points=4, action_dim=2)
    a = sample_batch(q, 5, np.random.default_rng(0))
    b = sample_batch(q, 5, np.random.default_rng(0))
    assert len(a) == 5 and all(x.shape == (8,) for x in a)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_sample_batch_mean_converges():
    mu = np.array([1.0, -2.0, 0.5])
    q = Proposal(mean=mu, std=np.full(3, 0.2), m_points=3, action_dim=1)
    n = 10_000
    draws = np.array(sample_batch(q, n, np.random.default_rng(6)))
    assert np.all(np.abs(draws.mean(axis=0) - mu) < 4.0 * 0.2 / np.sqrt(n))


def test_sample_batch_rejects_empty():
    q = Proposal(mean=np.zeros(2), std=np.ones(2), m_points=2, action_dim=1)
    with pytest.raises(ValueError):
        sample_batch(q, 0, np.random.default_rng(0))


def test_widen_scales_std_only():
    q = Proposal(mean=np.ones(4), std=np.full(4, 0.1), m_points=2, action_dim=2)
    q2 = widen(q, 1.5)
    assert np.allclose(q2.std, 0.15)
    assert np.array_equal(q2.mean, q.mean)


# ---------------------------------------------------------------------------
# success filtering


def _reach_proposal(env, sigma0, floor=1e-10):
    demo = augmented_demo_actions(env, env.demo_object_pose(), l_blend=1)
    return init_proposal(demo, 6, sigma0=sigma0, variance_floor=floor)


def test_success_batch_near_replay_keeps_all():
    env = PointReach()
    q = _reach_proposal(env, sigma0=1e-5)
    batch = generate_success_batch(env, env.demo_object_pose(), q, 10,
                                   np.random.default_rng(0))
    assert len(batch) == 10
    assert batch.n_sampled == 10


def test_success_batch_guaranteed_failure_is_empty():
    env = PointReach()
    q = _reach_proposal(env, sigma0=1e-5)
    far = Pose.from_xy_yaw(10.0, 10.0, 0.0)  # unreachable goal
    batch = generate_success_batch(env, far, q, 10, np.random.default_rng(0))
    assert len(batch) == 0
    assert batch.n_sampled == 10


def test_success_batch_members_revalidate():
    env = PointReach()
    q = _reach_proposal(env, sigma0=0.003)
    batch = generate_success_batch(env, env.demo_object_pose(), q, 30,
                                   np.random.default_rng(1))
    assert 0 < len(batch) <= 30
    for traj, c in batch.members:
        assert traj.success
        assert env.success(traj)  # re-evaluation agrees
        assert c.shape == (12,)


def test_success_batch_deterministic():
    env = PointReach()
    q = _reach_proposal(env, sigma0=0.02)
    a = generate_success_batch(env, env.demo_object_pose(), q, 20,
                               np.random.default_rng(2))
    b = generate_success_batch(env, env.demo_object_pose(), q, 20,
                               np.random.default_rng(2))
    assert len(a) == len(b)
    for (ta, ca), (tb, cb) in zip(a.members, b.members):
        assert np.array_equal(ta.states, tb.states)
        assert np.array_equal(ca, cb)
