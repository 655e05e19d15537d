"""Control-point plan parameterization and the diagonal-Gaussian sampler.

A nominal plan is M control points in action space, expanded to a full
T-step action sequence by piecewise-linear interpolation on a uniform
knot grid.  The proposal over the flattened control-point vector is a
diagonal Gaussian that the curator refits between iterations.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .envs import Environment, EnvParams, Trajectory, rollout
from .geometry import Pose


def interp_matrix(horizon: int, m_points: int) -> np.ndarray:
    """(T, M) matrix W with decode(C) = W @ C: piecewise-linear
    interpolation of M knots placed at t_j = j (T-1)/(M-1)."""
    if m_points < 2:
        raise ValueError("need at least 2 control points")
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    times = np.arange(horizon, dtype=float)
    knots = np.linspace(0.0, horizon - 1.0, m_points)
    idx = np.clip(np.searchsorted(knots, times, side="right") - 1, 0, m_points - 2)
    w = (times - knots[idx]) / (knots[idx + 1] - knots[idx])
    mat = np.zeros((horizon, m_points))
    rows = np.arange(horizon)
    mat[rows, idx] = 1.0 - w
    mat[rows, idx + 1] += w
    return mat


def decode(control_points: np.ndarray, horizon: int) -> np.ndarray:
    """Expand an (M, d_a) control-point matrix into (T, d_a) actions."""
    control_points = np.asarray(control_points, dtype=float)
    if control_points.ndim != 2 or control_points.shape[0] < 2:
        raise ValueError("control_points must be (M >= 2, d_a)")
    return interp_matrix(horizon, control_points.shape[0]) @ control_points


def fit_control_points(demo_actions: np.ndarray, m_points: int) -> np.ndarray:
    """Least-squares control points minimizing the decode error to a
    demonstrated action sequence."""
    demo_actions = np.asarray(demo_actions, dtype=float)
    if demo_actions.ndim != 2:
        raise ValueError("demo_actions must be (T, d_a)")
    if len(demo_actions) < m_points:
        raise ValueError("demo must be at least as long as the number of control points")
    w = interp_matrix(len(demo_actions), m_points)
    c, *_ = np.linalg.lstsq(w, demo_actions, rcond=None)
    return c


@dataclass(frozen=True)
class Proposal:
    """Diagonal Gaussian over the flattened control-point vector."""

    mean: np.ndarray           # (M * d_a,)
    std: np.ndarray            # (M * d_a,), elementwise >= sqrt(variance_floor)
    m_points: int
    action_dim: int
    iteration: int = 0
    stalled: bool = False

    def reshape(self, c: np.ndarray) -> np.ndarray:
        return np.asarray(c).reshape(self.m_points, self.action_dim)


@dataclass
class SuccessBatch:
    """Successful rollouts of one iteration, each with its generating
    control-point vector."""

    members: List[Tuple[Trajectory, np.ndarray]]
    n_sampled: int

    def __len__(self) -> int:
        return len(self.members)

    @property
    def trajectories(self) -> List[Trajectory]:
        return [t for t, _ in self.members]

    @property
    def control_points(self) -> List[np.ndarray]:
        return [c for _, c in self.members]


def init_proposal(demo_actions: np.ndarray, m_points: int, sigma0,
                  variance_floor: float = 1e-3) -> Proposal:
    """Proposal centered on the least-squares control-point fit of the
    demo, with spread sigma0 (scalar broadcast or per-dimension), floored
    at sqrt(variance_floor)."""
    sigma0 = np.asarray(sigma0, dtype=float)
    if np.any(sigma0 < 0):
        raise ValueError("sigma0 must be non-negative")
    c = fit_control_points(demo_actions, m_points)
    mean = c.reshape(-1)
    std = np.maximum(np.broadcast_to(sigma0, mean.shape), np.sqrt(variance_floor)).copy()
    return Proposal(mean=mean, std=std, m_points=m_points,
                    action_dim=c.shape[1], iteration=0)


def sample_batch(q: Proposal, n: int, rng: np.random.Generator) -> List[np.ndarray]:
    """n independent draws c = mu + sigma * z, returned as flat vectors."""
    if n < 1:
        raise ValueError("n must be >= 1")
    z = rng.standard_normal((n, q.mean.size))
    return list(q.mean + q.std * z)


def generate_success_batch(env: Environment, variant: Pose, q: Proposal, n: int,
                           rng: np.random.Generator, variant_index: int = 0) -> SuccessBatch:
    """Sample n plans, roll each out under freshly randomized per-episode
    physical parameters, and keep only the successful trajectories."""
    draws = sample_batch(q, n, rng)
    members = []
    for c in draws:
        params = env.sample_env_params(rng)
        s0 = env.reset(variant, params)
        actions = decode(q.reshape(c), env.horizon)
        traj = rollout(env, s0, actions, params, origin=c, variant=variant_index)
        if traj.success:
            members.append((traj, c))
    return SuccessBatch(members=members, n_sampled=n)


def widen(q: Proposal, factor: float) -> Proposal:
    return replace(q, std=q.std * factor)
