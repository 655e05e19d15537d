"""Deterministic toy simulators and the rollout machinery.

Two desk-scale environments are provided:

* ``PlanarBlockRotate`` -- two position-controlled effectors rotate a
  rectangular block in the plane under a quasi-static contact model with
  friction-dependent slip.  This is the environment the pipeline targets.
* ``PointReach`` -- a single point mass with position-target actions and a
  terminal goal ball; an analytic fixture used mainly by the tests.

Both environments are immutable descriptions; ``step`` is a pure function
of (state, action, env_params), so rollouts are reproducible bit-for-bit.

Caveat on the contact model: when fewer than two effectors touch the
block, the block simply does not move.  This "block freezes" rule is a
deliberate stand-in for full rigid-body contact resolution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import Pose, PoseSequence, blend_prefix, reanchor_trajectory


@dataclass(frozen=True)
class EnvParams:
    """Per-episode randomized physical parameters."""

    mass: float = 1.0
    friction_scale: float = 1.0


@dataclass
class Trajectory:
    """Full-episode rollout: T+1 states, T actions, a success flag, and
    the provenance needed to re-derive it deterministically."""

    states: np.ndarray        # (T+1, d_s)
    actions: np.ndarray       # (T, d_a)
    success: bool
    env_params: EnvParams
    origin: Optional[np.ndarray] = None   # flattened control-point vector
    variant: int = 0

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.actions = np.asarray(self.actions, dtype=float)
        if len(self.states) != len(self.actions) + 1:
            raise ValueError("need len(states) == len(actions) + 1")

    @property
    def horizon(self) -> int:
        return len(self.actions)


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    out = math.fmod(theta + math.pi, 2.0 * math.pi)
    if out <= 0.0:
        out += 2.0 * math.pi
    return out - math.pi


def success_rotate(traj: Trajectory, theta_des: float, eps_theta: float,
                   theta_index: int = 2) -> bool:
    """Final-step absolute angular error (branch-cut wrapped) strictly below
    eps_theta."""
    theta_t = float(traj.states[-1][theta_index])
    return abs(wrap_angle(theta_t - theta_des)) < eps_theta


def randomize_env_params(mass_range, friction_range, rng: np.random.Generator) -> EnvParams:
    """Uniform per-episode draw of mass and friction scale."""
    return EnvParams(
        mass=float(rng.uniform(mass_range[0], mass_range[1])),
        friction_scale=float(rng.uniform(friction_range[0], friction_range[1])),
    )


class Environment:
    """Abstract deterministic-simulator contract.

    Subclasses define the dynamics ``step``, the binary success predicate,
    the observation map, and a scripted demonstration expressed as
    effector pose sequences so the spatial-randomization machinery can
    re-anchor it.
    """

    name: str = "abstract"
    horizon: int
    state_dim: int
    action_dim: int
    a_max: float
    psi_scales: np.ndarray      # normalization of the task subspace
    mass_range: tuple = (1.0, 1.0)
    friction_range: tuple = (1.0, 1.0)

    # -- dynamics ---------------------------------------------------------
    def reset(self, variant: Pose, params: EnvParams) -> np.ndarray:
        raise NotImplementedError

    def step(self, state: np.ndarray, action: np.ndarray, params: EnvParams) -> np.ndarray:
        raise NotImplementedError

    def success(self, traj: Trajectory) -> bool:
        raise NotImplementedError

    def psi(self, states: np.ndarray) -> np.ndarray:
        """Task-relevant subspace of one state (d_s,) or a batch (n, d_s)."""
        raise NotImplementedError

    def observe(self, state: np.ndarray, start_state: np.ndarray) -> np.ndarray:
        """Full state concatenated with the episode-start state."""
        return np.concatenate([np.asarray(state, float), np.asarray(start_state, float)])

    def sample_env_params(self, rng: np.random.Generator) -> EnvParams:
        return randomize_env_params(self.mass_range, self.friction_range, rng)

    def nominal_env_params(self) -> EnvParams:
        return EnvParams(mass=0.5 * (self.mass_range[0] + self.mass_range[1]),
                         friction_scale=0.5 * (self.friction_range[0] + self.friction_range[1]))

    # -- scripted demonstration -------------------------------------------
    def demo_object_pose(self) -> Pose:
        raise NotImplementedError

    def demo_ee_poses(self, n_poses: int) -> list:
        """Per-effector world pose sequences of the scripted demo (each of
        length n_poses) under the nominal object pose."""
        raise NotImplementedError

    def reset_ee_poses(self) -> list:
        """Effector poses right after environment reset."""
        raise NotImplementedError

    def ee_poses_to_actions(self, pose_seqs: list) -> np.ndarray:
        """Convert per-effector pose sequences (length T+1 each) into the
        environment's action sequence (T, d_a)."""
        raise NotImplementedError


def rollout(env: Environment, s0: np.ndarray, actions: np.ndarray,
            params: EnvParams, origin: Optional[np.ndarray] = None,
            variant: int = 0) -> Trajectory:
    """Execute a full-episode open-loop plan and evaluate success."""
    actions = np.asarray(actions, dtype=float)
    if actions.shape != (env.horizon, env.action_dim):
        raise ValueError(
            f"expected actions of shape ({env.horizon}, {env.action_dim}), got {actions.shape}")
    states = np.empty((env.horizon + 1, env.state_dim))
    states[0] = s0
    s = np.asarray(s0, dtype=float)
    for t in range(env.horizon):
        s = env.step(s, actions[t], params)
        states[t + 1] = s
    traj = Trajectory(states=states, actions=actions.copy(), success=False,
                      env_params=params, origin=origin, variant=variant)
    traj.success = bool(env.success(traj))
    return traj


def rollout_with_resume(env: Environment, s_t: np.ndarray, prefix: np.ndarray,
                        reference_suffix: np.ndarray, params: EnvParams) -> Trajectory:
    """Apply a corrective prefix from s_t, then resume the reference plan;
    success is evaluated on the full continuation."""
    prefix = np.asarray(prefix, dtype=float).reshape(-1, env.action_dim)
    suffix = np.asarray(reference_suffix, dtype=float).reshape(-1, env.action_dim)
    n = len(prefix) + len(suffix)
    if n < 1 or n > env.horizon:
        raise ValueError("prefix plus suffix must cover a positive span within the horizon")
    actions = np.concatenate([prefix, suffix], axis=0)
    states = np.empty((n + 1, env.state_dim))
    states[0] = s_t
    s = np.asarray(s_t, dtype=float)
    for t in range(n):
        s = env.step(s, actions[t], params)
        states[t + 1] = s
    traj = Trajectory(states=states, actions=actions, success=False, env_params=params)
    traj.success = bool(env.success(traj))
    return traj


def _rect_distance(px: float, py: float, hx: float, hy: float) -> float:
    """Distance from a point (block frame) to the solid rectangle."""
    dx = abs(px) - hx
    dy = abs(py) - hy
    if dx <= 0.0 and dy <= 0.0:
        return 0.0
    dx = max(dx, 0.0)
    dy = max(dy, 0.0)
    return math.hypot(dx, dy)


@dataclass(frozen=True)
class PlanarBlockRotate(Environment):
    """Quasi-static planar block rotation with two effectors.

    State (7): block pose (x, y, theta), left effector (x, y), right
    effector (x, y).  Action (4): per-step target displacements of both
    effectors, clamped to +-a_max.

    Each step, effectors move by the clamped displacement.  If both
    effectors were within contact_margin of the block boundary at the
    start of the step, the block follows the least-squares rigid planar
    transform fitted to the two effector motions, attenuated by a
    friction-dependent slip factor slip = clamp(friction_scale, 0, 1).
    Otherwise the block does not move.  Low friction therefore yields
    partial following, which is what makes open-loop spatial replay fail
    under friction randomization.
    """

    horizon: int = 60
    a_max: float = 0.03
    contact_margin: float = 0.02
    half_extents: tuple = (0.10, 0.06)
    theta_des: float = math.pi / 2.0
    eps_theta: float = 0.1
    mass_range: tuple = (0.5, 3.0)
    friction_range: tuple = (0.8, 1.2)
    reset_left: tuple = (-0.25, 0.0)
    reset_right: tuple = (0.25, 0.0)
    grasp_press: float = 0.02    # demo grasp depth inside the block faces

    name: str = "planar_block_rotate"
    state_dim: int = 7
    action_dim: int = 4

    @property
    def psi_scales(self) -> np.ndarray:
        # positions in ~0.1 m units, angle in ~0.5 rad units
        return np.array([0.1, 0.1, 0.5, 0.1, 0.1, 0.1, 0.1])

    def reset(self, variant: Pose, params: EnvParams) -> np.ndarray:
        bx, by, _ = variant.translation
        bth = variant.yaw()
        return np.array([bx, by, bth,
                         self.reset_left[0], self.reset_left[1],
                         self.reset_right[0], self.reset_right[1]])

    def _in_contact(self, ex, ey, bx, by, bth):
        c = math.cos(-bth)
        s = math.sin(-bth)
        dx = ex - bx
        dy = ey - by
        px = c * dx - s * dy
        py = s * dx + c * dy
        return _rect_distance(px, py, self.half_extents[0], self.half_extents[1]) \
            <= self.contact_margin

    def step(self, state, action, params: EnvParams):
        bx, by, bth, lx, ly, rx, ry = (float(v) for v in state)
        a = action
        amax = self.a_max
        dlx = min(max(float(a[0]), -amax), amax)
        dly = min(max(float(a[1]), -amax), amax)
        drx = min(max(float(a[2]), -amax), amax)
        dry = min(max(float(a[3]), -amax), amax)
        nlx, nly = lx + dlx, ly + dly
        nrx, nry = rx + drx, ry + dry

        if self._in_contact(lx, ly, bx, by, bth) and self._in_contact(rx, ry, bx, by, bth):
            # two-point rigid planar fit: old (l, r) -> new (l, r)
            cox = 0.5 * (lx + rx)
            coy = 0.5 * (ly + ry)
            cnx = 0.5 * (nlx + nrx)
            cny = 0.5 * (nly + nry)
            ux, uy = rx - lx, ry - ly
            vx, vy = nrx - nlx, nry - nly
            dth = math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)
            slip = min(max(params.friction_scale, 0.0), 1.0)
            sth = slip * dth
            c = math.cos(sth)
            s = math.sin(sth)
            # rotate block about the old effector centroid, translate by the
            # slip-scaled centroid motion
            relx, rely = bx - cox, by - coy
            bx = c * relx - s * rely + cox + slip * (cnx - cox)
            by = s * relx + c * rely + coy + slip * (cny - coy)
            bth = wrap_angle(bth + sth)

        return np.array([bx, by, bth, nlx, nly, nrx, nry])

    def success(self, traj: Trajectory) -> bool:
        return success_rotate(traj, self.theta_des, self.eps_theta, theta_index=2)

    def psi(self, states):
        return np.asarray(states, dtype=float)

    def demo_object_pose(self) -> Pose:
        return Pose.identity()

    def demo_ee_poses(self, n_poses: int) -> list:
        """Grab the block slightly inside its short faces (a pressing
        grasp, so contact survives small execution noise), then rotate
        both effectors about the block center up to theta_des."""
        r = self.half_extents[0] - self.grasp_press
        left, right = [], []
        for j in range(n_poses):
            phi = self.theta_des * j / (n_poses - 1)
            c, s = math.cos(phi), math.sin(phi)
            left.append(Pose.from_xy_yaw(-c * r, -s * r, 0.0))
            right.append(Pose.from_xy_yaw(c * r, s * r, 0.0))
        return [left, right]

    def reset_ee_poses(self) -> list:
        return [Pose.from_xy_yaw(self.reset_left[0], self.reset_left[1], 0.0),
                Pose.from_xy_yaw(self.reset_right[0], self.reset_right[1], 0.0)]

    def ee_poses_to_actions(self, pose_seqs: list) -> np.ndarray:
        left, right = pose_seqs
        if len(left) != self.horizon + 1 or len(right) != self.horizon + 1:
            raise ValueError("pose sequences must have horizon + 1 poses")
        lpts = np.array([p.translation[:2] for p in left])
        rpts = np.array([p.translation[:2] for p in right])
        return np.concatenate([np.diff(lpts, axis=0), np.diff(rpts, axis=0)], axis=1)


@dataclass(frozen=True)
class PointReach(Environment):
    """Single point mass with position-target actions.

    State (4): position (x, y) plus the episode goal (gx, gy), kept in the
    state so success is a pure function of the trajectory.  Action (2):
    per-step displacement clamped to +-a_max.  Success: terminal position
    within eps_p of the goal.
    """

    horizon: int = 30
    a_max: float = 0.05
    eps_p: float = 0.02
    goal: tuple = (0.25, 0.15)
    start: tuple = (0.0, 0.0)

    name: str = "point_reach"
    state_dim: int = 4
    action_dim: int = 2

    @property
    def psi_scales(self) -> np.ndarray:
        return np.array([0.1, 0.1])

    def reset(self, variant: Pose, params: EnvParams) -> np.ndarray:
        gx, gy, _ = variant.translation
        return np.array([self.start[0], self.start[1], gx, gy])

    def step(self, state, action, params: EnvParams):
        x, y, gx, gy = (float(v) for v in state)
        amax = self.a_max
        dx = min(max(float(action[0]), -amax), amax)
        dy = min(max(float(action[1]), -amax), amax)
        return np.array([x + dx, y + dy, gx, gy])

    def success(self, traj: Trajectory) -> bool:
        x, y, gx, gy = traj.states[-1]
        return math.hypot(x - gx, y - gy) < self.eps_p

    def psi(self, states):
        states = np.asarray(states, dtype=float)
        return states[..., :2]

    def demo_object_pose(self) -> Pose:
        return Pose.from_xy_yaw(self.goal[0], self.goal[1], 0.0)

    def demo_ee_poses(self, n_poses: int) -> list:
        sx, sy = self.start
        gx, gy = self.goal
        seq = []
        for j in range(n_poses):
            alpha = (j + 1) / n_poses
            seq.append(Pose.from_xy_yaw(sx + alpha * (gx - sx), sy + alpha * (gy - sy), 0.0))
        return [seq]

    def reset_ee_poses(self) -> list:
        return [Pose.from_xy_yaw(self.start[0], self.start[1], 0.0)]

    def ee_poses_to_actions(self, pose_seqs: list) -> np.ndarray:
        (seq,) = pose_seqs
        if len(seq) != self.horizon + 1:
            raise ValueError("pose sequence must have horizon + 1 poses")
        pts = np.array([p.translation[:2] for p in seq])
        return np.diff(pts, axis=0)


def make_env(name: str, **overrides) -> Environment:
    envs = {"planar_block_rotate": PlanarBlockRotate, "point_reach": PointReach}
    if name not in envs:
        raise ValueError(f"unknown environment '{name}' (have {sorted(envs)})")
    return envs[name](**overrides)


def augmented_demo_actions(env: Environment, variant: Pose, l_blend: int) -> np.ndarray:
    """Re-anchor the scripted demo to a perturbed initial object pose,
    prepend the blend segment from the reset effector poses, and convert
    to the environment's action sequence."""
    n_demo = env.horizon + 1 - l_blend
    if n_demo < 2:
        raise ValueError("l_blend leaves too few demo poses")
    demo_obj0 = env.demo_object_pose()
    resets = env.reset_ee_poses()
    full = []
    for reset_pose, seq in zip(resets, env.demo_ee_poses(n_demo)):
        re_anchored = reanchor_trajectory(seq, demo_obj0, variant)
        prefix = blend_prefix(reset_pose, re_anchored[0], l_blend)
        full.append(prefix[:-1] + re_anchored)
    return env.ee_poses_to_actions(full)
