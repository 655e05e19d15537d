"""Selective local relabeling: pick the riskiest states of the curated
dataset and optimize short corrective action chunks with the
cross-entropy method under a full-episode success check.

A corrective chunk is only emitted when its full continuation (chunk
followed by the original plan's remainder) re-validates as a success, so
every stored target is simulation-verified supervision.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .curator import TubeBounds, state_distances
from .envs import Environment, Trajectory, rollout_with_resume

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RelabelPoint:
    trajectory_id: int
    t: int
    risk: float


@dataclass
class RelabelTarget:
    """Validated corrective supervision: observation at the risky state
    and the optimized H-step action chunk."""

    observation: np.ndarray
    chunk: np.ndarray          # (H, d_a)
    point: RelabelPoint
    cost: float


@dataclass(frozen=True)
class CemConfig:
    population: int = 64
    elite_frac: float = 0.125
    iterations: int = 30
    init_std: float = 0.0075   # 0.25 x the default action range
    w_fail: float = 1e3
    w_tube: float = 10.0
    w_ref: float = 1.0
    horizon: int = 15
    std_floor: float = 1e-6

    def __post_init__(self):
        if self.population < 1 or not 0.0 < self.elite_frac <= 1.0:
            raise ValueError("population and elite fraction inconsistent")
        if self.n_elites < 1:
            raise ValueError("need at least one elite")
        if min(self.w_fail, self.w_tube, self.w_ref) < 0:
            raise ValueError("cost weights must be non-negative")

    @property
    def n_elites(self) -> int:
        return max(1, int(round(self.population * self.elite_frac)))


def select_risky_states(curated: Sequence[Trajectory], expert_states,
                        psi: Callable, scales, k_rel: int, min_sep: int,
                        horizon_h: int) -> List[RelabelPoint]:
    """Globally top-k_rel states by distance-to-expert, greedy in
    descending risk, enforcing a minimum temporal separation within each
    trajectory.  Timesteps are clipped so a full H-step prefix fits."""
    if k_rel < 0 or min_sep < 1:
        raise ValueError("need k_rel >= 0 and min_sep >= 1")
    if k_rel == 0:
        return []
    expert_list = _per_trajectory(expert_states, len(curated))
    candidates = []
    for i, traj in enumerate(curated):
        t_hi = traj.horizon - horizon_h
        if t_hi < 0:
            continue
        d = state_distances(traj.states, expert_list[i], psi, scales)
        for t in range(len(d)):
            candidates.append((float(d[t]), i, min(t, t_hi)))
    # descending risk; deterministic tie-break by trajectory then timestep
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    chosen: List[RelabelPoint] = []
    taken: dict = {}
    for risk, i, t in candidates:
        if len(chosen) == k_rel:
            break
        slots = taken.setdefault(i, [])
        if any(abs(t - s) < min_sep for s in slots):
            continue
        slots.append(t)
        chosen.append(RelabelPoint(trajectory_id=i, t=t, risk=risk))
    return chosen


def _per_trajectory(expert_states, n: int) -> list:
    if isinstance(expert_states, (list, tuple)) and len(expert_states) == n \
            and all(np.asarray(e).ndim == 2 for e in expert_states):
        return list(expert_states)
    return [expert_states] * n


def relabel_cost(u: np.ndarray, traj: Trajectory, t: int, tube: TubeBounds,
                 env: Environment, cfg: CemConfig, expert_states) -> float:
    """J = w_fail [continuation fails] + w_tube sum relu(d - r_max)^2 over
    the corrected span + w_ref ||u - u_ref||^2."""
    u = np.asarray(u, dtype=float).reshape(cfg.horizon, env.action_dim)
    u_ref = traj.actions[t:t + cfg.horizon]
    j = cfg.w_ref * float(np.sum((u - u_ref) ** 2))
    if cfg.w_fail > 0 or cfg.w_tube > 0:
        cont = rollout_with_resume(env, traj.states[t], u,
                                   traj.actions[t + cfg.horizon:], traj.env_params)
        if cfg.w_fail > 0 and not cont.success:
            j += cfg.w_fail
        if cfg.w_tube > 0:
            d = state_distances(cont.states[1:cfg.horizon + 1], expert_states,
                                env.psi, env.psi_scales)
            j += cfg.w_tube * float(np.sum(np.maximum(d - tube.r_max, 0.0) ** 2))
    return j


def _continuation_success(u, traj, t, env, cfg) -> bool:
    cont = rollout_with_resume(env, traj.states[t], u,
                               traj.actions[t + cfg.horizon:], traj.env_params)
    return cont.success


def cem_optimize(point: RelabelPoint, traj: Trajectory, env: Environment,
                 tube: TubeBounds, cfg: CemConfig, rng: np.random.Generator,
                 expert_states) -> Optional[RelabelTarget]:
    """Cross-entropy search for a corrective chunk around the reference
    segment.  Keeps the best candidate ever seen; emits a target only if
    its full continuation succeeds."""
    t = point.t
    if t < 0 or t + cfg.horizon > traj.horizon:
        raise ValueError("relabel point does not leave room for a full chunk")
    dim = cfg.horizon * env.action_dim
    mean = traj.actions[t:t + cfg.horizon].reshape(-1).copy()
    std = np.full(dim, cfg.init_std)

    best_u = mean.copy()
    best_cost = relabel_cost(best_u, traj, t, tube, env, cfg, expert_states)
    for _ in range(cfg.iterations):
        pop = mean + std * rng.standard_normal((cfg.population, dim))
        pop[0] = mean  # keep the current mean in the population
        costs = np.array([relabel_cost(u, traj, t, tube, env, cfg, expert_states)
                          for u in pop])
        order = np.argsort(costs, kind="stable")
        if costs[order[0]] < best_cost:
            best_cost = float(costs[order[0]])
            best_u = pop[order[0]].copy()
        elites = pop[order[:cfg.n_elites]]
        mean = elites.mean(axis=0)
        std = np.maximum(elites.std(axis=0), cfg.std_floor)

    if not _continuation_success(best_u, traj, t, env, cfg):
        log.info("relabel point (traj %d, t %d) found no successful correction",
                 point.trajectory_id, t)
        return None
    obs = env.observe(traj.states[t], traj.states[0])
    return RelabelTarget(observation=obs,
                         chunk=best_u.reshape(cfg.horizon, env.action_dim),
                         point=point, cost=best_cost)


def relabel_dataset(curated: Sequence[Trajectory], env: Environment,
                    tube: Union[TubeBounds, Sequence[TubeBounds]], cfg: CemConfig,
                    rng: np.random.Generator, expert_states,
                    k_rel: int = 10, min_sep: Optional[int] = None) -> List[RelabelTarget]:
    """Select the riskiest states across the curated set and optimize a
    corrective chunk at each; failed points are dropped with a logged
    diagnostic.  Outputs are ordered by selection rank."""
    if len(curated) == 0:
        raise ValueError("curated set must be non-empty")
    if min_sep is None:
        min_sep = cfg.horizon
    expert_list = _per_trajectory(expert_states, len(curated))
    tubes = list(tube) if isinstance(tube, (list, tuple)) else [tube] * len(curated)
    points = select_risky_states(curated, expert_list, env.psi, env.psi_scales,
                                 k_rel, min_sep, cfg.horizon)
    seeds = rng.spawn(len(points)) if points else []
    targets = []
    for point, sub_rng in zip(points, seeds):
        traj = curated[point.trajectory_id]
        target = cem_optimize(point, traj, env, tubes[point.trajectory_id], cfg,
                              sub_rng, expert_list[point.trajectory_id])
        if target is not None:
            targets.append(target)
    return targets
