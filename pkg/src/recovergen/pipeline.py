"""End-to-end orchestration: spatial variants, the iterative
sample / score / select / update loop, global relabeling, and export, plus
the spatial-only baseline and the open-loop replay evaluation harness.

Everything is deterministic given the master seed: variant poses and all
per-variant randomness come from pre-spawned seed substreams, and
variant results are merged in variant order, so the output is identical
for any degree of parallelism.
"""
from __future__ import annotations

import dataclasses
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from . import curator as cur
from . import sampler as smp
from .config import PipelineConfig, config_parameters
from .curator import TubeBounds, TubeUnavailableError
from .dataset_io import (DatasetManifest, DatasetRecord, dataset_stats,
                         export_pairs, load_trajectories, serialize, _atomic_write)
from .envs import (Environment, Trajectory, augmented_demo_actions, make_env,
                   rollout)
from .geometry import Pose, compose, sample_object_perturbation
from .relabel import CemConfig, RelabelTarget, relabel_dataset

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """Raised when no variant produces any usable data."""


@dataclass
class IterationStats:
    variant: int
    iteration: int
    n_sampled: int
    n_success: int
    n_selected: int
    r_min: float
    r_max: float
    sigma_mean: float
    stalled: bool = False


@dataclass
class VariantResult:
    index: int
    pose: Pose
    curated: List[Trajectory] = field(default_factory=list)
    expert_states: Optional[np.ndarray] = None
    final_tube: Optional[TubeBounds] = None
    stats: List[IterationStats] = field(default_factory=list)
    n_generated: int = 0
    n_successful: int = 0
    skipped: bool = False


@dataclass
class RunReport:
    seed: int
    variants: List[VariantResult]
    n_records: int = 0
    n_relabeled: int = 0
    wall_time_s: float = 0.0

    @property
    def totals(self) -> Dict[str, int]:
        return {
            "generated": sum(v.n_generated for v in self.variants),
            "successful": sum(v.n_successful for v in self.variants),
            "selected": sum(len(v.curated) for v in self.variants),
        }


def _build_env(cfg: PipelineConfig) -> Environment:
    return make_env(cfg.env, **cfg.env_overrides)


def _default_sigma0(env: Environment, configured: float) -> float:
    return configured if configured > 0 else 0.05 * (2.0 * env.a_max)


def _cem_config(env: Environment, cfg: PipelineConfig) -> CemConfig:
    rc = cfg.relabel
    init_std = rc.init_std if rc.init_std > 0 else 0.25 * (2.0 * env.a_max)
    return CemConfig(population=rc.population, elite_frac=rc.elite_frac,
                     iterations=rc.cem_iterations, init_std=init_std,
                     w_fail=rc.w_fail, w_tube=rc.w_tube, w_ref=rc.w_ref,
                     horizon=rc.horizon)


def sample_variant_poses(env: Environment, cfg: PipelineConfig,
                         rng: np.random.Generator) -> List[Pose]:
    base = env.demo_object_pose()
    return [compose(sample_object_perturbation(cfg.trans_range, cfg.yaw_range, rng), base)
            for _ in range(cfg.n_variants)]


def run_variant(env: Environment, cfg: PipelineConfig, index: int, pose: Pose,
                seed_seq: np.random.SeedSequence) -> VariantResult:
    """One variant's full generation loop: K iterations of
    sample -> filter -> tube -> score -> embed -> select -> refit."""
    rng = np.random.default_rng(seed_seq)
    result = VariantResult(index=index, pose=pose)

    demo_actions = augmented_demo_actions(env, pose, cfg.l_blend)
    nominal = env.nominal_env_params()
    expert = rollout(env, env.reset(pose, nominal), demo_actions, nominal)
    result.expert_states = expert.states

    q = smp.init_proposal(demo_actions, cfg.sampler.m_points,
                          _default_sigma0(env, cfg.sampler.sigma0),
                          cfg.sampler.variance_floor)
    tube: Optional[TubeBounds] = None
    for k in range(cfg.iterations):
        batch = smp.generate_success_batch(env, pose, q, cfg.samples, rng, index)
        result.n_generated += batch.n_sampled
        if tube is None and len(batch) < cur.MIN_SUCCESSES_FOR_TUBE:
            # first-iteration starvation: widen once and resample
            q = smp.widen(q, 1.5)
            batch = smp.generate_success_batch(env, pose, q, cfg.samples, rng, index)
            result.n_generated += batch.n_sampled
            if len(batch) < cur.MIN_SUCCESSES_FOR_TUBE:
                log.warning("variant %d: starved of successes, skipping", index)
                result.skipped = True
                return result
        result.n_successful += len(batch)

        peaks = [cur.peak_deviation(t, expert.states, env.psi, env.psi_scales)
                 for t in batch.trajectories]
        tube = cur.compute_tube(peaks, cfg.curator.q_min, cfg.curator.q_max,
                                previous=tube, iteration=k)

        if len(batch) == 0:
            q = dataclasses.replace(q, stalled=True)
            result.stats.append(IterationStats(index, k, batch.n_sampled, 0, 0,
                                               tube.r_min, tube.r_max,
                                               float(q.std.mean()), stalled=True))
            continue

        rewards = [cur.tube_reward(t, tube, expert.states, env.psi, env.psi_scales)
                   for t in batch.trajectories]
        embeddings = [cur.dct_embed(t, env.psi, env.psi_scales, env.horizon,
                                    cfg.curator.k_dct)
                      for t in batch.trajectories]
        sigma_rbf = (cfg.curator.sigma_rbf if cfg.curator.sigma_rbf > 0
                     else cur.median_pairwise_distance(embeddings))
        kernel = cur.build_kernel(embeddings, sigma_rbf)
        m = max(1, math.ceil(cfg.curator.m_fraction * len(batch)))
        selected = cur.dpp_select_greedy(kernel, m, cfg.curator.eps_dpp)

        sel_c = [batch.control_points[i] for i in selected]
        sel_w = cur.reward_to_weight([rewards[i] for i in selected],
                                     cfg.curator.temperature)
        q = cur.update_proposal(q, sel_c, sel_w, cfg.curator.eps_stab,
                                cfg.curator.delta)
        result.curated.extend(batch.trajectories[i] for i in selected)
        result.stats.append(IterationStats(index, k, batch.n_sampled, len(batch),
                                           len(selected), tube.r_min, tube.r_max,
                                           float(q.std.mean()), stalled=q.stalled))
    result.final_tube = tube
    return result


def _variant_task(args) -> VariantResult:
    env, cfg, index, pose, seed_seq = args
    return run_variant(env, cfg, index, pose, seed_seq)


def _run_variants(env: Environment, cfg: PipelineConfig,
                  poses: List[Pose], seeds) -> List[VariantResult]:
    tasks = [(env, cfg, i, pose, seed) for i, (pose, seed) in enumerate(zip(poses, seeds))]
    if cfg.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(tasks))) as pool:
            return list(pool.map(_variant_task, tasks))
    return [_variant_task(t) for t in tasks]


def _manifest(cfg: PipelineConfig, env: Environment, source: str) -> DatasetManifest:
    env_config = {f.name: (list(v) if isinstance(v := getattr(env, f.name), tuple) else v)
                  for f in dataclasses.fields(env)}
    return DatasetManifest(env_name=env.name, env_config=env_config, seed=cfg.seed,
                           source=source, iterations=cfg.iterations,
                           samples_per_iteration=cfg.samples,
                           n_variants=cfg.n_variants,
                           parameters=config_parameters(cfg))


def _write_report(out_dir: str, report: RunReport) -> None:
    import json
    import os
    rows = []
    text = [f"seed: {report.seed}"]
    for v in report.variants:
        if v.skipped:
            text.append(f"variant {v.index}: skipped (starved of successes)")
        for s in v.stats:
            rows.append(dataclasses.asdict(s))
            text.append(
                f"variant {s.variant} iter {s.iteration}: "
                f"success {s.n_success}/{s.n_sampled}, selected {s.n_selected}, "
                f"tube [{s.r_min:.4f}, {s.r_max:.4f}], sigma {s.sigma_mean:.5f}"
                + (" (stalled)" if s.stalled else ""))
    totals = report.totals
    text.append(f"totals: generated {totals['generated']}, "
                f"successful {totals['successful']}, selected {totals['selected']}, "
                f"relabeled {report.n_relabeled}, records {report.n_records}")
    _atomic_write(os.path.join(out_dir, "report.txt"), "\n".join(text) + "\n")
    _atomic_write(os.path.join(out_dir, "report.jsonl"),
                  "".join(json.dumps(r) + "\n" for r in rows))


def run_pgdg(cfg: PipelineConfig) -> Tuple[List[DatasetRecord], RunReport]:
    """Full closed-loop generation run; writes the dataset to cfg.out_dir."""
    t0 = time.perf_counter()
    cfg.validate()
    env = _build_env(cfg)
    root = np.random.SeedSequence(cfg.seed)
    seeds = root.spawn(cfg.n_variants + 2)
    poses = sample_variant_poses(env, cfg, np.random.default_rng(seeds[0]))
    variants = _run_variants(env, cfg, poses, seeds[1:1 + cfg.n_variants])

    active = [v for v in variants if not v.skipped and v.curated]
    if not active:
        raise PipelineError("all variants starved of successful rollouts")

    curated: List[Trajectory] = []
    experts: List[np.ndarray] = []
    tubes: List[TubeBounds] = []
    for v in active:
        for traj in v.curated:
            curated.append(traj)
            experts.append(v.expert_states)
            tubes.append(v.final_tube)

    relabel_rng = np.random.default_rng(seeds[-1])
    cem = _cem_config(env, cfg)
    min_sep = cfg.relabel.min_sep if cfg.relabel.min_sep > 0 else cem.horizon
    targets = relabel_dataset(curated, env, tubes, cem, relabel_rng, experts,
                              k_rel=cfg.relabel.k_rel, min_sep=min_sep)

    records = export_pairs(curated, targets, cfg.chunk_len, observe=env.observe)
    manifest = _manifest(cfg, env, "generate")
    manifest.n_generated = sum(v.n_generated for v in variants)
    manifest.n_successful = sum(v.n_successful for v in variants)
    manifest.n_selected = len(curated)
    manifest.n_relabeled = len(targets)
    manifest.final_tubes = [(v.final_tube.r_min, v.final_tube.r_max) for v in active]
    serialize(records, manifest, cfg.out_dir, trajectories=curated)

    report = RunReport(seed=cfg.seed, variants=variants, n_records=len(records),
                       n_relabeled=len(targets))
    _write_report(cfg.out_dir, report)
    report.wall_time_s = time.perf_counter() - t0
    return records, report


def run_spatial_only(cfg: PipelineConfig) -> Tuple[List[DatasetRecord], RunReport]:
    """Spatial-randomization-only baseline: re-anchor + blend the demo per
    variant, roll it out once under randomized physical parameters, and
    export every rollout (no filtering, no curation)."""
    t0 = time.perf_counter()
    cfg.validate()
    env = _build_env(cfg)
    root = np.random.SeedSequence(cfg.seed)
    seeds = root.spawn(cfg.n_variants + 2)
    poses = sample_variant_poses(env, cfg, np.random.default_rng(seeds[0]))

    variants = []
    rollouts: List[Trajectory] = []
    for i, (pose, seed) in enumerate(zip(poses, seeds[1:1 + cfg.n_variants])):
        rng = np.random.default_rng(seed)
        params = env.sample_env_params(rng)
        actions = augmented_demo_actions(env, pose, cfg.l_blend)
        traj = rollout(env, env.reset(pose, params), actions, params, variant=i)
        rollouts.append(traj)
        vr = VariantResult(index=i, pose=pose, curated=[traj],
                           n_generated=1, n_successful=int(traj.success))
        variants.append(vr)

    records = export_pairs(rollouts, [], cfg.chunk_len, observe=env.observe)
    manifest = _manifest(cfg, env, "baseline")
    manifest.n_generated = len(rollouts)
    manifest.n_successful = sum(t.success for t in rollouts)
    manifest.n_selected = manifest.n_successful
    serialize(records, manifest, cfg.out_dir, trajectories=rollouts)

    report = RunReport(seed=cfg.seed, variants=variants, n_records=len(records))
    _write_report(cfg.out_dir, report)
    report.wall_time_s = time.perf_counter() - t0
    return records, report


def _binomial_ci(successes: int, trials: int) -> Tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    p = successes / trials
    half = 1.96 * math.sqrt(max(p * (1.0 - p), 0.0) / trials)
    return (max(0.0, p - half), min(1.0, p + half))


def evaluate_replay(dataset_dir: str, n_trials: int, seed: int = 0) -> Dict:
    """Open-loop replay of a dataset's stored nominal plans.

    Reports the success rate under the exact stored per-episode physical
    parameters and under fresh randomized parameters (n_trials draws,
    cycling through the stored trajectories), with 95% binomial CIs.
    """
    from .dataset_io import _parse_manifest
    import os
    manifest = _parse_manifest(os.path.join(dataset_dir, "manifest"))
    env_config = {k: (tuple(v) if isinstance(v, list) else v)
                  for k, v in manifest.env_config.items() if k != "name"}
    env = make_env(manifest.env_name, **env_config)
    trajs = load_trajectories(dataset_dir)
    if not trajs:
        raise PipelineError(f"{dataset_dir}: no trajectories to replay")

    stored_ok = 0
    for traj in trajs:
        replay = rollout(env, traj.states[0], traj.actions, traj.env_params)
        stored_ok += int(replay.success)

    rng = np.random.default_rng(seed)
    fresh_ok = 0
    for i in range(n_trials):
        traj = trajs[i % len(trajs)]
        params = env.sample_env_params(rng)
        replay = rollout(env, traj.states[0], traj.actions, params)
        fresh_ok += int(replay.success)

    return {
        "dataset": dataset_dir,
        "source": manifest.source,
        "n_trajectories": len(trajs),
        "stored_success_rate": stored_ok / len(trajs),
        "fresh_trials": n_trials,
        "fresh_success_rate": fresh_ok / n_trials if n_trials else 0.0,
        "fresh_ci95": _binomial_ci(fresh_ok, n_trials),
    }


def compare_replay(pgdg_dir: str, baseline_dir: str, n_trials: int,
                   seed: int = 0) -> Dict:
    """Replay comparison between a curated dataset and the spatial-only
    baseline; the gap is curated stored-parameter success minus the
    baseline's fresh-parameter success."""
    ours = evaluate_replay(pgdg_dir, n_trials, seed)
    base = evaluate_replay(baseline_dir, n_trials, seed)
    return {
        "curated": ours,
        "baseline": base,
        "gap": ours["stored_success_rate"] - base["fresh_success_rate"],
    }
