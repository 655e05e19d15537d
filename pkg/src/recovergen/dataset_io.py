"""Dataset assembly and on-disk persistence.

Layout under the output directory:

* ``manifest``      -- plain-text ``key = value`` run metadata
* ``records``       -- line-delimited JSON, one supervision pair per line
* ``trajectories``  -- line-delimited JSON raw trajectory dump for
  replay/debugging

Numbers are written with shortest round-trip decimals, so a serialize /
deserialize round trip is bitwise lossless.  Files are written to a
temporary name and renamed, and the manifest pins the expected line
counts, so a truncated file is detected instead of yielding a partial
dataset.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .envs import EnvParams, Trajectory
from .relabel import RelabelTarget


class DatasetFormatError(ValueError):
    """Malformed or truncated dataset file."""


@dataclass
class DatasetRecord:
    """Timestep-level (observation, action-chunk) supervision pair."""

    observation: np.ndarray
    action_chunk: np.ndarray     # (k, d_a) for curated pairs, (H, d_a) for relabeled
    source: str                  # "curated" | "relabeled"
    trajectory_id: int
    t: int

    def __post_init__(self):
        if self.source not in ("curated", "relabeled"):
            raise ValueError(f"bad record source {self.source!r}")
        self.observation = np.asarray(self.observation, dtype=float)
        self.action_chunk = np.asarray(self.action_chunk, dtype=float)
        if self.action_chunk.size == 0:
            raise ValueError("action chunk must be non-empty")


@dataclass
class DatasetManifest:
    """Run metadata: environment constants, seeds, loop sizes, and the
    counts needed for the omission statistic."""

    env_name: str
    env_config: Dict[str, float] = field(default_factory=dict)
    seed: int = 0
    source: str = "generate"          # "generate" | "baseline"
    iterations: int = 0
    samples_per_iteration: int = 0
    n_variants: int = 0
    parameters: Dict[str, float] = field(default_factory=dict)
    n_generated: int = 0
    n_successful: int = 0
    n_selected: int = 0
    n_relabeled: int = 0
    n_records: int = 0
    n_trajectories: int = 0
    final_tubes: List[Tuple[float, float]] = field(default_factory=list)

    @property
    def omission_fraction(self) -> float:
        if self.n_successful == 0:
            return 0.0
        return 1.0 - self.n_selected / self.n_successful


def export_pairs(curated: Sequence[Trajectory], relabels: Sequence[RelabelTarget],
                 chunk_len: int, observe=None) -> List[DatasetRecord]:
    """One standard record per window start t in [0, T - k] per curated
    trajectory, plus one record per relabeled target."""
    if chunk_len < 1:
        raise ValueError("chunk_len must be >= 1")
    records = []
    for i, traj in enumerate(curated):
        if chunk_len > traj.horizon:
            raise ValueError("chunk length exceeds trajectory horizon")
        for t in range(traj.horizon - chunk_len + 1):
            obs = (observe(traj.states[t], traj.states[0]) if observe is not None
                   else np.concatenate([traj.states[t], traj.states[0]]))
            records.append(DatasetRecord(observation=obs,
                                         action_chunk=traj.actions[t:t + chunk_len],
                                         source="curated", trajectory_id=i, t=t))
    for target in relabels:
        records.append(DatasetRecord(observation=target.observation,
                                     action_chunk=target.chunk,
                                     source="relabeled",
                                     trajectory_id=target.point.trajectory_id,
                                     t=target.point.t))
    return records


# ---------------------------------------------------------------------------
# serialization


def _atomic_write(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _manifest_lines(manifest: DatasetManifest) -> str:
    lines = [
        f"env_name = {manifest.env_name}",
        f"seed = {manifest.seed}",
        f"source = {manifest.source}",
        f"iterations = {manifest.iterations}",
        f"samples_per_iteration = {manifest.samples_per_iteration}",
        f"n_variants = {manifest.n_variants}",
        f"n_generated = {manifest.n_generated}",
        f"n_successful = {manifest.n_successful}",
        f"n_selected = {manifest.n_selected}",
        f"n_relabeled = {manifest.n_relabeled}",
        f"n_records = {manifest.n_records}",
        f"n_trajectories = {manifest.n_trajectories}",
        f"env_config = {json.dumps(manifest.env_config, sort_keys=True)}",
        f"parameters = {json.dumps(manifest.parameters, sort_keys=True)}",
        f"final_tubes = {json.dumps(manifest.final_tubes)}",
    ]
    return "\n".join(lines) + "\n"


_INT_KEYS = {"seed", "iterations", "samples_per_iteration", "n_variants",
             "n_generated", "n_successful", "n_selected", "n_relabeled",
             "n_records", "n_trajectories"}
_JSON_KEYS = {"env_config", "parameters", "final_tubes"}


def _parse_manifest(path: str) -> DatasetManifest:
    fields: Dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DatasetFormatError(f"{path}: line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            value = value.strip()
            try:
                if key in _INT_KEYS:
                    fields[key] = int(value)
                elif key in _JSON_KEYS:
                    fields[key] = json.loads(value)
                else:
                    fields[key] = value
            except (ValueError, json.JSONDecodeError) as exc:
                raise DatasetFormatError(f"{path}: line {lineno}: {exc}") from exc
    if "env_name" not in fields or "n_records" not in fields:
        raise DatasetFormatError(f"{path}: missing required manifest keys")
    fields["final_tubes"] = [tuple(t) for t in fields.get("final_tubes", [])]
    return DatasetManifest(**fields)


def _record_line(rec: DatasetRecord) -> str:
    return json.dumps({
        "traj": rec.trajectory_id,
        "t": rec.t,
        "source": rec.source,
        "obs": rec.observation.tolist(),
        "chunk": rec.action_chunk.tolist(),
    })


def _traj_line(i: int, traj: Trajectory) -> str:
    return json.dumps({
        "id": i,
        "variant": traj.variant,
        "success": bool(traj.success),
        "mass": traj.env_params.mass,
        "friction_scale": traj.env_params.friction_scale,
        "states": traj.states.tolist(),
        "actions": traj.actions.tolist(),
        "origin": None if traj.origin is None else np.asarray(traj.origin).tolist(),
    })


def serialize(records: Sequence[DatasetRecord], manifest: DatasetManifest,
              out_dir: str, trajectories: Optional[Sequence[Trajectory]] = None) -> None:
    """Write manifest, records, and the optional raw trajectory dump."""
    os.makedirs(out_dir, exist_ok=True)
    manifest.n_records = len(records)
    if trajectories is not None:
        manifest.n_trajectories = len(trajectories)
    _atomic_write(os.path.join(out_dir, "manifest"), _manifest_lines(manifest))
    _atomic_write(os.path.join(out_dir, "records"),
                  "".join(_record_line(r) + "\n" for r in records))
    if trajectories is not None:
        _atomic_write(os.path.join(out_dir, "trajectories"),
                      "".join(_traj_line(i, t) + "\n" for i, t in enumerate(trajectories)))


def _read_jsonl(path: str, expected: int):
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                rows.append(json.loads(raw))
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(
                    f"{path}: line {lineno}, offset {exc.pos}: {exc.msg}") from exc
    if len(rows) != expected:
        raise DatasetFormatError(
            f"{path}: expected {expected} lines per manifest, found {len(rows)} (truncated?)")
    return rows


def deserialize(out_dir: str) -> Tuple[List[DatasetRecord], DatasetManifest]:
    manifest = _parse_manifest(os.path.join(out_dir, "manifest"))
    rows = _read_jsonl(os.path.join(out_dir, "records"), manifest.n_records)
    records = []
    for row in rows:
        try:
            records.append(DatasetRecord(
                observation=np.array(row["obs"], dtype=float),
                action_chunk=np.array(row["chunk"], dtype=float),
                source=row["source"], trajectory_id=row["traj"], t=row["t"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise DatasetFormatError(f"{out_dir}/records: bad record: {exc}") from exc
    return records, manifest


def load_trajectories(out_dir: str) -> List[Trajectory]:
    manifest = _parse_manifest(os.path.join(out_dir, "manifest"))
    path = os.path.join(out_dir, "trajectories")
    if not os.path.exists(path):
        raise DatasetFormatError(f"{path}: trajectory dump missing")
    rows = _read_jsonl(path, manifest.n_trajectories)
    out = []
    for row in rows:
        out.append(Trajectory(
            states=np.array(row["states"], dtype=float),
            actions=np.array(row["actions"], dtype=float),
            success=bool(row["success"]),
            env_params=EnvParams(mass=row["mass"], friction_scale=row["friction_scale"]),
            origin=None if row["origin"] is None else np.array(row["origin"], dtype=float),
            variant=int(row["variant"])))
    return out


# ---------------------------------------------------------------------------
# reporting


def dataset_stats(manifest: DatasetManifest, records: Sequence[DatasetRecord]) -> Dict:
    """Machine-readable summary; render with format_stats for humans."""
    rewards = manifest.parameters.get("reward_histogram")
    by_source = {"curated": 0, "relabeled": 0}
    for rec in records:
        by_source[rec.source] += 1
    return {
        "env": manifest.env_name,
        "source": manifest.source,
        "generated": manifest.n_generated,
        "successful": manifest.n_successful,
        "selected": manifest.n_selected,
        "omission_fraction": manifest.omission_fraction,
        "relabeled": manifest.n_relabeled,
        "records_curated": by_source["curated"],
        "records_relabeled": by_source["relabeled"],
        "final_tubes": list(manifest.final_tubes),
        "reward_histogram": rewards,
    }


def format_stats(stats: Dict) -> str:
    lines = [
        f"environment         : {stats['env']}",
        f"run type            : {stats['source']}",
        f"rollouts generated  : {stats['generated']}",
        f"rollouts successful : {stats['successful']}",
        f"rollouts selected   : {stats['selected']}",
        f"omission fraction   : {stats['omission_fraction']:.4f}",
        f"relabeled targets   : {stats['relabeled']}",
        f"curated records     : {stats['records_curated']}",
        f"relabeled records   : {stats['records_relabeled']}",
    ]
    for i, (r_min, r_max) in enumerate(stats["final_tubes"]):
        lines.append(f"variant {i} final tube : [{r_min:.6f}, {r_max:.6f}]")
    return "\n".join(lines) + "\n"
