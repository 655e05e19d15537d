"""Run configuration: dataclasses plus a plain-text ``key = value`` file
format.

Keys are dotted by section, e.g.::

    env = planar_block_rotate
    env.horizon = 60
    iterations = 5
    sampler.m_points = 12
    curator.q_min = 0.2
    relabel.cem_iterations = 30

Values are parsed as JSON where possible (numbers, lists, booleans) and
kept as strings otherwise.  Unknown keys are rejected.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field, fields
from typing import Dict, Optional


class ConfigError(ValueError):
    """Bad configuration file or option."""


@dataclass
class SamplerConfig:
    # variance_floor is in squared control-point units; the desk-scale
    # environments use +-0.03 m actions, so the floor sits well below the
    # default initial spread (0.05 x action range = 3e-3).
    m_points: int = 16
    sigma0: float = 0.0          # 0 -> 0.05 x per-dimension action range
    variance_floor: float = 1e-8


@dataclass
class CuratorConfig:
    q_min: float = 0.2
    q_max: float = 0.8
    k_dct: int = 8
    sigma_rbf: float = 0.0       # 0 -> median pairwise embedding distance
    m_fraction: float = 0.8      # selected fraction of each success batch
    temperature: float = 0.25
    eps_dpp: float = 1e-6
    eps_stab: float = 1e-3
    delta: float = 1e-8          # refit variance floor, squared action units


@dataclass
class RelabelConfig:
    k_rel: int = 10
    horizon: int = 15
    min_sep: int = 0             # 0 -> horizon
    population: int = 64
    elite_frac: float = 0.125
    cem_iterations: int = 30
    init_std: float = 0.0        # 0 -> 0.25 x per-dimension action range
    w_fail: float = 1e3
    w_tube: float = 10.0
    w_ref: float = 1.0


@dataclass
class PipelineConfig:
    env: str = "planar_block_rotate"
    env_overrides: Dict = field(default_factory=dict)
    n_variants: int = 4
    iterations: int = 5          # outer loop count per variant
    samples: int = 64            # rollouts per iteration
    seed: int = 0
    out_dir: str = "out"
    jobs: int = 1
    l_blend: int = 10
    chunk_len: int = 30
    trans_range: tuple = (0.08, 0.08, 0.0)
    yaw_range: float = 0.3
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    curator: CuratorConfig = field(default_factory=CuratorConfig)
    relabel: RelabelConfig = field(default_factory=RelabelConfig)

    def validate(self) -> None:
        if self.iterations < 1 or self.samples < 1 or self.n_variants < 1:
            raise ConfigError("iterations, samples, and n_variants must all be >= 1")
        if not 0.0 <= self.curator.q_min < self.curator.q_max <= 1.0:
            raise ConfigError("need 0 <= q_min < q_max <= 1")
        if self.l_blend < 1 or self.chunk_len < 1:
            raise ConfigError("l_blend and chunk_len must be >= 1")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")


_SECTIONS = {"sampler": SamplerConfig, "curator": CuratorConfig, "relabel": RelabelConfig}


def _coerce(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def _set_field(obj, name: str, value, where: str) -> None:
    valid = {f.name: f for f in fields(obj)}
    if name not in valid:
        raise ConfigError(f"unknown key '{where}'")
    current = getattr(obj, name)
    if isinstance(current, tuple) and isinstance(value, list):
        value = tuple(value)
    setattr(obj, name, type(current)(value) if isinstance(current, (int, float, str))
            and not isinstance(current, bool) else value)


def apply_option(cfg: PipelineConfig, key: str, value) -> None:
    """Apply one dotted-key option (value already coerced or raw string)."""
    if isinstance(value, str):
        value = _coerce(value)
    if "." in key:
        section, _, name = key.partition(".")
        if section == "env":
            cfg.env_overrides[name] = tuple(value) if isinstance(value, list) else value
            return
        if section not in _SECTIONS:
            raise ConfigError(f"unknown section '{section}'")
        _set_field(getattr(cfg, section), name, value, key)
        return
    if key == "env":
        cfg.env = str(value)
        return
    _set_field(cfg, key, value, key)


def load_config(path: Optional[str] = None, overrides: Optional[Dict] = None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is not None:
        with open(path) as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                try:
                    apply_option(cfg, key.strip(), value.strip())
                except ConfigError as exc:
                    raise ConfigError(f"{path}: line {lineno}: {exc}") from exc
    for key, value in (overrides or {}).items():
        apply_option(cfg, key, value)
    cfg.validate()
    return cfg


def config_parameters(cfg: PipelineConfig) -> Dict:
    """Flat parameter dict recorded in the dataset manifest."""
    out = {
        "n_variants": cfg.n_variants, "iterations": cfg.iterations,
        "samples": cfg.samples, "l_blend": cfg.l_blend, "chunk_len": cfg.chunk_len,
        "trans_range": list(cfg.trans_range), "yaw_range": cfg.yaw_range,
    }
    for section in ("sampler", "curator", "relabel"):
        for f in fields(getattr(cfg, section)):
            out[f"{section}.{f.name}"] = getattr(getattr(cfg, section), f.name)
    return out
