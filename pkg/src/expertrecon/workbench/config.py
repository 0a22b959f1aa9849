"""Run configuration: a JSON or YAML mapping plus command-line overrides.

Recognised keys (all optional unless a command needs them)::

    kind:         auto | continuous | event | proportion
    panel:        judgement table (round CSV schema, optional `group` column)
    groups:       CSV with columns expert_id, group (overrides the panel's)
    quantities:   list of quantity ids to keep
    realizations: CSV with columns quantity_id, value        (score)
    studies:      list of {name, panel, groups, realizations} (score, batch)
    study:        Delphi study directory                      (delphi)
    out:          output directory
    seed:         integer seed, required
    format:       csv | json for tabular outputs
    continuous:   overrides for the continuous model (m, v_bar, a_g, ...)
    event:        overrides for the event model (a_W, b_W, ...)
    dm_prior:     {padding: 0.1} | {low: .., high: ..} | {table: path}
    dm_priors:    per-quantity dm_prior mappings
    p_low:        tail probability when the panel omits it (default 0.05)
    level:        central interval level for summaries (default 0.9)
    sensitivity:  {a_values, dm_means, b, strength, correlation_a, mc_draws}

Relative paths are resolved against the directory of the config file.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from ..continuous import ContinuousModelSpec
from ..delphi import InputError
from ..events import EventModelSpec

__all__ = ["RunConfig", "load_config"]

_KINDS = ("auto", "continuous", "event", "proportion")
_PATH_KEYS = ("panel", "groups", "realizations", "study", "out")


@dataclass
class RunConfig:
    seed: int | None = None
    kind: str = "auto"
    panel: Path | None = None
    groups: Path | None = None
    quantities: list[str] | None = None
    realizations: Path | None = None
    studies: list[dict] = field(default_factory=list)
    study: Path | None = None
    out: Path = Path("out")
    format: str = "csv"
    chains: int | None = None
    continuous: dict = field(default_factory=dict)
    event: dict = field(default_factory=dict)
    dm_prior: dict = field(default_factory=lambda: {"padding": 0.1})
    dm_priors: dict = field(default_factory=dict)
    p_low: float = 0.05
    level: float = 0.9
    sensitivity: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)
    base_dir: Path = field(default_factory=Path, repr=False)

    def validate(self, need_seed: bool = True):
        if need_seed and self.seed is None:
            raise InputError("a seed is required (config key `seed` or --seed)")
        if self.kind not in _KINDS:
            raise InputError(f"kind must be one of {_KINDS}, got {self.kind!r}")
        if self.format not in ("csv", "json"):
            raise InputError(f"format must be csv or json, got {self.format!r}")
        for key in ("panel", "groups", "realizations", "study"):
            p = getattr(self, key)
            if p is not None and not Path(p).exists():
                raise InputError(f"{key}: {p} does not exist")
        for s in self.studies:
            for key in ("panel", "groups", "realizations"):
                if s.get(key) is not None and not Path(s[key]).exists():
                    raise InputError(f"study {s.get('name')!r}: {key} {s[key]} does not exist")
        if not 0.0 < self.level < 1.0:
            raise InputError("level must lie in (0, 1)")

    def continuous_spec(self) -> ContinuousModelSpec:
        overrides = dict(self.continuous)
        if "group_priors" in overrides:
            overrides["group_priors"] = {k: tuple(v) for k, v in overrides["group_priors"].items()}
        spec = _apply(ContinuousModelSpec(), overrides, "continuous")
        return replace(spec, seed=int(self.seed or 0),
                       chains=self.chains if self.chains else spec.chains)

    def event_spec(self) -> EventModelSpec:
        spec = _apply(EventModelSpec(), dict(self.event), "event")
        return replace(spec, seed=int(self.seed or 0),
                       chains=self.chains if self.chains else spec.chains)

    def dm_settings(self, quantity: str) -> dict:
        return dict(self.dm_priors.get(quantity, self.dm_prior))

    @property
    def digest(self) -> str:
        """Hash of the effective settings (paths as written, output dir excluded)."""
        doc = {k: v for k, v in self.raw.items() if k != "out"}
        doc.update(seed=self.seed, chains=self.chains, kind=self.kind, format=self.format)
        text = json.dumps(doc, sort_keys=True, default=str)
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _apply(spec, overrides: dict, section: str):
    names = {f.name for f in fields(spec)}
    unknown = set(overrides) - names
    if unknown:
        raise InputError(f"unknown {section} setting(s): {sorted(unknown)}")
    try:
        return replace(spec, **overrides)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{section}: {exc}")


def _read_mapping(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    try:
        if path.suffix.lower() == ".json":
            doc = json.loads(text)
        else:
            doc = yaml.safe_load(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"invalid JSON: {exc.msg}", path, exc.lineno)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise InputError(f"invalid YAML: {exc}", path, mark.line + 1 if mark else None)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise InputError("config must be a mapping", path)
    return doc


def load_config(path=None, **overrides: Any) -> RunConfig:
    """Read a config file (if any) and apply non-None keyword overrides."""
    raw: dict = {}
    base = Path.cwd()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise InputError("config file not found", path)
        raw = _read_mapping(path)
        base = path.parent
    raw = {**raw, **{k: v for k, v in overrides.items() if v is not None}}
    known = {f.name for f in fields(RunConfig)} - {"raw", "base_dir"}
    unknown = set(raw) - known
    if unknown:
        raise InputError(f"unknown config key(s): {sorted(unknown)}", path)

    def resolve(p):
        if p is None:
            return None
        p = Path(p)
        return p if p.is_absolute() else base / p

    cfg = RunConfig(raw=dict(raw), base_dir=base)
    for key, value in raw.items():
        if key in _PATH_KEYS:
            value = resolve(value)
        setattr(cfg, key, value)
    if cfg.out is None:
        cfg.out = base / "out"
    cfg.studies = [
        {**s, **{k: resolve(s.get(k)) for k in ("panel", "groups", "realizations")}}
        for s in cfg.studies
    ]
    dm = cfg.dm_prior
    if isinstance(dm, dict) and "table" in dm:
        cfg.dm_prior = {**dm, "table": resolve(dm["table"])}
    cfg.dm_priors = {
        q: ({**d, "table": resolve(d["table"])} if "table" in d else d)
        for q, d in cfg.dm_priors.items()
    }
    if cfg.seed is not None:
        try:
            cfg.seed = int(cfg.seed)
        except (TypeError, ValueError):
            raise InputError(f"seed must be an integer, got {cfg.seed!r}")
        if not 0 <= cfg.seed < 2**64:
            raise InputError("seed must be an unsigned 64-bit integer")
    return cfg
