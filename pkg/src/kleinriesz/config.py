"""Run configuration: one YAML/JSON file plus flag overrides, validated in
full before any computation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .riesz import ProblemSpec, Tolerances


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


@dataclass
class RunConfig:
    # problem and chart
    group_file: str | None = None
    group: dict | list | None = None
    n: int = 3
    alpha: float = 2.0
    alpha_range: list | None = None
    resolution: int = 10
    warp: float = 0.0
    radial_levels: int | None = None
    tolerances: dict = field(default_factory=lambda: asdict(Tolerances()))
    output_dir: str = "out"
    # kernel and solver
    diagonal: str = "subtraction"
    r0: float = 1.2
    cutoff: int | None = None
    max_iter: int = 50
    yamabe: bool = False
    seed: int = 0
    # poincare
    s: float = 1.0
    x: list | None = None
    # moving plane
    base_point: list | None = None
    lambdas: list = field(default_factory=lambda: [2.0, 1.5, 1.0, 0.75, 0.5, 0.25, 0.1])
    axis: int = -1
    box: float = 4.0
    samples: int = 32
    floor: float = 1e-3
    # rescale
    p0: int | str = "argmax"
    scales: list = field(default_factory=lambda: [2.0, 4.0, 8.0])
    window: float = 1.0
    Lambda: float = 2.0
    # continuation
    step: float = 0.1
    bound: float = 1e3

    def problem(self, alpha=None) -> ProblemSpec:
        return ProblemSpec(self.n, self.alpha if alpha is None else alpha,
                           Tolerances(**self.tolerances))

    def to_dict(self):
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _check_types(d, errors):
    def isnum(v):
        return isinstance(v, (int, float)) and not isinstance(v, bool)

    def isint(v):
        return isinstance(v, int) and not isinstance(v, bool)

    checks = {
        "n": isint, "resolution": isint, "max_iter": isint, "seed": isint, "samples": isint,
        "axis": isint,
        "alpha": isnum, "warp": isnum, "r0": isnum, "s": isnum, "box": isnum, "floor": isnum,
        "window": isnum, "Lambda": isnum, "step": isnum, "bound": isnum,
        "yamabe": lambda v: isinstance(v, bool),
        "diagonal": lambda v: v in ("subtraction", "ball"),
        "output_dir": lambda v: isinstance(v, str),
        "group_file": lambda v: v is None or isinstance(v, str),
        "group": lambda v: v is None or isinstance(v, (dict, list)),
        "radial_levels": lambda v: v is None or (isint(v) and v >= 1),
        "cutoff": lambda v: v is None or (isint(v) and v >= 1),
        "alpha_range": lambda v: v is None or (isinstance(v, list) and len(v) == 2
                                               and all(map(isnum, v))),
        "x": lambda v: v is None or (isinstance(v, list) and all(map(isnum, v))),
        "base_point": lambda v: v is None or (isinstance(v, list) and all(map(isnum, v))),
        "lambdas": lambda v: isinstance(v, list) and len(v) > 0 and all(map(isnum, v)),
        "scales": lambda v: isinstance(v, list) and len(v) > 0 and all(map(isnum, v)),
        "p0": lambda v: v == "argmax" or (isint(v) and v >= 0),
        "tolerances": lambda v: isinstance(v, dict),
    }
    bad = []
    for k, v in d.items():
        if k in checks and not checks[k](v):
            errors.append(f"{k}: invalid value {v!r}")
            bad.append(k)
    return bad


def validate(d: dict) -> RunConfig:
    """Build a RunConfig from a plain dict, listing every problem found."""
    errors = []
    unknown = sorted(set(d) - set(_TYPES))
    errors += [f"{k}: unknown key" for k in unknown]
    d = {k: v for k, v in d.items() if k in _TYPES}
    for k in _check_types(d, errors):
        # keep checking the rest against defaults
        del d[k]
    tol = dict(asdict(Tolerances()))
    if isinstance(d.get("tolerances"), dict):
        for k, v in d["tolerances"].items():
            if k not in tol:
                errors.append(f"tolerances.{k}: unknown key")
            elif not isinstance(v, (int, float)) or isinstance(v, bool) or not v > 0:
                errors.append(f"tolerances.{k}: must be a positive number, got {v!r}")
            else:
                tol[k] = float(v)
    d["tolerances"] = tol
    cfg = RunConfig(**d)
    if cfg.n < 3:
        errors.append(f"n: must be an integer >= 3, got {cfg.n}")
    if not 2 <= cfg.alpha < cfg.n:
        errors.append(f"alpha: must lie in [2, n), got {cfg.alpha}")
    if cfg.alpha_range is not None:
        a0, a1 = cfg.alpha_range
        if not 2 <= a0 <= a1 < cfg.n:
            errors.append(f"alpha_range: need 2 <= start <= end < n, got {cfg.alpha_range}")
    if cfg.resolution < 2:
        errors.append(f"resolution: must be >= 2, got {cfg.resolution}")
    if cfg.step <= 0:
        errors.append(f"step: must be positive, got {cfg.step}")
    if cfg.max_iter < 1:
        errors.append("max_iter: must be >= 1")
    if cfg.samples < 4:
        errors.append("samples: must be >= 4")
    if cfg.box <= 0 or cfg.window <= 0 or cfg.Lambda <= 0 or cfg.bound <= 0 or cfg.floor <= 0:
        errors.append("box, window, Lambda, bound and floor must be positive")
    if not -cfg.n <= cfg.axis < cfg.n:
        errors.append(f"axis: out of range for n = {cfg.n}")
    if any(v < 1 for v in cfg.scales):
        errors.append("scales: rescaling factors must be >= 1")
    if cfg.x is not None and len(cfg.x) != cfg.n:
        errors.append(f"x: need {cfg.n} coordinates")
    if cfg.base_point is not None and len(cfg.base_point) != cfg.n:
        errors.append(f"base_point: need {cfg.n} chart coordinates")
    if cfg.group_file is not None and cfg.group is not None:
        errors.append("group_file, group: give at most one")
    if cfg.group_file is not None and not Path(cfg.group_file).is_file():
        errors.append(f"group_file: no such file {cfg.group_file}")
    if errors:
        raise ConfigError(errors)
    return cfg


def load_config(path=None, overrides=None) -> RunConfig:
    d = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError([f"config: cannot read {path}: {e.strerror}"])
        try:
            d = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError([f"config: not valid YAML/JSON: {e}"])
        if not isinstance(d, dict):
            raise ConfigError(["config: top level must be a mapping"])
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return validate(d)


def dump(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)
