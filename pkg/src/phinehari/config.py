"""INI run configuration.

Example::

    [problem]
    family = power:1.5
    dim = 2
    nodes_per_axis = 65
    q = 1.2
    lstar = 6
    lambda = 0.05
    a = 1
    b = 1

    [solver]
    restarts = 8

    [run]
    seed = 0
    out = runs/demo

Every default tolerance is a key here; missing keys take the library
defaults.
"""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from typing import List, Optional

from .energy import ProblemSpec
from .errors import ConfigError
from .expr import field_from_expr, weight_from_expr
from .grid import Field, build_grid
from .nfunction import parse_family
from .solver import SolveOptions

__all__ = ["RunConfig", "load_config", "parse_config", "build_problem", "default_direction"]

_SOLVER_KEYS = {f.name: f.type for f in fields(SolveOptions) if f.name not in ("seed", "threads")}


@dataclass
class RunConfig:
    family: str
    dim: int
    nodes_per_axis: int
    q: float
    lambdas: List[float]
    a_expr: str = "1"
    b_expr: str = "1"
    lstar_override: Optional[float] = None
    direction: Optional[str] = None
    solver: dict = field(default_factory=dict)
    norm: str = "sum"
    decay_norm: str = "gradient"
    probe_count: int = 32
    ascent_steps: int = 200
    seed: int = 0
    out: Optional[str] = None
    threads: Optional[int] = None
    source: Optional[str] = None

    @property
    def lam(self) -> float:
        return self.lambdas[0]

    def solve_options(self, seed: int = None, threads: int = None) -> SolveOptions:
        return SolveOptions(
            seed=self.seed if seed is None else seed,
            threads=threads if threads is not None else self.threads,
            **self.solver,
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "dim": self.dim,
            "nodes_per_axis": self.nodes_per_axis,
            "q": self.q,
            "lstar": self.lstar_override,
            "lambdas": list(self.lambdas),
            "a": self.a_expr,
            "b": self.b_expr,
            "direction": self.direction,
            "solver": dict(sorted(self.solver.items())),
            "norm": self.norm,
            "decay_norm": self.decay_norm,
            "probe_count": self.probe_count,
            "ascent_steps": self.ascent_steps,
            "seed": self.seed,
        }


def _num(section, key, cast, default=None, required=False):
    if key not in section:
        if required:
            raise ConfigError(f"missing key [{section.name}] {key}")
        return default
    raw = section[key].strip()
    try:
        if cast is bool:
            return section.getboolean(key)
        return cast(float(raw)) if cast is int else cast(raw)
    except ValueError:
        raise ConfigError(f"[{section.name}] {key} = {raw!r} is not a valid {cast.__name__}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"cannot parse lambda list {text!r}") from None


def parse_config(text: str, source: str = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from None
    if "problem" not in cp:
        raise ConfigError("config needs a [problem] section")
    pr = cp["problem"]
    family = pr.get("family")
    if not family:
        raise ConfigError("missing key [problem] family")
    parse_family(family)  # validate early
    if "lambda" in pr and "lambdas" in pr:
        raise ConfigError("give either lambda or lambdas, not both")
    if "lambdas" in pr:
        lambdas = _float_list(pr["lambdas"])
    elif "lambda" in pr:
        lambdas = [_num(pr, "lambda", float)]
    else:
        raise ConfigError("missing key [problem] lambda")
    if not lambdas or any(not x > 0 for x in lambdas):
        raise ConfigError("lambda values must be positive")

    solver = {}
    if "solver" in cp:
        for key, raw in cp["solver"].items():
            if key not in _SOLVER_KEYS:
                raise ConfigError(f"unknown solver key {key!r}")
            typ = _SOLVER_KEYS[key]
            cast = {"int": int, "float": float, "bool": bool}.get(str(typ), float)
            solver[key] = _num(cp["solver"], key, cast)
        try:
            SolveOptions(**solver)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    th = cp["thresholds"] if "thresholds" in cp else {}
    run = cp["run"] if "run" in cp else {}
    norm = th.get("norm", "sum").strip() if th else "sum"
    decay_norm = th.get("decay_norm", "gradient").strip() if th else "gradient"
    for n in (norm, decay_norm):
        if n not in ("sum", "gradient"):
            raise ConfigError(f"norm must be sum or gradient, got {n!r}")

    cfg = RunConfig(
        family=family.strip(),
        dim=_num(pr, "dim", int, required=True),
        nodes_per_axis=_num(pr, "nodes_per_axis", int, required=True),
        q=_num(pr, "q", float, required=True),
        lambdas=lambdas,
        a_expr=pr.get("a", "1"),
        b_expr=pr.get("b", "1"),
        lstar_override=_num(pr, "lstar", float),
        direction=pr.get("direction"),
        solver=solver,
        norm=norm,
        decay_norm=decay_norm,
        probe_count=_num(th, "probe_count", int, 32) if th else 32,
        ascent_steps=_num(th, "ascent_steps", int, 200) if th else 200,
        seed=_num(run, "seed", int, 0) if run else 0,
        out=run.get("out") if run else None,
        threads=_num(run, "threads", int) if run else None,
        source=source,
    )
    build_grid(cfg.dim, cfg.nodes_per_axis)  # validates sizes
    return cfg


def load_config(path) -> RunConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), source=str(path))


def build_problem(cfg: RunConfig, lam: float = None) -> ProblemSpec:
    """ProblemSpec for ``cfg`` (the standing hypothesis is *not* enforced here)."""
    grid = build_grid(cfg.dim, cfg.nodes_per_axis)
    return ProblemSpec(
        nf=parse_family(cfg.family),
        grid=grid,
        a=weight_from_expr(grid, cfg.a_expr),
        b=weight_from_expr(grid, cfg.b_expr),
        q=cfg.q,
        lam=cfg.lam if lam is None else lam,
        lstar_override=cfg.lstar_override,
    )


def default_direction(cfg: RunConfig) -> Field:
    """``prod sin(pi x_i)`` unless the config names a direction."""
    grid = build_grid(cfg.dim, cfg.nodes_per_axis)
    text = cfg.direction or "*".join(f"sin(pi*{c})" for c in "xyz"[: cfg.dim])
    return field_from_expr(grid, text)
