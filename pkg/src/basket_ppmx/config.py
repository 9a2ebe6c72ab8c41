"""YAML run configuration with schema validation and line-anchored diagnostics."""

from __future__ import annotations

import hashlib
import typing
from dataclasses import dataclass, field, fields, replace
from typing import Any, Optional

import yaml

from .allocation import DesignConfig
from .comparators import ComparatorPrior
from .decision import UtilityConfig
from .domain import Catalog, InputError
from .ppmx import MCMCConfig
from .scenarios import IMPACT_POPULATION, Scenario, preset_scenario
from .simulator import AnalysisConfig


class ConfigError(InputError):
    """Invalid configuration; ``problems`` holds one 'source:line: message' entry each."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


@dataclass(frozen=True)
class CalibrationConfig:
    u0_grid: tuple[float, ...] = (1.3,)
    u1_grid: tuple[float, ...] = (20.0,)
    tie_target: float = 0.05
    tpr_target: float = 0.90
    null_scenario: int = 1
    alt_scenario: int = 2


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    reps: int = 100
    scenario: Scenario = field(default_factory=lambda: preset_scenario(1))
    design: DesignConfig = DesignConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    calibration: CalibrationConfig = CalibrationConfig()


# -- node helpers ------------------------------------------------------------

class _Ctx:
    def __init__(self, source: str):
        self.source = source
        self.problems: list[str] = []

    def err(self, node: Optional[yaml.Node], msg: str) -> None:
        line = node.start_mark.line + 1 if node is not None else 1
        self.problems.append(f"{self.source}:{line}: {msg}")


def _mapping(node, ctx: _Ctx, what: str) -> Optional[dict[str, tuple[yaml.Node, yaml.Node]]]:
    if not isinstance(node, yaml.MappingNode):
        ctx.err(node, f"{what} must be a mapping")
        return None
    out = {}
    for k, v in node.value:
        if not isinstance(k, yaml.ScalarNode):
            ctx.err(k, f"{what}: keys must be plain names")
            continue
        if k.value in out:
            ctx.err(k, f"{what}: duplicate key {k.value!r}")
        out[k.value] = (k, v)
    return out


_MISSING = object()


def _scalar(node, tp, ctx: _Ctx, name: str):
    """Convert a scalar node to ``tp`` (float, int, bool, str or Optional of one)."""
    origin = typing.get_origin(tp)
    if origin is typing.Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if isinstance(node, yaml.ScalarNode) and node.tag.endswith(":null"):
            return None
        return _scalar(node, args[0], ctx, name)
    if not isinstance(node, yaml.ScalarNode):
        ctx.err(node, f"{name} must be a single value")
        return _MISSING
    value = yaml.safe_load(yaml.serialize(node))
    if tp is bool:
        if not isinstance(value, bool):
            ctx.err(node, f"{name} must be true or false, got {node.value!r}")
            return _MISSING
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            ctx.err(node, f"{name} must be an integer, got {node.value!r}")
            return _MISSING
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            ctx.err(node, f"{name} must be a number, got {node.value!r}")
            return _MISSING
        return float(value)
    if tp is str:
        return str(value)
    raise TypeError(tp)


def _sequence(node, item_tp, ctx: _Ctx, name: str):
    if not isinstance(node, yaml.SequenceNode):
        ctx.err(node, f"{name} must be a list")
        return _MISSING
    vals = [_scalar(v, item_tp, ctx, f"{name}[{i}]") for i, v in enumerate(node.value)]
    if any(v is _MISSING for v in vals):
        return _MISSING
    return tuple(vals)


def _dataclass(node, cls, default, ctx: _Ctx, name: str, nested: Optional[dict] = None):
    """Override ``default`` (an instance of ``cls``) with keys found in ``node``."""
    m = _mapping(node, ctx, name)
    if m is None:
        return default
    hints = typing.get_type_hints(cls)
    nested = nested or {}
    allowed = [f.name for f in fields(cls) if f.name not in ("utility", "comparator_prior")]
    updates = {}
    for key, (knode, vnode) in m.items():
        if key not in allowed:
            ctx.err(knode, f"{name}: unknown key {key!r} (allowed: {', '.join(allowed)})")
            continue
        tp = hints[key]
        if key in nested:
            updates[key] = _dataclass(vnode, tp, getattr(default, key), ctx, f"{name}.{key}")
        elif typing.get_origin(tp) is tuple:
            v = _sequence(vnode, typing.get_args(tp)[0], ctx, f"{name}.{key}")
            if v is not _MISSING:
                updates[key] = v
        else:
            v = _scalar(vnode, tp, ctx, f"{name}.{key}")
            if v is not _MISSING:
                updates[key] = v
    try:
        return replace(default, **updates)
    except InputError as exc:
        ctx.err(node, f"{name}: {exc}")
        return default


def _catalog(node, ctx: _Ctx) -> Catalog:
    m = _mapping(node, ctx, "catalog")
    if m is None:
        return Catalog()
    kw = {}
    for key, (knode, vnode) in m.items():
        if key not in ("aberrations", "tumors"):
            ctx.err(knode, f"catalog: unknown key {key!r} (allowed: aberrations, tumors)")
            continue
        v = _sequence(vnode, str, ctx, f"catalog.{key}")
        if v is not _MISSING:
            kw[key] = v
    try:
        return Catalog(**kw)
    except InputError as exc:
        ctx.err(node, f"catalog: {exc}")
        return Catalog()


def _scenario(node, catalog: Catalog, ctx: _Ctx) -> Scenario:
    m = _mapping(node, ctx, "scenario")
    if m is None:
        return preset_scenario(1, catalog)
    allowed = ("preset", "name", "beta0", "sigma", "interactions", "population")
    for key, (knode, _) in m.items():
        if key not in allowed:
            ctx.err(knode, f"scenario: unknown key {key!r} (allowed: {', '.join(allowed)})")
    if "preset" in m:
        number = _scalar(m["preset"][1], int, ctx, "scenario.preset")
        try:
            base = preset_scenario(number, catalog) if number is not _MISSING else Scenario(catalog=catalog)
        except InputError as exc:
            ctx.err(m["preset"][1], f"scenario.preset: {exc}")
            base = Scenario(catalog=catalog)
    else:
        pop = IMPACT_POPULATION if catalog == Catalog() else ((0,) * catalog.n_tumors,) * catalog.q
        base = Scenario(catalog=catalog, population=pop)
    kw: dict[str, Any] = {}
    for key, tp in (("name", str), ("beta0", float), ("sigma", float)):
        if key in m:
            v = _scalar(m[key][1], tp, ctx, f"scenario.{key}")
            if v is not _MISSING:
                kw[key] = v
    if "interactions" in m:
        vnode = m["interactions"][1]
        inter = []
        if not isinstance(vnode, yaml.SequenceNode):
            ctx.err(vnode, "scenario.interactions must be a list")
        else:
            for i, item in enumerate(vnode.value):
                im = _mapping(item, ctx, f"scenario.interactions[{i}]")
                if im is None:
                    continue
                if set(im) != {"mutation", "tumor", "coef"}:
                    ctx.err(item, f"scenario.interactions[{i}] needs exactly mutation, tumor, coef")
                    continue
                mut = _scalar(im["mutation"][1], str, ctx, "mutation")
                tum = _scalar(im["tumor"][1], str, ctx, "tumor")
                coef = _scalar(im["coef"][1], float, ctx, "coef")
                try:
                    inter.append((catalog.pair(mut, tum), coef))
                except InputError as exc:
                    ctx.err(item, f"scenario.interactions[{i}]: {exc}")
        kw["interactions"] = tuple(inter)
    if "population" in m:
        vnode = m["population"][1]
        if not isinstance(vnode, yaml.SequenceNode):
            ctx.err(vnode, "scenario.population must be a list of rows")
        else:
            rows = [_sequence(r, int, ctx, f"scenario.population[{i}]") for i, r in enumerate(vnode.value)]
            if all(r is not _MISSING for r in rows):
                kw["population"] = tuple(rows)
    try:
        return replace(base, **kw)
    except InputError as exc:
        ctx.err(node, f"scenario: {exc}")
        return base


# -- public API ---------------------------------------------------------------

_TOP = ("seed", "reps", "catalog", "scenario", "design", "analysis", "utility",
        "comparator_prior", "calibration")


def load_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse and validate; every problem found is reported, each with its line."""
    ctx = _Ctx(source)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError([f"{source}:{line}: {getattr(exc, 'problem', None) or exc}"]) from None
    if root is None:
        return RunConfig()
    top = _mapping(root, ctx, "config")
    if top is None:
        raise ConfigError(ctx.problems)
    for key, (knode, _) in top.items():
        if key not in _TOP:
            ctx.err(knode, f"unknown section {key!r} (allowed: {', '.join(_TOP)})")
    cfg = RunConfig()
    seed = _scalar(top["seed"][1], int, ctx, "seed") if "seed" in top else cfg.seed
    reps = _scalar(top["reps"][1], int, ctx, "reps") if "reps" in top else cfg.reps
    if reps is not _MISSING and reps < 1:
        ctx.err(top["reps"][1], "reps must be at least 1")
    if seed is not _MISSING and seed < 0:
        ctx.err(top["seed"][1], "seed must be nonnegative")
    catalog = _catalog(top["catalog"][1], ctx) if "catalog" in top else Catalog()
    scenario = _scenario(top["scenario"][1], catalog, ctx) if "scenario" in top else preset_scenario(1, catalog)
    design = _dataclass(top["design"][1], DesignConfig, cfg.design, ctx, "design") \
        if "design" in top else cfg.design
    analysis = cfg.analysis
    if "analysis" in top:
        analysis = _dataclass(top["analysis"][1], AnalysisConfig, analysis, ctx, "analysis",
                              nested={"interim_mcmc": MCMCConfig, "final_mcmc": MCMCConfig})
    if "utility" in top:
        util = _dataclass(top["utility"][1], UtilityConfig, analysis.utility, ctx, "utility")
        analysis = replace(analysis, utility=util)
    if "comparator_prior" in top:
        prior = _dataclass(top["comparator_prior"][1], ComparatorPrior, analysis.comparator_prior,
                           ctx, "comparator_prior")
        analysis = replace(analysis, comparator_prior=prior)
    calib = _dataclass(top["calibration"][1], CalibrationConfig, cfg.calibration, ctx, "calibration") \
        if "calibration" in top else cfg.calibration
    if ctx.problems:
        raise ConfigError(ctx.problems)
    return RunConfig(seed, reps, scenario, design, analysis, calib)


def config_to_dict(cfg: RunConfig) -> dict:
    """Plain-data view that ``load_config`` accepts back unchanged."""
    sc = cfg.scenario
    cat = sc.catalog

    def plain(obj, skip=()):
        return {f.name: (list(v) if isinstance(v := getattr(obj, f.name), tuple) else v)
                for f in fields(obj) if f.name not in skip}

    analysis = plain(cfg.analysis, skip=("utility", "comparator_prior", "interim_mcmc", "final_mcmc"))
    analysis["interim_mcmc"] = plain(cfg.analysis.interim_mcmc)
    analysis["final_mcmc"] = plain(cfg.analysis.final_mcmc)
    return {
        "seed": cfg.seed,
        "reps": cfg.reps,
        "catalog": {"aberrations": list(cat.aberrations), "tumors": list(cat.tumors)},
        "scenario": {
            "name": sc.name, "beta0": sc.beta0, "sigma": sc.sigma,
            "interactions": [{"mutation": cat.aberrations[a.mutation], "tumor": cat.tumors[a.tumor],
                              "coef": b} for a, b in sc.interactions],
            "population": [list(r) for r in sc.population],
        },
        "design": plain(cfg.design),
        "analysis": analysis,
        "utility": plain(cfg.analysis.utility),
        "comparator_prior": plain(cfg.analysis.comparator_prior),
        "calibration": plain(cfg.calibration),
    }


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=None)


def digest(text: str | bytes) -> str:
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


__all__ = ["CalibrationConfig", "ConfigError", "RunConfig", "config_to_dict", "digest",
           "dump_config", "load_config"]
