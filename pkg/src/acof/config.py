"""YAML run configuration: parsing, validation and dot-path overrides.

Schema (all sections optional except ``space`` and ``targets``)::

    mode: acof | single_llm | pure_bo
    seed: 0
    parallel: 1
    budget: {seed: 200, round: 100, rounds: 3, batch: 10}
    space:
      - {name: w1, lower: 1.0e-6, upper: 9.0e-6, unit: m, scale: linear}
    targets: {gain_db: 85, ugbw_hz: 9.0e8, pm_deg: 100, power_w: 5.54e-4}
    evaluator: {kind: synthetic_opamp}   # or multi_pocket, or ngspice with
                                         # template, measurement_map, executable, timeout
    acquisition: {pool_size: 1024, xi: 0.01, min_pairwise_distance: 0.05}
    gp: {n_max: 600, n_best: 300, n_recent: 300, hyper_subset: 150, penalize_invalid: false}
    agents: {kind: heuristic, top_k: 10, margin: 0.2, eps_min: 0.01, stagnation_tol: 0.01,
             memo_window: 5, summary_size: 10, max_retries: 3, circuit: "", templates_dir: null,
             llm: {base_url: ..., model: ..., temperature: 0.2, max_tokens: 2048, timeout: 120}}
    metrics: {k: 10, min_cluster_size: 10, min_samples: 5, regret_include_seed: true}
    log: {timestamps: true}
"""

from __future__ import annotations

import copy
import math
from pathlib import Path
from typing import Any, Iterable, Optional

import yaml

from .bayesopt import GPSettings
from .core import ParameterSpace, ParameterSpec, SpecTargets, ValidationError
from .evaluators import EVALUATOR_KINDS, EvaluatorSpec, TemplateError, normalize_measurement_map
from .orchestrator import MODES, AgentSettings, LLMSettings, MetricsSettings, RunConfig

_MISSING = object()


class ConfigError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def _section(raw: dict, key: str) -> dict:
    val = raw.get(key) or {}
    if not isinstance(val, dict):
        raise ConfigError(key, "expected a mapping")
    return val


def _num(d: dict, key: str, path: str, default=_MISSING, kind=float, minimum=None, positive=False):
    if key not in d or d[key] is None:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}".lstrip("."), "is required")
        return default
    v = d[key]
    if isinstance(v, bool):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a number, got {v!r}")
    try:
        # PyYAML reads 1e-6 (no dot) as a string
        out = kind(float(v)) if kind is int and not isinstance(v, int) else kind(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a number, got {v!r}") from None
    if kind is int and float(v) != out:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected an integer, got {v!r}")
    if kind is float and not math.isfinite(out):
        raise ConfigError(f"{path}.{key}".lstrip("."), "must be finite")
    if minimum is not None and out < minimum:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"must be >= {minimum}")
    if positive and not out > 0:
        raise ConfigError(f"{path}.{key}".lstrip("."), "must be > 0")
    return out


def _bool(d: dict, key: str, path: str, default: bool) -> bool:
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ConfigError(f"{path}.{key}", f"expected true/false, got {v!r}")
    return v


def _str(d: dict, key: str, path: str, default=_MISSING, choices: Optional[Iterable[str]] = None):
    if key not in d or d[key] is None:
        if default is _MISSING:
            raise ConfigError(f"{path}.{key}".lstrip("."), "is required")
        return default
    v = d[key]
    if not isinstance(v, str):
        raise ConfigError(f"{path}.{key}".lstrip("."), f"expected a string, got {v!r}")
    if choices is not None and v not in choices:
        raise ConfigError(f"{path}.{key}".lstrip("."), f"must be one of {', '.join(choices)}")
    return v


def parse_space(items) -> ParameterSpace:
    if not isinstance(items, list) or not items:
        raise ConfigError("space", "expected a non-empty list of parameters")
    specs = []
    seen = set()
    for i, item in enumerate(items):
        path = f"space[{i}]"
        if not isinstance(item, dict):
            raise ConfigError(path, "expected a mapping")
        name = _str(item, "name", path)
        path = f"space.{name}"
        if name in seen:
            raise ConfigError(path, "duplicate parameter name")
        seen.add(name)
        lower = _num(item, "lower", path)
        upper = _num(item, "upper", path)
        scale = _str(item, "scale", path, "linear", ("linear", "log"))
        if not lower < upper:
            raise ConfigError(path, f"lower ({lower:g}) must be < upper ({upper:g}) for parameter {name}")
        try:
            specs.append(ParameterSpec(name, lower, upper, _str(item, "unit", path, ""), scale))
        except ValidationError as exc:
            raise ConfigError(path, str(exc)) from None
    return ParameterSpace(specs)


def parse_evaluator(d: dict, base_dir: Path) -> EvaluatorSpec:
    kind = _str(d, "kind", "evaluator", "synthetic_opamp", EVALUATOR_KINDS)
    if kind != "ngspice":
        return EvaluatorSpec(kind)
    timeout = _num(d, "timeout", "evaluator", 60.0, positive=True)
    template = Path(_str(d, "template", "evaluator"))
    if not template.is_absolute():
        template = (base_dir / template).resolve()
    if not template.is_file():
        raise ConfigError("evaluator.template", f"file not found: {template}")
    mmap = d.get("measurement_map")
    if not isinstance(mmap, dict):
        raise ConfigError("evaluator.measurement_map", "expected a mapping of simulator names to fields")
    try:
        normalize_measurement_map(mmap)
    except (TemplateError, KeyError, TypeError, ValueError, IndexError) as exc:
        raise ConfigError("evaluator.measurement_map", str(exc)) from None
    settings = {
        "template": str(template),
        "measurement_map": mmap,
        "executable": _str(d, "executable", "evaluator", "ngspice"),
    }
    return EvaluatorSpec("ngspice", settings, timeout)


def parse_config(raw: dict, base_dir: Optional[Path] = None) -> RunConfig:
    """Validate a raw config mapping; errors name the first failing field."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    base_dir = Path(base_dir or ".")
    mode = _str(raw, "mode", "", "acof", MODES)
    space = parse_space(raw.get("space"))
    t = raw.get("targets")
    if not isinstance(t, dict):
        raise ConfigError("targets", "expected a mapping with gain_db, ugbw_hz, pm_deg, power_w")
    targets = SpecTargets(*(_num(t, k, "targets", positive=True) for k in ("gain_db", "ugbw_hz", "pm_deg", "power_w")))
    evaluator = parse_evaluator(_section(raw, "evaluator"), base_dir)

    b = _section(raw, "budget")
    seed_budget = _num(b, "seed", "budget", 200, int, minimum=2)
    batch = _num(b, "batch", "budget", 10, int, minimum=1)
    round_budget = _num(b, "round", "budget", 100, int, minimum=batch)
    rounds = _num(b, "rounds", "budget", 0, int, minimum=0)

    acq = _section(raw, "acquisition")
    pool_size = _num(acq, "pool_size", "acquisition", 1024, int, minimum=batch)
    xi = _num(acq, "xi", "acquisition", 0.01, minimum=0.0)
    min_dist = _num(acq, "min_pairwise_distance", "acquisition", 0.05, minimum=0.0)

    g = _section(raw, "gp")
    gp = GPSettings(
        n_max=_num(g, "n_max", "gp", 600, int, minimum=2),
        n_best=_num(g, "n_best", "gp", 300, int, minimum=1),
        n_recent=_num(g, "n_recent", "gp", 300, int, minimum=1),
        hyper_subset=_num(g, "hyper_subset", "gp", 150, int, minimum=2),
    )
    penalize_invalid = _bool(g, "penalize_invalid", "gp", False)

    a = _section(raw, "agents")
    llm = _section(a, "llm")
    llm_settings = LLMSettings(
        base_url=_str(llm, "base_url", "agents.llm", LLMSettings.base_url),
        model=_str(llm, "model", "agents.llm", LLMSettings.model),
        temperature=_num(llm, "temperature", "agents.llm", 0.2, minimum=0.0),
        max_tokens=_num(llm, "max_tokens", "agents.llm", 2048, int, minimum=1),
        timeout=_num(llm, "timeout", "agents.llm", 120.0, positive=True),
    )
    if llm_settings.temperature > 2:
        raise ConfigError("agents.llm.temperature", "must be <= 2")
    templates_dir = a.get("templates_dir")
    if templates_dir is not None:
        templates_dir = str((base_dir / templates_dir).resolve())
    agents = AgentSettings(
        kind=_str(a, "kind", "agents", "heuristic", ("heuristic", "llm")),
        top_k=_num(a, "top_k", "agents", 10, int, minimum=1),
        margin=_num(a, "margin", "agents", 0.2, minimum=0.0),
        eps_min=_num(a, "eps_min", "agents", 0.01, positive=True),
        stagnation_tol=_num(a, "stagnation_tol", "agents", 0.01, minimum=0.0),
        memo_window=_num(a, "memo_window", "agents", 5, int, minimum=0),
        summary_size=_num(a, "summary_size", "agents", 10, int, minimum=1),
        max_retries=_num(a, "max_retries", "agents", 3, int, minimum=1),
        circuit=_str(a, "circuit", "agents", ""),
        templates_dir=templates_dir,
        llm=llm_settings,
    )
    if agents.eps_min > 1:
        raise ConfigError("agents.eps_min", "must be <= 1")

    m = _section(raw, "metrics")
    metrics = MetricsSettings(
        k=_num(m, "k", "metrics", 10, int, minimum=1),
        min_cluster_size=_num(m, "min_cluster_size", "metrics", 10, int, minimum=2),
        min_samples=_num(m, "min_samples", "metrics", 5, int, minimum=1),
        regret_include_seed=_bool(m, "regret_include_seed", "metrics", True),
    )
    return RunConfig(
        mode=mode,
        space=space,
        targets=targets,
        evaluator=evaluator,
        seed_budget=seed_budget,
        round_budget=round_budget,
        rounds=rounds,
        batch=batch,
        pool_size=pool_size,
        xi=xi,
        min_pairwise_distance=min_dist,
        gp=gp,
        penalize_invalid=penalize_invalid,
        agents=agents,
        metrics=metrics,
        seed=_num(raw, "seed", "", 0, int, minimum=0),
        parallel=_num(raw, "parallel", "", 1, int, minimum=1),
    )


def config_to_dict(cfg: RunConfig) -> dict:
    """Inverse of ``parse_config`` (file paths come out absolute)."""
    a, m, g = cfg.agents, cfg.metrics, cfg.gp
    ev: dict[str, Any] = {"kind": cfg.evaluator.kind}
    if cfg.evaluator.kind == "ngspice":
        ev.update(cfg.evaluator.settings)
        ev["timeout"] = cfg.evaluator.timeout
    return {
        "mode": cfg.mode,
        "seed": cfg.seed,
        "parallel": cfg.parallel,
        "budget": {"seed": cfg.seed_budget, "round": cfg.round_budget, "rounds": cfg.rounds, "batch": cfg.batch},
        "space": [
            {"name": p.name, "lower": p.lower, "upper": p.upper, "unit": p.unit, "scale": p.scale}
            for p in cfg.space
        ],
        "targets": cfg.targets.to_dict(),
        "evaluator": ev,
        "acquisition": {"pool_size": cfg.pool_size, "xi": cfg.xi,
                        "min_pairwise_distance": cfg.min_pairwise_distance},
        "gp": {"n_max": g.n_max, "n_best": g.n_best, "n_recent": g.n_recent, "hyper_subset": g.hyper_subset,
               "penalize_invalid": cfg.penalize_invalid},
        "agents": {
            "kind": a.kind, "top_k": a.top_k, "margin": a.margin, "eps_min": a.eps_min,
            "stagnation_tol": a.stagnation_tol, "memo_window": a.memo_window, "summary_size": a.summary_size,
            "max_retries": a.max_retries, "circuit": a.circuit, "templates_dir": a.templates_dir,
            "llm": {"base_url": a.llm.base_url, "model": a.llm.model, "temperature": a.llm.temperature,
                    "max_tokens": a.llm.max_tokens, "timeout": a.llm.timeout},
        },
        "metrics": {"k": m.k, "min_cluster_size": m.min_cluster_size, "min_samples": m.min_samples,
                    "regret_include_seed": m.regret_include_seed},
    }


def apply_overrides(raw: dict, overrides: Iterable[str]) -> dict:
    """Apply ``a.b.c=value`` overrides; values are parsed as YAML scalars."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(item, "override must look like key.path=value")
        path, value = item.split("=", 1)
        keys = path.strip().split(".")
        node = raw
        for k in keys[:-1]:
            if isinstance(node, list):
                node = node[int(k)]
            else:
                node = node.setdefault(k, {})
        last = keys[-1]
        val = yaml.safe_load(value)
        if isinstance(node, list):
            node[int(last)] = val
        else:
            node[last] = val
    return raw


def load_raw(path) -> dict:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(str(path), f"invalid YAML: {exc}") from None
    return raw or {}


def load_config(path, overrides: Iterable[str] = ()) -> tuple[RunConfig, dict]:
    raw = apply_overrides(load_raw(path), overrides)
    return parse_config(raw, Path(path).resolve().parent), raw
