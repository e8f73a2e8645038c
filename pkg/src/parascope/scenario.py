"""Scenario files: model, hardware, strategies and search constraints.

A scenario is a YAML (or JSON) mapping::

    model: {x: 160}            # or {name: gpt-3}, or d_l/d_a/d_h/d_s/n_I
    profile: a100-80g-ib       # or a mapping understood by profile_from_config
    strategies: [improved]
    constraints: {epsilon: 0.25, deadline_days: 180, max_na: 1}
    plan: {strategy: improved, n_b: 483, n_l: 5, n_a: 16, n_mu: 5, b_mu: 1}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping

import yaml

from .cost_model import ParallelPlan, Strategy
from .hardware import HardwareProfile, named_profile, profile_from_config
from .model_config import ModelShape, make_x_model, shape_from_config
from .optimizer import DAY, OptimizerConstraints


@dataclass
class Scenario:
    shape: ModelShape
    profile: HardwareProfile
    strategies: tuple[Strategy, ...] = tuple(Strategy)
    constraints: OptimizerConstraints = field(default_factory=OptimizerConstraints)
    plan: ParallelPlan | None = None
    options: dict[str, Any] = field(default_factory=dict)


_CONSTRAINT_FIELDS = {f.name for f in fields(OptimizerConstraints)}


def constraints_from_config(cfg: Mapping[str, Any]) -> OptimizerConstraints:
    kwargs = dict(cfg)
    if "deadline_days" in kwargs:
        days = kwargs.pop("deadline_days")
        kwargs["deadline"] = None if days is None else float(days) * DAY
    unknown = set(kwargs) - _CONSTRAINT_FIELDS
    if unknown:
        raise ValueError(f"unknown constraint(s): {', '.join(sorted(unknown))}")
    return OptimizerConstraints(**kwargs)


def plan_from_config(cfg: Mapping[str, Any]) -> ParallelPlan:
    kwargs = dict(cfg)
    kwargs["strategy"] = Strategy.parse(str(kwargs.get("strategy", "improved")))
    return ParallelPlan(**kwargs)


def scenario_from_config(cfg: Mapping[str, Any]) -> Scenario:
    model = cfg.get("model", {"x": 160})
    shape = make_x_model(int(model)) if isinstance(model, int) else shape_from_config(model)
    prof = cfg.get("profile", "a100-80g-ib")
    profile = named_profile(prof) if isinstance(prof, str) else profile_from_config(prof)
    strategies = cfg.get("strategies")
    if isinstance(strategies, str):
        strategies = [strategies]
    return Scenario(
        shape=shape,
        profile=profile,
        strategies=tuple(Strategy.parse(s) for s in strategies) if strategies else tuple(Strategy),
        constraints=constraints_from_config(cfg.get("constraints") or {}),
        plan=plan_from_config(cfg["plan"]) if cfg.get("plan") else None,
        options=dict(cfg.get("options") or {}),
    )


def load_config(path: str | Path) -> dict[str, Any]:
    path = Path(path)
    text = path.read_text()
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ValueError(f"{path}: expected a mapping at top level")
    return data


def load_scenario(path: str | Path) -> Scenario:
    return scenario_from_config(load_config(path))
