"""Analytical planning and discrete-event simulation of large transformer training."""

from .cost_model import MemoryBreakdown, ParallelPlan, Strategy, memory_breakdown
from .hardware import HardwareProfile, LinkClass, default_a100_profile, intensity_threshold, named_profile
from .model_config import ModelShape, critical_batch, make_x_model, param_count
from .optimizer import (
    OptimizerConstraints,
    PlanEvaluation,
    evaluate,
    fastest_plan,
    min_cluster_for_deadline,
    scaling_sweep,
)

__all__ = [
    "HardwareProfile",
    "LinkClass",
    "MemoryBreakdown",
    "ModelShape",
    "OptimizerConstraints",
    "ParallelPlan",
    "PlanEvaluation",
    "Strategy",
    "critical_batch",
    "default_a100_profile",
    "evaluate",
    "fastest_plan",
    "intensity_threshold",
    "make_x_model",
    "memory_breakdown",
    "min_cluster_for_deadline",
    "named_profile",
    "param_count",
    "scaling_sweep",
]
