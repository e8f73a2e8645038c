"""Closed-form compute, memory and arithmetic-intensity estimates.

All memory figures are bytes per GPU. Intensities are flops per byte of
traffic on the relevant link; ``None`` means the plan generates no traffic of
that kind.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .hardware import GIB
from .model_config import ModelShape, layer_param_count, param_count

# bytes per parameter for fp32 weights + Adam moments
STATE_BYTES_PER_PARAM = 12
# two parameter buffers and one gradient buffer of one layer, fp16
BUFFER_BYTES_PER_LAYER_PARAM = 6
CHECKPOINT_BYTES_PER_VALUE = 2

# live activation coefficients, bytes = 2 * (KAPPA_WIDTH * d_m + KAPPA_ATTN * d_a * d_s)
KAPPA_WIDTH = 35
KAPPA_ATTN = 2


class Strategy(enum.Enum):
    Baseline = "baseline"
    Partitioned = "partitioned"
    Improved = "improved"

    @classmethod
    def parse(cls, name: str) -> "Strategy":
        key = name.strip().lower()
        for s in cls:
            if key in (s.value, s.name.lower()):
                return s
        raise ValueError(f"unknown strategy {name!r}")


@dataclass(frozen=True)
class ParallelPlan:
    """A concrete distributed training configuration.

    ``state_partitioned`` defaults from the strategy (forced on for
    Partitioned, on for Improved, off for Baseline). Offload flags left as
    ``None`` are resolved by the evaluator.
    """

    strategy: Strategy
    n_b: int = 1
    n_l: int = 1
    n_a: int = 1
    n_mu: int = 1
    b_mu: int = 1
    state_partitioned: bool | None = None
    offload_state: bool | None = None
    offload_checkpoints: bool | None = None

    def __post_init__(self):
        for name in ("n_b", "n_l", "n_a", "n_mu", "b_mu"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.n_mu < self.n_l:
            raise ValueError(f"n_mu={self.n_mu} must be >= n_l={self.n_l}")
        if self.strategy is Strategy.Partitioned and self.state_partitioned is False:
            raise ValueError("the partitioned strategy always partitions the state")

    @property
    def b(self) -> int:
        return self.n_b * self.n_mu * self.b_mu

    @property
    def n_gpu(self) -> int:
        return self.n_b * self.n_l * self.n_a

    @property
    def partitioned(self) -> bool:
        if self.state_partitioned is not None:
            return self.state_partitioned
        return self.strategy is not Strategy.Baseline

    @property
    def layered(self) -> bool:
        return self.strategy is Strategy.Improved

    def validate(self, shape: ModelShape, split_heads: bool = False) -> None:
        """Check the plan fits the shape.

        With ``split_heads`` the tensor degree may exceed the head count (the
        feed-forward and per-head projections still split evenly).
        """
        if self.n_l > shape.d_l:
            raise ValueError(f"n_l={self.n_l} exceeds the layer count {shape.d_l}")
        if self.n_a > shape.d_a and not split_heads:
            raise ValueError(f"n_a={self.n_a} exceeds the head count {shape.d_a}")

    def describe(self) -> str:
        return (
            f"{self.strategy.value}: b={self.b} b_mu={self.b_mu} n_mu={self.n_mu} "
            f"n_b={self.n_b} n_l={self.n_l} n_a={self.n_a} n_gpu={self.n_gpu}"
        )


@dataclass(frozen=True)
class MemoryBreakdown:
    """Per-GPU memory in bytes, by category."""

    state: float
    checkpoints: float
    buffers: float
    layer_activations: float

    @property
    def offloadable(self) -> float:
        return self.state + self.checkpoints

    @property
    def non_offloadable(self) -> float:
        return self.buffers + self.layer_activations

    @property
    def total(self) -> float:
        return self.offloadable + self.non_offloadable

    def resident(self, offload_state: bool, offload_checkpoints: bool) -> float:
        """Bytes that stay on the GPU given the offload choices."""
        return (
            self.non_offloadable
            + (0.0 if offload_state else self.state)
            + (0.0 if offload_checkpoints else self.checkpoints)
        )

    def in_gib(self) -> dict[str, float]:
        return {
            "state": self.state / GIB,
            "checkpoint": self.checkpoints / GIB,
            "buffers": self.buffers / GIB,
            "activations": self.layer_activations / GIB,
            "offloadable": self.offloadable / GIB,
            "non_offloadable": self.non_offloadable / GIB,
        }


@dataclass(frozen=True)
class IntensityReport:
    nu_b: float | None = None
    nu_l: float | None = None
    nu_a: float | None = None
    nu_s: float | None = None
    nu_c: float | None = None


def batch_flops(shape: ModelShape, b: float) -> float:
    """Forward 2 b d_s p, backward with recomputation 3x that."""
    return 8.0 * b * shape.d_s * param_count(shape)


def activation_bytes_per_token(
    shape: ModelShape, kappa_width: float = KAPPA_WIDTH, kappa_attn: float = KAPPA_ATTN
) -> float:
    """Live activation + gradient bytes per token inside one layer (fp16)."""
    return 2.0 * (kappa_width * shape.d_m + kappa_attn * shape.d_a * shape.d_s)


def memory_breakdown(shape: ModelShape, plan: ParallelPlan, m_0: float | None = None) -> MemoryBreakdown:
    if plan.n_l > shape.d_l:
        raise ValueError(f"n_l={plan.n_l} exceeds the layer count {shape.d_l}")
    if m_0 is None:
        m_0 = activation_bytes_per_token(shape)
    p = param_count(shape)
    state_split = plan.n_gpu if plan.partitioned else plan.n_l * plan.n_a
    return MemoryBreakdown(
        state=STATE_BYTES_PER_PARAM * p / state_split,
        checkpoints=CHECKPOINT_BYTES_PER_VALUE * plan.b * shape.d_s * shape.d_m * shape.d_l / plan.n_gpu,
        buffers=BUFFER_BYTES_PER_LAYER_PARAM * layer_param_count(shape) / plan.n_a,
        layer_activations=plan.b * shape.d_s * m_0 / (plan.n_b * plan.n_mu * plan.n_a),
    )


def data_parallel_overlapped(shape: ModelShape, plan: ParallelPlan) -> bool:
    """Whether the gradient reduction can hide behind the backward pass.

    A contiguous pipeline leaves almost nothing to overlap with once each
    stage holds only a few layers, so the baseline switches to the
    non-overlapped accounting above ``n_l > d_l / 4``.
    """
    if plan.layered or plan.partitioned:
        return True
    return not (plan.n_l > 1 and 4 * plan.n_l > shape.d_l)


def data_parallel_intensity(shape: ModelShape, plan: ParallelPlan) -> float | None:
    if plan.n_b < 2:
        return None
    per_instance = plan.b * shape.d_s / plan.n_b
    if plan.layered:
        return per_instance / 2 if plan.partitioned else 3 * per_instance / 4
    if plan.partitioned:
        return per_instance / (2 * plan.n_mu)
    if not data_parallel_overlapped(shape, plan):
        return per_instance
    return 3 * per_instance / (4 * plan.n_mu)


def pipeline_intensity(shape: ModelShape, plan: ParallelPlan) -> float | None:
    if plan.n_l < 2:
        return None
    per_layer = (2 + shape.n_I) * shape.d_m
    if plan.layered:
        return float(per_layer)
    return per_layer * shape.d_l / plan.n_l


def tensor_intensity(shape: ModelShape, n_a: int) -> float | None:
    if n_a < 2:
        return None
    return (4 + 2 * shape.n_I) * shape.d_m / (3 * (n_a - 1))


def state_offload_intensity(shape: ModelShape, plan: ParallelPlan) -> float:
    tokens = plan.b * shape.d_s
    if plan.layered:
        return tokens if plan.partitioned else tokens / plan.n_b
    if plan.partitioned:
        return tokens / plan.n_mu
    return tokens / (plan.n_mu * plan.n_b)


def checkpoint_offload_intensity(shape: ModelShape) -> float:
    return float((4 + 2 * shape.n_I) * shape.d_m)


def offload_intensities(
    shape: ModelShape, plan: ParallelPlan, offload_state: bool = True, offload_checkpoints: bool = True
) -> tuple[float | None, float | None]:
    nu_s = state_offload_intensity(shape, plan) if offload_state else None
    nu_c = checkpoint_offload_intensity(shape) if offload_checkpoints else None
    return nu_s, nu_c


def overlap_overhead(nu_op: float, nu_net: float, overlapped: bool) -> float:
    """Relative time overhead of a transfer against the computation it accompanies.

    Non-overlapped traffic always costs ``nu_net / nu_op``. Overlapped traffic
    is free while compute-bound; past the knee the covered region stretches by
    ``nu_net / nu_op``, i.e. an overhead of ``nu_net / nu_op - 1``.
    """
    if nu_op <= 0 or nu_net <= 0:
        raise ValueError("intensities must be positive")
    ratio = nu_net / nu_op
    if not overlapped:
        return ratio
    return max(0.0, ratio - 1.0)
