"""Plan evaluation and configuration search.

Training time assumes a fixed sample budget: ``steps`` optimizer steps at the
critical batch size. Training below the critical batch takes proportionally
more steps, so the time of a plan is ``steps * flops(b_c) / (n_gpu c eff)``
regardless of its own batch size.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import repeat
from typing import Iterable, Iterator

from .cost_model import (
    BUFFER_BYTES_PER_LAYER_PARAM,
    IntensityReport,
    MemoryBreakdown,
    ParallelPlan,
    Strategy,
    activation_bytes_per_token,
    batch_flops,
    checkpoint_offload_intensity,
    data_parallel_intensity,
    data_parallel_overlapped,
    memory_breakdown,
    pipeline_intensity,
    state_offload_intensity,
    tensor_intensity,
)
from .hardware import GIB, HardwareProfile, LinkClass, intensity_threshold
from .model_config import ModelShape, critical_batch, make_x_model, param_count

DAY = 86400.0
MONTH = 30 * DAY
YEAR = 365 * DAY

# (data, pipe, tensor) must be > 1 (True) or == 1 (False)
PARALLELISM = {
    "none": (False, False, False),
    "data": (True, False, False),
    "pipe": (False, True, False),
    "tensor": (False, False, True),
    "data+pipe": (True, True, False),
    "data+tensor": (True, False, True),
    "pipe+tensor": (False, True, True),
    "3d": (True, True, True),
}


def parse_parallelism(label: str) -> tuple[bool, bool, bool] | None:
    key = label.lower().replace(" ", "")
    if key in ("auto", "any", ""):
        return None
    if key not in PARALLELISM:
        raise ValueError(f"unknown parallelism {label!r}; expected auto or one of {', '.join(PARALLELISM)}")
    return PARALLELISM[key]


def parallelism_label(plan: ParallelPlan) -> str:
    dims = (plan.n_b > 1, plan.n_l > 1, plan.n_a > 1)
    for label, pattern in PARALLELISM.items():
        if pattern == dims:
            return label
    raise AssertionError(dims)


_IMPROVED_STATE = {"partitioned": (True,), "unpartitioned": (False,), "either": (True, False)}


@dataclass(frozen=True)
class OptimizerConstraints:
    epsilon: float = 0.25
    steps: int = 100_000
    max_gpus: int | None = None
    deadline: float | None = None  # seconds
    allow_offload: bool = True
    parallelism: str = "auto"
    max_na: int | None = None
    fixed_na: int | None = None
    offload_link: LinkClass = LinkClass.CpuGpu
    # b_mu = 1 and the fewest micro-batches that hide pipeline transfers
    compact_microbatches: bool = False
    # "pow2" searches n_a in powers of two, "any" in every integer
    tensor_degrees: str = "pow2"
    # allow n_a above the head count, bounded only by the overhead limit
    split_heads: bool = False
    # state handling searched for the improved strategy
    improved_state: str = "partitioned"  # or "unpartitioned", "either"

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError(f"epsilon must be in (0, 1], got {self.epsilon}")
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.deadline is not None and not self.deadline > 0:
            raise ValueError("deadline must be positive")
        parse_parallelism(self.parallelism)
        if self.tensor_degrees not in ("pow2", "any"):
            raise ValueError(f"tensor_degrees must be 'pow2' or 'any', got {self.tensor_degrees!r}")
        if self.improved_state not in _IMPROVED_STATE:
            raise ValueError(f"improved_state must be one of {', '.join(_IMPROVED_STATE)}")


@dataclass(frozen=True)
class PlanEvaluation:
    plan: ParallelPlan  # offload flags resolved
    efficiency: float
    training_time: float  # seconds
    memory: MemoryBreakdown
    intensities: IntensityReport
    bubble: float
    overheads: dict[str, float]  # non-overlapped traffic only
    pipeline_overlapped: bool
    resident_memory: float
    violations: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return not self.violations

    @property
    def offloaded(self) -> bool:
        return bool(self.plan.offload_state or self.plan.offload_checkpoints)

    def to_record(self) -> dict[str, object]:
        plan = self.plan
        mem = self.memory.in_gib()
        ints = self.intensities
        return {
            "parallelism": parallelism_label(plan),
            "method": plan.strategy.value,
            "partitioned": plan.partitioned,
            "offload": self.offloaded,
            "offload_state": bool(plan.offload_state),
            "offload_checkpoints": bool(plan.offload_checkpoints),
            "b": plan.b,
            "b_mu": plan.b_mu,
            "n_mu": plan.n_mu,
            "n_gpu": plan.n_gpu,
            "n_b": plan.n_b,
            "n_l": plan.n_l,
            "n_a": plan.n_a,
            "efficiency": self.efficiency,
            "time_s": self.training_time,
            "time_days": self.training_time / DAY,
            "bubble": self.bubble,
            **{f"{k}_gib": v for k, v in mem.items()},
            "resident_gib": self.resident_memory / GIB,
            "nu_b": ints.nu_b,
            "nu_l": ints.nu_l,
            "nu_a": ints.nu_a,
            "nu_s": ints.nu_s,
            "nu_c": ints.nu_c,
            "feasible": self.feasible,
            "violations": "; ".join(self.violations),
        }


def bubble_fraction(shape: ModelShape, plan: ParallelPlan) -> float:
    """Relative idle time from pipeline fill and drain."""
    if plan.n_mu < plan.n_l:
        raise ValueError("n_mu must be >= n_l")
    if plan.layered:
        return (plan.n_l - 1) * plan.n_l / (plan.n_mu * shape.d_l)
    return (plan.n_l - 1) / plan.n_mu


def _extra_microbatches(nu_l: float, nu_net: float, n_mu: int) -> int:
    return math.ceil(nu_net / nu_l * n_mu - 1e-12)


def extra_microbatches_for_overlap(shape: ModelShape, plan: ParallelPlan, profile: HardwareProfile) -> int:
    """Micro-batches beyond ``n_l`` needed to hide pipeline transfers."""
    nu_l = pipeline_intensity(shape, plan)
    if nu_l is None:
        return 0
    return _extra_microbatches(nu_l, _pipe_threshold(profile, plan.n_gpu), plan.n_mu)


def _pipe_threshold(profile: HardwareProfile, n_gpu: int) -> float:
    link = LinkClass.NvLink if n_gpu <= profile.gpus_per_node else profile.inter_node
    return intensity_threshold(profile, link)


class _Context:
    """Per-(shape, profile, constraints) constants shared by a search."""

    def __init__(self, shape: ModelShape, profile: HardwareProfile, constraints: OptimizerConstraints):
        self.shape = shape
        self.profile = profile
        self.constraints = constraints
        self.b_c = critical_batch(shape)
        self.b_max = math.floor(self.b_c + 1e-9)
        self.p = param_count(shape)
        self.m_0 = activation_bytes_per_token(shape)
        self.eps = constraints.epsilon
        self.nu_nvlink = intensity_threshold(profile, LinkClass.NvLink)
        self.nu_inter = intensity_threshold(profile, profile.inter_node)
        self.nu_pcie = intensity_threshold(profile, LinkClass.PciExpress)
        self.nu_off = intensity_threshold(profile, constraints.offload_link)
        self.nu_c = checkpoint_offload_intensity(shape)
        self.total_flops = constraints.steps * batch_flops(shape, self.b_c)
        self.required = parse_parallelism(constraints.parallelism)

    def time(self, n_gpu: int, eff: float, b: int) -> float:
        flops = self.total_flops if b <= self.b_c else self.constraints.steps * batch_flops(self.shape, b)
        return flops / (n_gpu * self.profile.c_gpu * eff)


_SCAN_LIMIT = 64

_OFFLOAD_ORDER = ((False, False), (False, True), (True, False), (True, True))


def _assess(ctx: _Context, plan: ParallelPlan, detail: bool = False):
    """Feasibility and efficiency of ``plan``.

    Returns ``(ok, efficiency, offload_state, offload_checkpoints)`` or, with
    ``detail``, a full :class:`PlanEvaluation`.
    """
    shape, profile, cons = ctx.shape, ctx.profile, ctx.constraints
    violations: list[str] = []
    overheads: dict[str, float] = {}
    n_gpu = plan.n_gpu

    if plan.b > ctx.b_c:
        violations.append(f"batch {plan.b} above critical batch {ctx.b_c:.1f}")
    if cons.max_gpus is not None and n_gpu > cons.max_gpus:
        violations.append(f"{n_gpu} GPUs above cap {cons.max_gpus}")

    single_node = n_gpu <= profile.gpus_per_node
    nu_link = ctx.nu_nvlink if single_node else ctx.nu_inter
    # flop^-1 traffic concurrently crossing each GPU's PCIe switch
    pcie_load = 0.0

    nu_a = tensor_intensity(shape, plan.n_a)
    if nu_a is not None:
        nu_net = intensity_threshold(profile, profile.link_for_tensor(plan.n_a))
        overheads["tensor"] = nu_net / nu_a
        if overheads["tensor"] > ctx.eps:
            violations.append(f"tensor overhead {overheads['tensor']:.3f} > {ctx.eps}")

    nu_b = data_parallel_intensity(shape, plan)
    if nu_b is not None:
        if data_parallel_overlapped(shape, plan):
            if nu_b < nu_link:
                violations.append(f"gradient reduction network-bound ({nu_b:.0f} < {nu_link:.0f} flop/B)")
            if not single_node:
                pcie_load += 1.0 / nu_b
        else:
            overheads["data"] = nu_link / nu_b
            if overheads["data"] > ctx.eps:
                violations.append(f"gradient reduction overhead {overheads['data']:.3f} > {ctx.eps}")

    nu_l = pipeline_intensity(shape, plan)
    pipe_overlapped = False
    if nu_l is not None:
        extra = _extra_microbatches(nu_l, nu_link, plan.n_mu)
        pipe_overlapped = nu_l > nu_link and plan.n_mu - plan.n_l >= extra
        if pipe_overlapped:
            if not single_node:
                pcie_load += 1.0 / nu_l
        else:
            if not plan.layered:
                violations.append(f"contiguous pipeline needs n_mu >= n_l + {extra} to hide transfers")
            overheads["pipeline"] = nu_link / nu_l
            if overheads["pipeline"] > ctx.eps:
                violations.append(f"pipeline overhead {overheads['pipeline']:.3f} > {ctx.eps}")

    bubble = bubble_fraction(shape, plan)
    eff = 1.0 / (1.0 + bubble)
    for ov in overheads.values():
        eff /= 1.0 + ov

    mem = memory_breakdown(shape, plan, ctx.m_0)
    nu_s = state_offload_intensity(shape, plan)
    options = [
        opt
        for opt in _OFFLOAD_ORDER
        if (plan.offload_state is None or opt[0] == plan.offload_state)
        and (plan.offload_checkpoints is None or opt[1] == plan.offload_checkpoints)
        and (cons.allow_offload or opt == (False, False) or plan.offload_state or plan.offload_checkpoints)
    ]
    chosen = None
    chosen_issues: list[str] = []
    for off_s, off_c in options:
        issues = []
        resident = mem.resident(off_s, off_c)
        if resident > profile.m_gpu:
            issues.append(f"resident memory {resident / GIB:.1f} GiB > {profile.m_gpu / GIB:.1f} GiB")
        load = pcie_load
        if off_s:
            load += 1.0 / nu_s
            if nu_s < ctx.nu_off:
                issues.append(f"state offload network-bound ({nu_s:.0f} < {ctx.nu_off:.0f} flop/B)")
        if off_c:
            load += 1.0 / ctx.nu_c
            if ctx.nu_c < ctx.nu_off:
                issues.append(f"checkpoint offload network-bound ({ctx.nu_c:.0f} < {ctx.nu_off:.0f} flop/B)")
        if (off_s or off_c) and load * ctx.nu_pcie > 1.0:
            issues.append(f"shared PCIe link oversubscribed ({load * ctx.nu_pcie:.2f}x)")
        if not issues:
            chosen, chosen_issues = (off_s, off_c), []
            break
        if chosen is None or (chosen_issues and not any("memory" in i for i in issues)
                              and any("memory" in i for i in chosen_issues)):
            chosen, chosen_issues = (off_s, off_c), issues
    violations.extend(chosen_issues)
    off_s, off_c = chosen

    if not detail:
        return (not violations, eff, off_s, off_c)

    resolved = replace(plan, offload_state=off_s, offload_checkpoints=off_c)
    return PlanEvaluation(
        plan=resolved,
        efficiency=eff,
        training_time=ctx.time(n_gpu, eff, plan.b),
        memory=mem,
        intensities=IntensityReport(
            nu_b=nu_b,
            nu_l=nu_l,
            nu_a=nu_a,
            nu_s=nu_s if off_s else None,
            nu_c=ctx.nu_c if off_c else None,
        ),
        bubble=bubble,
        overheads=overheads,
        pipeline_overlapped=pipe_overlapped,
        resident_memory=mem.resident(off_s, off_c),
        violations=tuple(violations),
    )


def evaluate(
    shape: ModelShape,
    plan: ParallelPlan,
    profile: HardwareProfile,
    constraints: OptimizerConstraints | None = None,
) -> PlanEvaluation:
    constraints = constraints or OptimizerConstraints()
    plan.validate(shape, split_heads=constraints.split_heads)
    return _assess(_Context(shape, profile, constraints), plan, detail=True)


# --------------------------------------------------------------------------- search


def _partition_options(ctx: _Context, strategy: Strategy) -> tuple[bool, ...]:
    if strategy is Strategy.Baseline:
        return (False,)
    if strategy is Strategy.Partitioned:
        return (True,)
    return _IMPROVED_STATE[ctx.constraints.improved_state]


def _na_candidates(ctx: _Context) -> list[int]:
    shape, cons = ctx.shape, ctx.constraints
    req = ctx.required
    top = math.inf if cons.split_heads else shape.d_a
    out = []
    n_a = 1
    while n_a <= top:
        nu_a = tensor_intensity(shape, n_a)
        if nu_a is not None:
            nu_net = intensity_threshold(ctx.profile, ctx.profile.link_for_tensor(n_a))
            # overhead only grows with n_a, also across the node boundary
            if nu_net / nu_a > ctx.eps:
                break
        ok = (
            (cons.max_na is None or n_a <= cons.max_na)
            and (cons.fixed_na is None or n_a == cons.fixed_na)
            and (req is None or req[2] == (n_a > 1))
        )
        if ok and _max_b_mu(ctx, n_a) >= 1:
            out.append(n_a)
        n_a = n_a + 1 if cons.tensor_degrees == "any" else 2 * n_a
    return out


def _max_b_mu(ctx: _Context, n_a: int) -> int:
    """Largest micro-batch whose buffers and live activations fit on one GPU.

    Neither can be offloaded, so this bounds every plan with tensor degree ``n_a``.
    """
    spare = ctx.profile.m_gpu - BUFFER_BYTES_PER_LAYER_PARAM * ctx.shape.p_l / n_a
    if spare <= 0:
        return 0
    return int(spare * n_a // (ctx.shape.d_s * ctx.m_0))


def _nl_range(ctx: _Context, strategy: Strategy) -> tuple[list[int], bool]:
    """Candidate pipeline degrees, plus whether only the largest feasible one counts."""
    d_l = ctx.shape.d_l
    req = ctx.required
    want_pipe = None if req is None else req[1]
    if strategy is Strategy.Partitioned:
        return ([] if want_pipe else [1]), False
    if strategy is Strategy.Baseline:
        # the baseline takes the deepest workable pipeline, or none at all
        return [n for n in range(d_l, 1, -1)] if want_pipe is not False else [], True
    lo = 2 if want_pipe else 1
    hi = 1 if want_pipe is False else d_l
    return list(range(lo, hi + 1)), False


def _factor_pairs(k: int, n_l: int, b_mu_cap: int | None = None) -> Iterator[tuple[int, int]]:
    """(n_mu, b_mu) with n_mu * b_mu == k and n_mu >= n_l, smallest b_mu first."""
    top = k // n_l if b_mu_cap is None else min(k // n_l, b_mu_cap)
    for b_mu in range(1, top + 1):
        if k % b_mu == 0:
            yield k // b_mu, b_mu


def _compact_microbatches(ctx: _Context, strategy: Strategy, n_l: int) -> int:
    """Smallest n_mu whose pipeline transfers hide behind compute across nodes."""
    if n_l == 1:
        return 1
    nu_l = pipeline_intensity(ctx.shape, ParallelPlan(strategy, n_l=n_l, n_mu=n_l))
    n_mu = n_l
    while n_mu - n_l < _extra_microbatches(nu_l, ctx.nu_inter, n_mu):
        n_mu += 1
        if n_mu > ctx.b_max:
            return ctx.b_max + 1
    return n_mu


def _k_values(ctx: _Context, strategy: Strategy, n_l: int) -> range:
    if ctx.constraints.compact_microbatches:
        k = _compact_microbatches(ctx, strategy, n_l)
        return range(k, k + 1)
    return range(n_l, ctx.b_max + 1)


def _splits(ctx: _Context, k: int, n_l: int, n_a: int) -> Iterator[tuple[int, int]]:
    if ctx.constraints.compact_microbatches:
        return iter(((k, 1),))
    return _factor_pairs(k, n_l, _max_b_mu(ctx, n_a))


def _nb_bounds(ctx: _Context, k: int, n_l: int, n_a: int) -> tuple[int, int]:
    lo, hi = 1, ctx.b_max // k
    if ctx.constraints.max_gpus is not None:
        hi = min(hi, ctx.constraints.max_gpus // (n_l * n_a))
    if ctx.required is not None:
        if ctx.required[0]:
            lo = 2
        else:
            hi = min(hi, 1)
    return lo, hi


def _bubble_coeff(strategy: Strategy, n_l: int, d_l: int) -> float:
    # bubble >= coeff / k because n_mu <= k
    if strategy is Strategy.Improved:
        return (n_l - 1) * n_l / d_l
    return float(n_l - 1)


def _tensor_factor(ctx: _Context, n_a: int) -> float:
    nu_a = tensor_intensity(ctx.shape, n_a)
    if nu_a is None:
        return 1.0
    return 1.0 / (1.0 + intensity_threshold(ctx.profile, ctx.profile.link_for_tensor(n_a)) / nu_a)


def _rank_key(ctx: _Context, n_gpu: int, eff: float, plan: ParallelPlan, by_gpus: bool) -> tuple:
    time = ctx.time(n_gpu, eff, plan.b)
    t = float(f"{time:.9e}")
    tail = (-plan.b, plan.b_mu, plan.n_a, plan.n_l, not plan.partitioned, plan.n_mu)
    return (n_gpu, t) + tail if by_gpus else (t, n_gpu) + tail


def _make_plan(strategy, partitioned, n_b, n_l, n_a, n_mu, b_mu) -> ParallelPlan:
    return ParallelPlan(
        strategy=strategy,
        n_b=n_b,
        n_l=n_l,
        n_a=n_a,
        n_mu=n_mu,
        b_mu=b_mu,
        state_partitioned=partitioned,
    )


def _relaxed_by_microbatches(ctx: _Context, n_l: int, n_mu: int, b_mu: int, nu_link: float) -> bool:
    """Whether the contiguous-pipeline constraints that ease with more
    micro-batches (transfer overlap, unhidden gradient reduction) hold."""
    shape = ctx.shape
    if n_l > 1:
        nu_l = (2 + shape.n_I) * shape.d_m * shape.d_l / n_l
        if n_mu - n_l < _extra_microbatches(nu_l, nu_link, n_mu):
            return False
        if 4 * n_l > shape.d_l and nu_link / (n_mu * b_mu * shape.d_s) > ctx.eps:
            return False
    return True


def _min_overlap_microbatches(n_l: int, nu_l: float, nu_net: float) -> int | float:
    """Fewest micro-batches that hide pipeline transfers (``math.inf`` if none do)."""
    if n_l == 1:
        return 1
    r = nu_net / nu_l
    if r >= 1:
        return math.inf
    n_mu = max(n_l, int(n_l / (1 - r)) - 2)
    while n_mu - n_l < _extra_microbatches(nu_l, nu_net, n_mu):
        n_mu += 1
    return n_mu


def _baseline_admits(ctx: _Context, n_l: int, n_a: int) -> bool:
    """Fast form of :func:`_admits_plan` for unpartitioned contiguous plans.

    Their intensities depend on ``b_mu`` but not on ``n_mu``, so once the
    constraints that ease with more micro-batches hold, a failing plan keeps
    failing as ``n_mu`` grows (only memory and the batch cap remain, and both
    tighten).
    """
    shape = ctx.shape
    nu_l = (2 + shape.n_I) * shape.d_m * shape.d_l / n_l if n_l > 1 else math.inf
    # a contiguous pipeline must hide its transfers, which rules out links it saturates
    inter_ok = nu_l > ctx.nu_inter
    single_node = n_l * n_a * _nb_bounds(ctx, n_l, n_l, n_a)[0] <= ctx.profile.gpus_per_node
    if not (inter_ok or single_node):
        return False
    # below this, transfers across nodes cannot be hidden
    first = n_l if single_node else _min_overlap_microbatches(n_l, nu_l, ctx.nu_inter)
    for b_mu in range(1, min(_max_b_mu(ctx, n_a), ctx.b_max // n_l) + 1):
        for n_mu in range(first, ctx.b_max // b_mu + 1):
            lo, hi = _nb_bounds(ctx, n_mu * b_mu, n_l, n_a)
            if hi < lo:
                break
            for n_b in sorted({lo, hi}):
                if _assess(ctx, _make_plan(Strategy.Baseline, False, n_b, n_l, n_a, n_mu, b_mu))[0]:
                    return True
            # link thresholds that larger n_mu (hence n_b <= hi) could still run under
            links = ([ctx.nu_nvlink] if single_node else []) + ([ctx.nu_inter] if inter_ok else [])
            if all(_relaxed_by_microbatches(ctx, n_l, n_mu, b_mu, nu) for nu in links):
                break
    return False


def _admits_plan(ctx: _Context, strategy: Strategy, partitioned: bool, n_l: int, n_a: int) -> bool:
    if strategy is Strategy.Baseline and not partitioned and not ctx.constraints.compact_microbatches:
        return _baseline_admits(ctx, n_l, n_a)
    for k in _k_values(ctx, strategy, n_l):
        lo, hi = _nb_bounds(ctx, k, n_l, n_a)
        if ctx.b_max // k < lo:
            break
        for n_mu, b_mu in _splits(ctx, k, n_l, n_a):
            for n_b in sorted({lo, hi}):
                if n_b <= hi and _assess(ctx, _make_plan(strategy, partitioned, n_b, n_l, n_a, n_mu, b_mu))[0]:
                    return True
    return False


def _pipe_needs_one_node(ctx: _Context, strategy: Strategy, n_l: int) -> bool:
    """Whether a layered pipeline's transfers are too slow for the inter-node link.

    Such transfers are never hidden across nodes and their overhead does not
    depend on the micro-batching, so only single-node plans remain.
    """
    if n_l < 2 or strategy is Strategy.Baseline:
        return False
    nu_l = pipeline_intensity(ctx.shape, ParallelPlan(strategy, n_l=n_l, n_mu=n_l))
    return nu_l <= ctx.nu_inter and ctx.nu_inter / nu_l > ctx.eps


def _pipeline_depths(ctx: _Context, strategy: Strategy, partitioned: bool, n_a: int) -> list[int]:
    """Pipeline depths searched for one tensor degree.

    The baseline only uses no pipeline or the deepest workable one.
    """
    nl_values, deepest_only = _nl_range(ctx, strategy)
    if not deepest_only:
        return nl_values
    out = [] if (ctx.required is not None and ctx.required[1]) else [1]
    for n_l in nl_values:
        if _admits_plan(ctx, strategy, partitioned, n_l, n_a):
            out.append(n_l)
            break
    return out


def _search_fastest(ctx: _Context, strategy: Strategy) -> ParallelPlan | None:
    d_l = ctx.shape.d_l
    best_key = None
    best_plan = None
    best_score = 0.0  # n_gpu * efficiency
    na_values = _na_candidates(ctx)

    def consider(plan: ParallelPlan, eff: float):
        nonlocal best_key, best_plan, best_score
        key = _rank_key(ctx, plan.n_gpu, eff, plan, by_gpus=False)
        if best_key is None or key < best_key:
            best_key, best_plan = key, plan
            best_score = plan.n_gpu * eff

    for partitioned in _partition_options(ctx, strategy):
        for n_a in reversed(na_values):
            tf = _tensor_factor(ctx, n_a)
            if n_a * ctx.b_max * tf < best_score * (1 - 1e-9):
                # n_a * tf only shrinks for smaller n_a on the same link
                if ctx.profile.link_for_tensor(n_a) == LinkClass.NvLink or n_a == 1:
                    break
                continue
            for n_l in _pipeline_depths(ctx, strategy, partitioned, n_a):
                c = _bubble_coeff(strategy, n_l, d_l)
                if strategy is Strategy.Improved and best_score > 0:
                    # ceiling over all k; it only falls as the pipeline deepens
                    if n_a * ctx.b_max * tf / (1.0 + c / n_l) < best_score * (1 - 1e-9):
                        break
                in_node = ctx.profile.gpus_per_node // (n_l * n_a)
                node_only = _pipe_needs_one_node(ctx, strategy, n_l)
                if node_only and (in_node < 1 or ctx.profile.gpus_per_node * tf < best_score * (1 - 1e-9)):
                    # both hold for every deeper pipeline too
                    break
                for k in _k_values(ctx, strategy, n_l):
                    lo, hi = _nb_bounds(ctx, k, n_l, n_a)
                    if ctx.b_max // k < lo:
                        break
                    # n_b <= b_max / k' and bubble >= c / k' for every k' >= k
                    if n_a * n_l * tf * ctx.b_max / (k + c) < best_score * (1 - 1e-9):
                        break
                    if node_only:
                        hi = min(hi, in_node)
                    if hi < lo:
                        continue
                    if n_a * n_l * hi * tf / (1.0 + c / k) < best_score * (1 - 1e-9):
                        continue
                    # the widest plan wins unless crossing nodes breaks it;
                    # then the widest single-node plan is the next candidate
                    widths = [hi]
                    if lo <= in_node < hi:
                        widths.append(in_node)
                    for n_mu, b_mu in _splits(ctx, k, n_l, n_a):
                        for n_b in widths:
                            plan = _make_plan(strategy, partitioned, n_b, n_l, n_a, n_mu, b_mu)
                            ok, eff, _, _ = _assess(ctx, plan)
                            if ok:
                                consider(plan, eff)
                                break
    return best_plan


def fastest_plan(
    shape: ModelShape,
    profile: HardwareProfile,
    strategy: Strategy,
    constraints: OptimizerConstraints | None = None,
) -> PlanEvaluation | None:
    """Fastest feasible plan for ``strategy``; ``None`` when nothing is feasible.

    The baseline only considers no pipeline or the deepest workable one, the
    partitioned strategy never pipelines, and the improved strategy searches
    every pipeline depth. Ties go to fewer GPUs, then the larger batch.
    """
    ctx = _Context(shape, profile, constraints or OptimizerConstraints())
    plan = _search_fastest(ctx, strategy)
    if plan is None:
        return None
    return _assess(ctx, plan, detail=True)


def min_cluster_for_deadline(
    shape: ModelShape,
    profile: HardwareProfile,
    strategy: Strategy,
    deadline: float,
    constraints: OptimizerConstraints | None = None,
) -> PlanEvaluation | None:
    """Smallest cluster whose plan finishes within ``deadline`` seconds."""
    if not deadline > 0:
        raise ValueError("deadline must be positive")
    cons = replace(constraints or OptimizerConstraints(), deadline=deadline)
    ctx = _Context(shape, profile, cons)
    need = 0.0 if math.isinf(deadline) else ctx.total_flops / (profile.c_gpu * deadline)

    best_key = None
    best_plan = None
    best_gpus = math.inf

    def settle(plan: ParallelPlan) -> bool:
        nonlocal best_key, best_plan, best_gpus
        ok, eff, _, _ = _assess(ctx, plan)
        if not ok or ctx.time(plan.n_gpu, eff, plan.b) > deadline * (1 + 1e-12):
            return False
        key = _rank_key(ctx, plan.n_gpu, eff, plan, by_gpus=True)
        if best_key is None or key < best_key:
            best_key, best_plan, best_gpus = key, plan, plan.n_gpu
        return True

    for partitioned in _partition_options(ctx, strategy):
        pairs = sorted(
            ((n_a, n_l) for n_a in _na_candidates(ctx) for n_l in _pipeline_depths(ctx, strategy, partitioned, n_a)),
            key=lambda t: (t[0] * t[1], t[1], t[0]),
        )
        for n_a, n_l in pairs:
            unit = n_a * n_l
            if unit * max(1, math.ceil(need / unit - 1e-9)) > best_gpus:
                continue
            for k in _k_values(ctx, strategy, n_l):
                lo, hi = _nb_bounds(ctx, k, n_l, n_a)
                if ctx.b_max // k < lo or unit * (ctx.b_max // k) < need:
                    break
                if hi < lo:
                    continue
                start = max(lo, math.ceil(need / unit - 1e-9))
                for n_mu, b_mu in _splits(ctx, k, n_l, n_a):
                    if hi - start <= _SCAN_LIMIT:
                        # small range: walk every data-parallel degree
                        for n_b in range(start, (hi if best_plan is None else min(hi, best_gpus // unit)) + 1):
                            if settle(_make_plan(strategy, partitioned, n_b, n_l, n_a, n_mu, b_mu)):
                                break
                        continue
                    # efficiency does not depend on n_b across nodes, so probe
                    # the widest plan and jump to the smallest sufficient n_b
                    ok, eff, _, _ = _assess(ctx, _make_plan(strategy, partitioned, hi, n_l, n_a, n_mu, b_mu))
                    if not ok:
                        continue
                    n_b = max(start, math.ceil(need / (unit * eff) * (1 - 1e-12)))
                    while n_b <= hi and unit * n_b <= best_gpus:
                        if settle(_make_plan(strategy, partitioned, n_b, n_l, n_a, n_mu, b_mu)):
                            break
                        n_b += 1
    if best_plan is None:
        return None
    return _assess(ctx, best_plan, detail=True)


# --------------------------------------------------------------------------- sweeps


@dataclass(frozen=True)
class SweepPoint:
    x: int
    p: int
    results: dict[Strategy, PlanEvaluation | None]
    mem_to_compute: dict[Strategy, float | None] = field(default_factory=dict)


@dataclass(frozen=True)
class SizeLimit:
    limit_s: float
    x: int | None  # largest swept x meeting the limit
    p: float | None  # its parameter count
    p_crossing: float | None  # log-log interpolated crossing between sweep points


@dataclass(frozen=True)
class SweepResult:
    points: list[SweepPoint]
    limits: dict[Strategy, dict[str, SizeLimit]]


def memory_to_compute_ratio(ev: PlanEvaluation, shape: ModelShape, profile: HardwareProfile,
                            deadline: float = MONTH, steps: int = 100_000) -> float:
    """Cluster memory per unit of compute rate needed to finish in ``deadline``.

    Only tensor parallelism is assumed to scale, which leaves the summed
    memory of the cluster unchanged, so this is the plan's total memory over
    ``total_flops / deadline`` (bytes per flop/s).
    """
    total_mem = ev.memory.total * ev.plan.n_gpu
    total_flops = steps * batch_flops(shape, critical_batch(shape))
    return total_mem * deadline / total_flops


def _limit(points: list[SweepPoint], strategy: Strategy, limit_s: float) -> SizeLimit:
    best_x = best_p = cross = None
    prev = None
    for pt in points:
        ev = pt.results.get(strategy)
        if ev is None:
            prev = None
            continue
        if ev.training_time <= limit_s:
            best_x, best_p = pt.x, float(pt.p)
        if prev is not None:
            (p0, t0), (p1, t1) = prev, (pt.p, ev.training_time)
            if t0 <= limit_s < t1:
                frac = (math.log(limit_s) - math.log(t0)) / (math.log(t1) - math.log(t0))
                cross = math.exp(math.log(p0) + frac * (math.log(p1) - math.log(p0)))
        prev = (pt.p, ev.training_time)
    return SizeLimit(limit_s=limit_s, x=best_x, p=best_p, p_crossing=cross if cross is not None else best_p)


def _sweep_point(x: int, profile: HardwareProfile, strategies: tuple[Strategy, ...],
                 cons: OptimizerConstraints) -> SweepPoint:
    shape = make_x_model(x)
    results = {s: fastest_plan(shape, profile, s, cons) for s in strategies}
    ratios = {
        s: (memory_to_compute_ratio(ev, shape, profile, MONTH, cons.steps) if ev is not None else None)
        for s, ev in results.items()
    }
    return SweepPoint(x=x, p=param_count(shape), results=results, mem_to_compute=ratios)


def scaling_sweep(
    x_values: Iterable[int],
    profile: HardwareProfile,
    strategies: Iterable[Strategy] = tuple(Strategy),
    constraints: OptimizerConstraints | None = None,
    workers: int = 1,
) -> SweepResult:
    """Fastest plan per strategy for each X_x, plus month and year size limits.

    With ``workers > 1`` the sizes are evaluated in separate processes; the
    result does not depend on the worker count.
    """
    xs = list(x_values)
    if not xs:
        raise ValueError("empty x range")
    for x in xs:
        make_x_model(x)  # validate before fanning out
    strategies = tuple(strategies)
    cons = constraints or OptimizerConstraints()
    if workers > 1 and len(xs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            points = list(pool.map(_sweep_point, xs, repeat(profile), repeat(strategies), repeat(cons)))
    else:
        points = [_sweep_point(x, profile, strategies, cons) for x in xs]
    limits = {s: {"month": _limit(points, s, MONTH), "year": _limit(points, s, YEAR)} for s in strategies}
    return SweepResult(points=points, limits=limits)
