"""Discrete-event simulation of micro-batched training schedules.

One data-parallel instance is simulated: ``n_l`` pipeline devices, each with a
compute stream and three transfer streams. Compute tasks run in the device's
program order; transfer streams serve released tasks first-come first-served
(by ready time, then micro-batch, then layer).

Mixed buffering (two parameter buffers, one gradient buffer per device) is
enforced with capacity edges in the dependency graph. A restore may not start
until the buffer it reuses is released, and the gradient half of a backward
task may not start until the previous layer's reduction has freed the
gradient buffer. A backward task is one third recomputation, two thirds
gradient computation.
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import math
from collections import defaultdict
from dataclasses import dataclass, field

from .cost_model import ParallelPlan
from .hardware import HardwareProfile, LinkClass
from .model_config import ModelShape, layer_param_count

RECOMPUTE_FRACTION = 1.0 / 3.0


class ScheduleKind(enum.Enum):
    StdGA = "std-ga"
    LayeredGA = "layered-ga"
    StdPipe = "std-pipe"
    ModularPipe = "modular-pipe"

    @classmethod
    def parse(cls, name: "str | ScheduleKind") -> "ScheduleKind":
        if isinstance(name, ScheduleKind):
            return name
        key = name.strip().lower().replace("_", "-")
        for kind in cls:
            if key in (kind.value, kind.name.lower()):
                return kind
        raise ValueError(f"unknown schedule kind {name!r}; expected one of {', '.join(k.value for k in cls)}")

    @property
    def layered(self) -> bool:
        return self in (ScheduleKind.LayeredGA, ScheduleKind.ModularPipe)

    @property
    def pipelined(self) -> bool:
        return self in (ScheduleKind.StdPipe, ScheduleKind.ModularPipe)


class TaskKind(enum.Enum):
    Forward = "forward"
    BackwardWithRecompute = "backward"
    Restore = "restore"
    Reduce = "reduce"
    PipeSend = "pipe_send"
    OffloadWrite = "offload_write"


class Stream(enum.Enum):
    Compute = "compute"
    DataNet = "data_net"
    PipeNet = "pipe_net"
    HostLink = "host_link"


_STREAM_OF = {
    TaskKind.Forward: Stream.Compute,
    TaskKind.BackwardWithRecompute: Stream.Compute,
    TaskKind.Restore: Stream.DataNet,
    TaskKind.Reduce: Stream.DataNet,
    TaskKind.PipeSend: Stream.PipeNet,
    TaskKind.OffloadWrite: Stream.HostLink,
}


@dataclass
class Task:
    id: int
    kind: TaskKind
    device: int
    layer: int
    micro_batch: int
    duration: float
    nbytes: float = 0.0
    # (task id, lag): start >= end(dep) - lag
    deps: list[tuple[int, float]] = field(default_factory=list)

    @property
    def stream(self) -> Stream:
        return _STREAM_OF[self.kind]


@dataclass
class Schedule:
    """Dependency graph plus per-device compute program order."""

    kind: ScheduleKind
    n_devices: int
    tasks: list[Task]
    programs: list[list[int]]  # compute task ids per device, in execution order
    # (restore id, ids of compute tasks reading that buffer)
    param_groups: list[list[tuple[int, list[int]]]]
    # (ids of backward tasks writing the buffer, reduce id)
    grad_groups: list[list[tuple[list[int], int]]]
    compute_per_device: float  # ideal busy seconds per device


@dataclass(frozen=True)
class SimBandwidth:
    """Bytes/s per transfer stream; ``math.inf`` makes transfers free."""

    data: float
    pipe: float
    host: float

    def __post_init__(self):
        for name in ("data", "pipe", "host"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} bandwidth must be positive, got {getattr(self, name)}")

    @classmethod
    def from_profile(cls, profile: HardwareProfile) -> "SimBandwidth":
        return cls(
            data=profile.bandwidth[profile.inter_node],
            pipe=profile.bandwidth[profile.inter_node],
            host=profile.bandwidth.get(LinkClass.CpuGpu, math.inf),
        )

    @classmethod
    def infinite(cls) -> "SimBandwidth":
        return cls(math.inf, math.inf, math.inf)


def layer_owner(kind: ScheduleKind, layer: int, d_l: int, n_l: int) -> int:
    if kind is ScheduleKind.ModularPipe:
        return layer % n_l
    return layer // (d_l // n_l)


def build_schedule(
    shape: ModelShape,
    plan: ParallelPlan,
    kind: ScheduleKind | str,
    profile: HardwareProfile,
    bandwidth: SimBandwidth | None = None,
    enforce_buffering: bool = True,
) -> Schedule:
    """Task graph of one data-parallel instance running ``plan`` with ``kind``.

    Reductions exist when ``n_b > 1``; restores when the state is also
    partitioned. Layered schedules restore and reduce once per layer and pass,
    the others once per (layer, micro-batch) when partitioned.
    """
    kind = ScheduleKind.parse(kind)
    bw = bandwidth or SimBandwidth.from_profile(profile)
    d_l, n_l, n_mu = shape.d_l, plan.n_l, plan.n_mu
    if n_l > d_l:
        raise ValueError(f"n_l={n_l} exceeds the layer count {d_l}")
    if not kind.pipelined and n_l != 1:
        raise ValueError(f"{kind.value} runs without pipeline parallelism (n_l must be 1)")
    if kind.pipelined and d_l % n_l:
        raise ValueError(f"{kind.value} needs n_l to divide d_l ({n_l} does not divide {d_l})")

    p_l = layer_param_count(shape)
    t_fwd = 2.0 * plan.b_mu * shape.d_s * p_l / (plan.n_a * profile.c_gpu)
    t_bwd = 3.0 * t_fwd
    pipe_bytes = 4.0 * plan.b_mu * shape.d_s * shape.d_m / plan.n_a
    ckpt_bytes = 2.0 * plan.b_mu * shape.d_s * shape.d_m / plan.n_a
    data_parallel = plan.n_b > 1
    restoring = data_parallel and plan.partitioned
    restore_bytes = 4.0 * p_l / plan.n_a
    reduce_bytes = (4.0 if plan.partitioned else 8.0) * p_l / plan.n_a
    offload_ckpt = bool(plan.offload_checkpoints)

    tasks: list[Task] = []

    def add(kind_, device, layer, mb, nbytes=0.0, duration=None, deps=()):
        if duration is None:
            rate = {TaskKind.Restore: bw.data, TaskKind.Reduce: bw.data,
                    TaskKind.PipeSend: bw.pipe, TaskKind.OffloadWrite: bw.host}[kind_]
            duration = nbytes / rate
        task = Task(len(tasks), kind_, device, layer, mb, duration, nbytes, [(d, 0.0) for d in deps])
        tasks.append(task)
        return task.id

    owner = [layer_owner(kind, layer, d_l, n_l) for layer in range(d_l)]
    fwd = {}
    bwd = {}
    for layer in range(d_l):
        for mb in range(n_mu):
            fwd[layer, mb] = add(TaskKind.Forward, owner[layer], layer, mb, duration=t_fwd)
            bwd[layer, mb] = add(TaskKind.BackwardWithRecompute, owner[layer], layer, mb, duration=t_bwd)

    # activations between layers, and gradients back
    for layer in range(d_l):
        for mb in range(n_mu):
            f, b = tasks[fwd[layer, mb]], tasks[bwd[layer, mb]]
            if layer > 0:
                prev = fwd[layer - 1, mb]
                if owner[layer - 1] != owner[layer]:
                    prev = add(TaskKind.PipeSend, owner[layer - 1], layer - 1, mb, pipe_bytes, deps=(prev,))
                f.deps.append((prev, 0.0))
            if layer < d_l - 1:
                nxt = bwd[layer + 1, mb]
                if owner[layer + 1] != owner[layer]:
                    nxt = add(TaskKind.PipeSend, owner[layer + 1], layer + 1, mb, pipe_bytes, deps=(nxt,))
                b.deps.append((nxt, 0.0))
            else:
                b.deps.append((fwd[layer, mb], 0.0))
            if offload_ckpt:
                add(TaskKind.OffloadWrite, owner[layer], layer, mb, ckpt_bytes, deps=(fwd[layer, mb],))

    # compute program order
    programs: list[list[int]] = [[] for _ in range(n_l)]
    if kind is ScheduleKind.StdGA:
        for mb in range(n_mu):
            programs[0] += [fwd[layer, mb] for layer in range(d_l)]
            programs[0] += [bwd[layer, mb] for layer in reversed(range(d_l))]
    elif kind is ScheduleKind.StdPipe:
        for dev in range(n_l):
            mine = [layer for layer in range(d_l) if owner[layer] == dev]
            for mb in range(n_mu):
                programs[dev] += [fwd[layer, mb] for layer in mine]
            for mb in range(n_mu):
                programs[dev] += [bwd[layer, mb] for layer in reversed(mine)]
    else:
        for dev in range(n_l):
            mine = [layer for layer in range(d_l) if owner[layer] == dev]
            for layer in mine:
                programs[dev] += [fwd[layer, mb] for mb in range(n_mu)]
            for layer in reversed(mine):
                programs[dev] += [bwd[layer, mb] for mb in range(n_mu)]

    # weight restores and gradient reductions
    param_groups: list[list[tuple[int, list[int]]]] = [[] for _ in range(n_l)]
    grad_groups: list[list[tuple[list[int], int]]] = [[] for _ in range(n_l)]
    if data_parallel:
        for dev in range(n_l):
            if kind.layered:
                # one buffer fill per (layer, pass) and one reduction per layer
                runs: list[tuple[int, bool, list[int]]] = []
                for tid in programs[dev]:
                    t = tasks[tid]
                    is_bwd = t.kind is TaskKind.BackwardWithRecompute
                    if runs and runs[-1][0] == t.layer and runs[-1][1] == is_bwd:
                        runs[-1][2].append(tid)
                    else:
                        runs.append((t.layer, is_bwd, [tid]))
                for layer, is_bwd, uses in runs:
                    if restoring:
                        r = add(TaskKind.Restore, dev, layer, 0, restore_bytes)
                        param_groups[dev].append((r, uses))
                    if is_bwd:
                        red = add(TaskKind.Reduce, dev, layer, n_mu - 1, reduce_bytes, deps=uses)
                        grad_groups[dev].append((uses, red))
            else:
                for tid in programs[dev]:
                    t = tasks[tid]
                    is_bwd = t.kind is TaskKind.BackwardWithRecompute
                    if restoring:
                        r = add(TaskKind.Restore, dev, t.layer, t.micro_batch, restore_bytes)
                        param_groups[dev].append((r, [tid]))
                        if is_bwd:
                            red = add(TaskKind.Reduce, dev, t.layer, t.micro_batch, reduce_bytes, deps=(tid,))
                            grad_groups[dev].append(([tid], red))
                if not restoring:
                    # gradients accumulate locally; reduce after the last micro-batch
                    for layer in range(d_l):
                        if owner[layer] == dev:
                            last = bwd[layer, n_mu - 1]
                            add(TaskKind.Reduce, dev, layer, n_mu - 1, reduce_bytes, deps=(last,))

    for dev in range(n_l):
        groups = param_groups[dev]
        for k, (restore, uses) in enumerate(groups):
            for use in uses:
                tasks[use].deps.append((restore, 0.0))
            if enforce_buffering and k >= 2:
                tasks[restore].deps.append((groups[k - 2][1][-1], 0.0))
        if enforce_buffering:
            ggroups = grad_groups[dev]
            for k in range(1, len(ggroups)):
                first = tasks[ggroups[k][0][0]]
                first.deps.append((ggroups[k - 1][1], RECOMPUTE_FRACTION * first.duration))

    compute = (t_fwd + t_bwd) * n_mu * d_l / n_l
    return Schedule(kind, n_l, tasks, programs, param_groups, grad_groups, compute)


# --------------------------------------------------------------------------- execution


@dataclass(frozen=True)
class TraceRecord:
    device: int
    stream: str
    kind: str
    layer: int
    micro_batch: int
    start_s: float
    end_s: float


@dataclass
class Timeline:
    schedule: Schedule
    start: list[float]
    end: list[float]
    ready: list[float]
    makespan: float
    idle_fraction: list[float]
    peak_bandwidth: dict[Stream, float]
    buffer_high_water: dict[str, int]

    def intervals(self, device: int, stream: Stream) -> list[tuple[float, float, Task]]:
        out = [
            (self.start[t.id], self.end[t.id], t)
            for t in self.schedule.tasks
            if t.device == device and t.stream is stream
        ]
        return sorted(out, key=lambda r: (r[0], r[1], r[2].id))

    def busy(self, device: int, stream: Stream) -> float:
        return sum(e - s for s, e, _ in self.intervals(device, stream))

    def records(self) -> list[TraceRecord]:
        rows = [
            TraceRecord(t.device, t.stream.value, t.kind.value, t.layer, t.micro_batch, self.start[t.id], self.end[t.id])
            for t in self.schedule.tasks
        ]
        return sorted(rows, key=lambda r: (r.device, r.stream, r.start_s, r.end_s, r.kind, r.layer, r.micro_batch))

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["device", "stream", "kind", "layer", "micro_batch", "start_s", "end_s"])
        for r in self.records():
            writer.writerow([r.device, r.stream, r.kind, r.layer, r.micro_batch, repr(r.start_s), repr(r.end_s)])
        return buf.getvalue()

    def summary(self) -> dict[str, object]:
        return {
            "schedule": self.schedule.kind.value,
            "makespan_s": self.makespan,
            "idle_fraction": max(self.idle_fraction),
            **{f"peak_bw_{s.value}": v for s, v in self.peak_bandwidth.items()},
            "parameter_buffers": self.buffer_high_water["parameter_buffers"],
            "gradient_buffers": self.buffer_high_water["gradient_buffers"],
        }


def _check_acyclic(schedule: Schedule) -> None:
    n = len(schedule.tasks)
    succ: list[list[int]] = [[] for _ in range(n)]
    indeg = [0] * n
    for t in schedule.tasks:
        for d, _ in t.deps:
            succ[d].append(t.id)
            indeg[t.id] += 1
    for program in schedule.programs:
        for a, b in zip(program, program[1:]):
            succ[a].append(b)
            indeg[b] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    if seen != n:
        raise ValueError("schedule has a dependency cycle")


def simulate(schedule: Schedule) -> Timeline:
    """List-schedule the graph; deterministic for a given schedule."""
    _check_acyclic(schedule)
    tasks = schedule.tasks
    n = len(tasks)
    for t in tasks:
        if not t.duration >= 0 or math.isnan(t.duration):
            raise ValueError(f"task {t.id} has invalid duration {t.duration}")
    start = [math.nan] * n
    end = [math.nan] * n
    ready = [0.0] * n
    missing = [len(t.deps) for t in tasks]
    dependents: list[list[int]] = [[] for _ in range(n)]
    for t in tasks:
        for d, _ in t.deps:
            dependents[d].append(t.id)

    free: dict[tuple[int, Stream], float] = defaultdict(float)
    queues: dict[tuple[int, Stream], list] = defaultdict(list)
    cursor = [0] * schedule.n_devices
    released = [False] * n
    done = 0

    def place(tid: int, at: float):
        nonlocal done
        t = tasks[tid]
        start[tid] = at
        end[tid] = at + t.duration
        free[t.device, t.stream] = end[tid]
        done += 1
        for j in dependents[tid]:
            missing[j] -= 1
            if missing[j] == 0:
                release(j)

    def release(tid: int):
        t = tasks[tid]
        ready[tid] = max((end[d] - lag for d, lag in t.deps), default=0.0)
        released[tid] = True
        if t.stream is not Stream.Compute:
            heapq.heappush(queues[t.device, t.stream], (ready[tid], t.micro_batch, t.layer, tid))

    def run_compute():
        progress = True
        while progress:
            progress = False
            for dev, program in enumerate(schedule.programs):
                while cursor[dev] < len(program) and released[program[cursor[dev]]]:
                    tid = program[cursor[dev]]
                    cursor[dev] += 1
                    place(tid, max(ready[tid], free[dev, Stream.Compute]))
                    progress = True

    for t in tasks:
        if missing[t.id] == 0:
            release(t.id)
    while True:
        run_compute()
        if done == n:
            break
        best = None
        for key in sorted(queues, key=lambda k: (k[0], k[1].value)):
            q = queues[key]
            if q:
                at = max(free[key], q[0][0])
                if best is None or at < best[0]:
                    best = (at, key)
        if best is None:
            raise ValueError("schedule deadlocked")
        at, key = best
        _, _, _, tid = heapq.heappop(queues[key])
        place(tid, at)

    makespan = max(end) if n else 0.0
    idle = []
    for dev in range(schedule.n_devices):
        busy = sum(tasks[i].duration for i in schedule.programs[dev])
        idle.append(1.0 - busy / makespan if makespan > 0 else 0.0)
    timeline = Timeline(schedule, start, end, ready, makespan, idle, {}, {})
    timeline.peak_bandwidth = {s: _peak_bandwidth(timeline, s) for s in Stream if s is not Stream.Compute}
    report = verify_buffering(timeline)
    timeline.buffer_high_water = {
        "parameter_buffers": report.parameter_high_water,
        "gradient_buffers": report.gradient_high_water,
    }
    return timeline


def _peak_bandwidth(timeline: Timeline, stream: Stream) -> float:
    """Highest transfer rate the stream must sustain to keep up with demand.

    Transfers released at the same instant form a burst; a burst must be
    moved before the next one arrives, so its rate is bytes over the gap to
    the next release. The final burst has no following work to hide behind
    and is left out.
    """
    peak = 0.0
    for dev in range(timeline.schedule.n_devices):
        bursts: dict[float, float] = defaultdict(float)
        for t in timeline.schedule.tasks:
            if t.device == dev and t.stream is stream and t.nbytes > 0:
                bursts[timeline.ready[t.id]] += t.nbytes
        times = sorted(bursts)
        for a, b in zip(times, times[1:]):
            peak = max(peak, bursts[a] / (b - a))
        if len(times) == 1 and timeline.makespan > times[0]:
            peak = max(peak, bursts[times[0]] / (timeline.makespan - times[0]))
    return peak


# --------------------------------------------------------------------------- checks


@dataclass(frozen=True)
class BufferingReport:
    parameter_high_water: int
    gradient_high_water: int
    # (device, "parameter" | "gradient", start_s, end_s) where the limit is exceeded
    violations: tuple[tuple[int, str, float, float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _high_water(intervals: list[tuple[float, float]], limit: int) -> tuple[int, list[tuple[float, float]]]:
    events = sorted([(s, 1) for s, e in intervals if e > s] + [(e, -1) for s, e in intervals if e > s])
    level = peak = 0
    over: list[tuple[float, float]] = []
    opened = None
    for when, step in events:
        level += step
        peak = max(peak, level)
        if level > limit and opened is None:
            opened = when
        elif level <= limit and opened is not None:
            over.append((opened, when))
            opened = None
    return peak, over


def verify_buffering(timeline: Timeline, parameter_limit: int = 2, gradient_limit: int = 1) -> BufferingReport:
    """Measure buffer occupancy on the executed timeline.

    A parameter buffer is held from the start of its restore to the end of
    its last reader; the gradient buffer from the start of the first gradient
    computation into it to the end of its reduction.
    """
    sched = timeline.schedule
    start, end = timeline.start, timeline.end
    p_peak = g_peak = 0
    violations = []
    for dev in range(sched.n_devices):
        p_int = [(start[r], end[uses[-1]]) for r, uses in sched.param_groups[dev]]
        g_int = []
        for writers, red in sched.grad_groups[dev]:
            first = sched.tasks[writers[0]]
            g_int.append((start[first.id] + RECOMPUTE_FRACTION * first.duration, end[red]))
        peak, over = _high_water(p_int, parameter_limit)
        p_peak = max(p_peak, peak)
        violations += [(dev, "parameter", s, e) for s, e in over]
        peak, over = _high_water(g_int, gradient_limit)
        g_peak = max(g_peak, peak)
        violations += [(dev, "gradient", s, e) for s, e in over]
    return BufferingReport(p_peak, g_peak, tuple(violations))


def analytical_bubble(kind: ScheduleKind, d_l: int, n_l: int, n_mu: int) -> float:
    if kind is ScheduleKind.StdPipe:
        return (n_l - 1) / n_mu
    if kind is ScheduleKind.ModularPipe:
        return (n_l - 1) * n_l / (n_mu * d_l)
    return 0.0


@dataclass(frozen=True)
class DeviationReport:
    kind: ScheduleKind
    simulated_s: float
    analytical_s: float
    deviation: float
    flagged: bool
    dominating_stream: str | None


def compare_to_closed_form(
    shape: ModelShape,
    plan: ParallelPlan,
    kind: ScheduleKind | str,
    profile: HardwareProfile,
    bandwidth: SimBandwidth | None = None,
    tolerance: float = 0.05,
) -> DeviationReport:
    """Simulated step time against compute time times (1 + bubble)."""
    kind = ScheduleKind.parse(kind)
    sched = build_schedule(shape, plan, kind, profile, bandwidth)
    tl = simulate(sched)
    analytical = sched.compute_per_device * (1.0 + analytical_bubble(kind, shape.d_l, plan.n_l, plan.n_mu))
    dev = abs(tl.makespan - analytical) / analytical
    dominating = None
    if dev > tolerance:
        loads = {
            s.value: max(tl.busy(d, s) for d in range(sched.n_devices))
            for s in Stream
        }
        dominating = max(sorted(loads), key=lambda k: loads[k])
    return DeviationReport(kind, tl.makespan, analytical, dev, dev > tolerance, dominating)
