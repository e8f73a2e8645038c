"""Regenerate the published tables and compare them cell by cell."""

from __future__ import annotations

from dataclasses import dataclass, field

from . import reference as ref
from .cost_model import Strategy
from .hardware import GIB, HardwareProfile, default_a100_profile, intensity_threshold
from .model_config import critical_batch, make_x_model, named_model, param_count
from .optimizer import DAY, OptimizerConstraints, PlanEvaluation, fastest_plan, min_cluster_for_deadline

TABLE_IDS = ("models", "hardware", "memory", "speed", "clusters")

# tolerances of the comparison gates; ("rel", t) or ("abs", t)
MODEL_TOL = ("rel", 0.01)
HARDWARE_TOL = ("rel", 0.01)
MEMORY_TOL = ("rel", 0.05)
ACTIVATION_TOL = ("rel", 0.10)
SPEED_EFF_TOL = ("abs", 0.05)
SPEED_GPU_TOL = ("rel", 0.05)
SPEED_TIME_TOL = ("rel", 0.15)
CLUSTER_TOL = ("rel", 0.10)
EXACT = ("abs", 0)


@dataclass(frozen=True)
class Cell:
    column: str
    published: float | bool | None
    reproduced: float | bool | None
    tolerance: tuple[str, float] | None = None  # None: informational only

    @property
    def deviation(self) -> float | None:
        if self.published is None or self.reproduced is None:
            return None
        if self.tolerance is not None and self.tolerance[0] == "abs":
            return abs(float(self.reproduced) - float(self.published))
        if self.published == 0:
            return 0.0 if self.reproduced == 0 else float("inf")
        return abs(float(self.reproduced) - float(self.published)) / abs(float(self.published))

    @property
    def ok(self) -> bool | None:
        if self.tolerance is None:
            return None
        dev = self.deviation
        return dev is not None and dev <= self.tolerance[1] + 1e-12


@dataclass(frozen=True)
class Row:
    label: str
    cells: tuple[Cell, ...]

    @property
    def ok(self) -> bool:
        return all(c.ok is not False for c in self.cells)


@dataclass(frozen=True)
class TableComparison:
    table_id: str
    rows: list[Row] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.rows)

    def failures(self) -> list[tuple[str, Cell]]:
        return [(r.label, c) for r in self.rows for c in r.cells if c.ok is False]

    def records(self) -> list[dict[str, object]]:
        out = []
        for r in self.rows:
            for c in r.cells:
                dev = c.deviation
                out.append({
                    "row": r.label,
                    "column": c.column,
                    "published": c.published,
                    "reproduced": c.reproduced,
                    "deviation": dev,
                    "tolerance": "" if c.tolerance is None else f"{c.tolerance[0]} {c.tolerance[1]:g}",
                    "ok": "" if c.ok is None else ("yes" if c.ok else "NO"),
                })
        return out


def reproduce_models() -> TableComparison:
    rows = []
    for r in ref.MODEL_ROWS:
        shape = named_model(r.name)
        cells = [
            Cell("p", r.p, param_count(shape), MODEL_TOL),
            Cell("b_c", r.b_c, critical_batch(shape), MODEL_TOL),
        ]
        for col in ("d_s", "d_a", "d_h", "d_m", "d_l"):
            cells.append(Cell(col, getattr(r, col), getattr(shape, col), EXACT))
        rows.append(Row(r.name, tuple(cells)))
    return TableComparison("models", rows)


def reproduce_hardware(profile: HardwareProfile | None = None) -> TableComparison:
    profile = profile or default_a100_profile()
    rows = []
    for link, (bw, threshold) in ref.HARDWARE_ROWS.items():
        rows.append(Row(link.value, (
            Cell("bandwidth_gb_s", bw, profile.bandwidth[link] / GIB, HARDWARE_TOL),
            Cell("threshold", threshold, intensity_threshold(profile, link), HARDWARE_TOL),
        )))
    return TableComparison("hardware", rows)


def _row_label(parallelism: str, method: str) -> str:
    return f"{parallelism}/{method}"


def speed_plans(profile: HardwareProfile | None = None) -> dict[tuple[str, str], PlanEvaluation | None]:
    """Fastest X_160 plan for each published (parallelism, method) row."""
    profile = profile or default_a100_profile()
    shape = make_x_model(160)
    return {
        (r.parallelism, r.method): fastest_plan(
            shape, profile, Strategy.parse(r.method), OptimizerConstraints(parallelism=r.parallelism)
        )
        for r in ref.SPEED_ROWS
    }


def reproduce_speed(plans: dict | None = None) -> TableComparison:
    plans = plans if plans is not None else speed_plans()
    rows = []
    for r in ref.SPEED_ROWS:
        ev = plans[(r.parallelism, r.method)]
        p = ev.plan if ev else None

        def get(attr):
            return getattr(p, attr) if p else None

        cells = [Cell("offload", r.offload, ev.offloaded if ev else None, EXACT)]
        cells += [Cell(col, getattr(r, col), get(col)) for col in ("b", "b_mu", "n_mu")]
        cells.append(Cell("n_gpu", r.n_gpu, get("n_gpu"), SPEED_GPU_TOL))
        cells += [Cell(col, getattr(r, col), get(col)) for col in ("n_b", "n_l", "n_a")]
        cells.append(Cell("efficiency", r.efficiency, ev.efficiency if ev else None, SPEED_EFF_TOL))
        cells.append(Cell("time_days", r.time_days, ev.training_time / DAY if ev else None, SPEED_TIME_TOL))
        rows.append(Row(_row_label(r.parallelism, r.method), tuple(cells)))
    return TableComparison("speed", rows)


def reproduce_memory(plans: dict | None = None) -> TableComparison:
    plans = plans if plans is not None else speed_plans()
    rows = []
    for key, published in ref.MEMORY_ROWS.items():
        ev = plans[key]
        mem = ev.memory.in_gib() if ev else {}
        cells = tuple(
            Cell(col, pub, mem.get(col), ACTIVATION_TOL if col == "activations" else MEMORY_TOL)
            for col, pub in zip(ref.MEMORY_COLUMNS, published)
        )
        rows.append(Row(_row_label(*key), cells))
    return TableComparison("memory", rows)


def cluster_plan(row: ref.ClusterRow, profile: HardwareProfile | None = None) -> PlanEvaluation | None:
    """Smallest cluster meeting the row's training time (rounded up to the printed day)."""
    strategy = Strategy.parse(row.method)
    cons = OptimizerConstraints(
        parallelism=row.parallelism,
        compact_microbatches=strategy is Strategy.Improved,
        **row.settings,
    )
    deadline = (row.time_days + ref.DEADLINE_ROUNDING_DAYS) * DAY
    return min_cluster_for_deadline(make_x_model(160), profile or default_a100_profile(), strategy, deadline, cons)


def reproduce_clusters(profile: HardwareProfile | None = None) -> TableComparison:
    rows = []
    for i, r in enumerate(ref.CLUSTER_ROWS, 1):
        ev = cluster_plan(r, profile)
        p = ev.plan if ev else None
        mem = ev.memory.in_gib() if ev else {}
        improved = r.method == "improved"
        cells = (
            Cell("b", r.b, p.b if p else None, CLUSTER_TOL if improved else None),
            Cell("n_a", r.n_a, p.n_a if p else None),
            Cell("n_gpu", r.n_gpu, p.n_gpu if p else None, CLUSTER_TOL),
            Cell("offloadable", r.offloadable, mem.get("offloadable")),
            Cell("non_offloadable", r.non_offloadable, mem.get("non_offloadable")),
            Cell("efficiency", r.efficiency, ev.efficiency if ev else None),
            Cell("time_days", r.time_days, ev.training_time / DAY if ev else None),
        )
        rows.append(Row(f"{i}:{_row_label(r.parallelism, r.method)}", cells))
    return TableComparison("clusters", rows)


def reproduce(table_id: str) -> TableComparison:
    builders = {
        "models": reproduce_models,
        "hardware": reproduce_hardware,
        "memory": reproduce_memory,
        "speed": reproduce_speed,
        "clusters": reproduce_clusters,
    }
    if table_id not in builders:
        raise ValueError(f"unknown table {table_id!r}; expected one of {', '.join(TABLE_IDS)}")
    return builders[table_id]()
