"""Command-line front end.

Exit codes: 0 success, 1 invalid input, 2 infeasible result with ``--strict``.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import yaml

from . import reference as ref
from .cost_model import ParallelPlan, Strategy, checkpoint_offload_intensity, state_offload_intensity
from .hardware import GIB
from .model_config import make_x_model
from .optimizer import (
    DAY,
    PlanEvaluation,
    evaluate,
    fastest_plan,
    min_cluster_for_deadline,
    parallelism_label,
    scaling_sweep,
)
from .pipeline_sim import ScheduleKind, SimBandwidth, analytical_bubble, build_schedule, simulate
from .report import format_duration, render
from .reproduce import TABLE_IDS, reproduce
from .scenario import load_config, scenario_from_config

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_INFEASIBLE = 2


class InvalidInput(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _plan_name(row: ref.SpeedRow) -> str:
    return f"{row.parallelism.replace('+', '-')}-{row.method}"


# plans of the published fastest-configuration table, by name
NAMED_PLANS: dict[str, ParallelPlan] = {
    _plan_name(r): ParallelPlan(
        Strategy.parse(r.method), n_b=r.n_b, n_l=r.n_l, n_a=r.n_a, n_mu=r.n_mu, b_mu=r.b_mu
    )
    for r in ref.SPEED_ROWS
}
NAMED_PLANS["none"] = NAMED_PLANS["none-baseline"]

TABLE_COLUMNS = ("Parallelism", "Method", "Offload", "b", "b_mu", "n_mu", "n_gpu", "n_b", "n_l", "n_a",
                 "Efficiency", "Time")


# --------------------------------------------------------------------------- scenario assembly


def _add_scenario_args(p: argparse.ArgumentParser, model: bool = True) -> None:
    p.add_argument("--config", help="scenario file (YAML or JSON)")
    if model:
        group = p.add_mutually_exclusive_group()
        group.add_argument("--x", type=int, help="X_x scaling-family model")
        group.add_argument("--model", help="named model (bert, megatron-lm, t-nlg, gpt-3, x_<n>)")
    p.add_argument("--profile", help="hardware profile name")
    p.add_argument("--strategy", action="append", help="baseline, partitioned or improved (repeatable)")
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")


def _add_constraint_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--parallelism", help="auto, none, data, data+pipe, data+tensor, pipe+tensor, 3d, ...")
    p.add_argument("--epsilon", type=float, help="largest accepted non-overlapped overhead")
    p.add_argument("--steps", type=int, help="optimizer steps at the critical batch")
    p.add_argument("--max-gpus", type=int)
    p.add_argument("--max-na", type=int, help="largest tensor-parallel degree")
    p.add_argument("--fixed-na", type=int, help="only this tensor-parallel degree")
    p.add_argument("--no-offload", action="store_true", help="keep all state and checkpoints on the GPU")
    p.add_argument("--compact-microbatches", action="store_true",
                   help="b_mu=1 and the fewest micro-batches that hide pipeline transfers")
    p.add_argument("--tensor-degrees", choices=("pow2", "any"))
    p.add_argument("--split-heads", action="store_true", help="allow n_a above the head count")
    p.add_argument("--improved-state", choices=("partitioned", "unpartitioned", "either"))


def _config(args: argparse.Namespace) -> dict[str, Any]:
    cfg = load_config(args.config) if getattr(args, "config", None) else {}
    cfg = dict(cfg)
    if getattr(args, "x", None) is not None:
        cfg["model"] = {"x": args.x}
    elif getattr(args, "model", None):
        cfg["model"] = {"name": args.model}
    if getattr(args, "profile", None):
        cfg["profile"] = args.profile
    if getattr(args, "strategy", None):
        cfg["strategies"] = [s for item in args.strategy for s in item.split(",") if s]
    cons = dict(cfg.get("constraints") or {})
    overrides = {
        "parallelism": getattr(args, "parallelism", None),
        "epsilon": getattr(args, "epsilon", None),
        "steps": getattr(args, "steps", None),
        "max_gpus": getattr(args, "max_gpus", None),
        "max_na": getattr(args, "max_na", None),
        "fixed_na": getattr(args, "fixed_na", None),
        "tensor_degrees": getattr(args, "tensor_degrees", None),
        "improved_state": getattr(args, "improved_state", None),
        "deadline_days": getattr(args, "deadline_days", None),
    }
    cons.update({k: v for k, v in overrides.items() if v is not None})
    if getattr(args, "no_offload", False):
        cons["allow_offload"] = False
    if getattr(args, "compact_microbatches", False):
        cons["compact_microbatches"] = True
    if getattr(args, "split_heads", False):
        cons["split_heads"] = True
    cfg["constraints"] = cons
    return cfg


def _emit(text: str) -> None:
    sys.stdout.write(text)


# --------------------------------------------------------------------------- analyze / optimize


def _table_row(ev: PlanEvaluation, fmt: str) -> dict[str, Any]:
    p = ev.plan
    return {
        "Parallelism": parallelism_label(p),
        "Method": p.strategy.value,
        "Offload": ev.offloaded,
        "b": p.b,
        "b_mu": p.b_mu,
        "n_mu": p.n_mu,
        "n_gpu": p.n_gpu,
        "n_b": p.n_b,
        "n_l": p.n_l,
        "n_a": p.n_a,
        "Efficiency": round(ev.efficiency, 3),
        "Time": format_duration(ev.training_time) if fmt == "markdown" else ev.training_time / DAY,
    }


def cmd_analyze(args: argparse.Namespace) -> int:
    cfg = _config(args)
    if args.plan:
        if args.plan not in NAMED_PLANS:
            raise InvalidInput(f"unknown plan {args.plan!r}; known: {', '.join(sorted(NAMED_PLANS))}")
        plan = NAMED_PLANS[args.plan]
    else:
        fields = {"n_b": args.nb, "n_l": args.nl, "n_a": args.na, "n_mu": args.nmu, "b_mu": args.bmu}
        plan_cfg = dict(cfg.get("plan") or {})
        plan_cfg.update({k: v for k, v in fields.items() if v is not None})
        if args.strategy:
            plan_cfg["strategy"] = args.strategy[0]
        if not plan_cfg:
            raise InvalidInput("analyze needs --plan, a plan in the config, or explicit --nb/--nl/--na/--nmu/--bmu")
        cfg["plan"] = plan_cfg
        plan = None
    scenario = scenario_from_config(cfg)
    plan = plan or scenario.plan
    ev = evaluate(scenario.shape, plan, scenario.profile, scenario.constraints)

    if args.format == "csv":
        _emit(render([ev.to_record()], "csv"))
    else:
        _emit(f"## {scenario.shape.label()} on {scenario.profile.name}\n\n")
        _emit(render([_table_row(ev, "markdown")], "markdown", TABLE_COLUMNS))
        mem = ev.memory.in_gib()
        _emit("\nMemory per GPU (GiB)\n\n")
        _emit(render([{**mem, "resident": ev.resident_memory / GIB}], "markdown"))
        ints = ev.intensities
        _emit("\nArithmetic intensity (flop/B)\n\n")
        _emit(render([{"nu_b": ints.nu_b, "nu_l": ints.nu_l, "nu_a": ints.nu_a, "nu_s": ints.nu_s,
                       "nu_c": ints.nu_c}], "markdown"))
        overheads = ", ".join(f"{k} {v:.3g}" for k, v in sorted(ev.overheads.items())) or "none"
        _emit(f"\nbubble {ev.bubble:.4g}; non-overlapped overheads: {overheads}\n")
        if ev.violations:
            _emit("\nInfeasible:\n" + "".join(f"- {v}\n" for v in ev.violations))
    if ev.violations and args.strict:
        return EXIT_INFEASIBLE
    return EXIT_OK


def cmd_optimize(args: argparse.Namespace) -> int:
    scenario = scenario_from_config(_config(args))
    cons = scenario.constraints
    rows = []
    infeasible = []
    for strategy in scenario.strategies:
        if cons.deadline is not None:
            ev = min_cluster_for_deadline(scenario.shape, scenario.profile, strategy, cons.deadline, cons)
        else:
            ev = fastest_plan(scenario.shape, scenario.profile, strategy, cons)
        if ev is None:
            infeasible.append(strategy.value)
            continue
        if args.format == "csv":
            rows.append(ev.to_record())
        else:
            row = _table_row(ev, "markdown")
            if cons.deadline is not None:
                mem = ev.memory.in_gib()
                row["Offloadable GiB"] = round(mem["offloadable"], 3)
                row["Non-offloadable GiB"] = round(mem["non_offloadable"], 3)
            rows.append(row)
    if rows:
        _emit(render(rows, args.format))
    for name in infeasible:
        print(f"no feasible plan for {name}", file=sys.stderr)
    if infeasible and args.strict:
        return EXIT_INFEASIBLE
    return EXIT_OK


# --------------------------------------------------------------------------- sweep


def parse_x_range(text: str, step: int = 8) -> list[int]:
    """``"8..512"`` (stepping by ``step``), ``"8..512:16"``, ``"160"`` or ``"8,16,32"``."""
    text = text.strip()
    try:
        if ".." in text:
            span, _, step_text = text.partition(":")
            a, b = (int(v) for v in span.split(".."))
            step = int(step_text) if step_text else step
            if step < 1:
                raise InvalidInput("x step must be positive")
            return list(range(a, b + 1, step))
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise InvalidInput(f"cannot parse x range {text!r}") from None


SWEEP_COLUMNS = ("x", "p", "strategy", "n_gpu", "efficiency", "time_days", "mem_offloadable_gib",
                 "mem_nonoffloadable_gib", "nu_s", "nu_c", "mem_to_compute_ratio", "feasible")


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config(args)
    xs = parse_x_range(args.x_range, args.step)
    if not xs:
        raise InvalidInput(f"empty x range {args.x_range!r}")
    scenario = scenario_from_config(cfg)
    result = scaling_sweep(xs, scenario.profile, scenario.strategies, scenario.constraints, workers=args.jobs)
    rows = []
    any_infeasible = False
    for pt in result.points:
        for strategy, ev in pt.results.items():
            row: dict[str, Any] = {"x": pt.x, "p": pt.p, "strategy": strategy.value}
            if ev is None:
                any_infeasible = True
                row["feasible"] = False
            else:
                shape = make_x_model(pt.x)
                mem = ev.memory.in_gib()
                row.update({
                    "n_gpu": ev.plan.n_gpu,
                    "efficiency": ev.efficiency,
                    "time_days": ev.training_time / DAY,
                    "mem_offloadable_gib": mem["offloadable"],
                    "mem_nonoffloadable_gib": mem["non_offloadable"],
                    "nu_s": state_offload_intensity(shape, ev.plan),
                    "nu_c": checkpoint_offload_intensity(shape),
                    "mem_to_compute_ratio": pt.mem_to_compute[strategy],
                    "feasible": True,
                })
            rows.append(row)
    limit_rows = [
        {"strategy": s.value, "budget": budget, "largest_x": lim.x, "largest_p": lim.p, "p_crossing": lim.p_crossing}
        for s, by_budget in result.limits.items()
        for budget, lim in by_budget.items()
    ]
    if args.limits:
        _emit(render(limit_rows, args.format))
    else:
        _emit(render(rows, args.format, SWEEP_COLUMNS))
        if args.format == "markdown":
            _emit("\nSize limits\n\n" + render(limit_rows, "markdown"))
    if any_infeasible and args.strict:
        return EXIT_INFEASIBLE
    return EXIT_OK


# --------------------------------------------------------------------------- simulate


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _config(args)
    cfg.setdefault("model", {"x": 8})
    scenario = scenario_from_config(cfg)
    shape, profile = scenario.shape, scenario.profile
    strategy = Strategy.parse(args.strategy[0]) if args.strategy else Strategy.Improved
    if args.schedule:
        kinds = [ScheduleKind.parse(k) for item in args.schedule for k in item.split(",") if k]
    else:
        kinds = list(ScheduleKind)
    if args.bandwidth == "infinite":
        bw = SimBandwidth.infinite()
    else:
        bw = SimBandwidth.from_profile(profile)

    rows = []
    traces = []
    for kind in kinds:
        n_l = args.nl if kind.pipelined else 1
        if kind.pipelined and shape.d_l % n_l:
            if args.schedule:
                raise InvalidInput(f"{kind.value} needs n_l to divide d_l={shape.d_l}")
            print(f"skipping {kind.value}: n_l={n_l} does not divide d_l={shape.d_l}", file=sys.stderr)
            continue
        plan = ParallelPlan(strategy, n_b=args.nb, n_l=n_l, n_a=args.na, n_mu=args.nmu, b_mu=args.bmu)
        sched = build_schedule(shape, plan, kind, profile, bw)
        tl = simulate(sched)
        bubble = analytical_bubble(kind, shape.d_l, n_l, plan.n_mu)
        expected = sched.compute_per_device * (1.0 + bubble)
        summary = tl.summary()
        rows.append({
            "schedule": kind.value,
            "n_l": n_l,
            "n_mu": plan.n_mu,
            "makespan_s": tl.makespan,
            "closed_form_s": expected,
            "deviation": abs(tl.makespan - expected) / expected,
            "idle_fraction": summary["idle_fraction"],
            "closed_form_idle": bubble / (1.0 + bubble),
            **{k: v for k, v in summary.items() if k.startswith("peak_bw_")},
            "parameter_buffers": summary["parameter_buffers"],
            "gradient_buffers": summary["gradient_buffers"],
        })
        traces.append((kind, tl))
    if not rows:
        raise InvalidInput("no schedule applies to this plan")
    _emit(render(rows, args.format))
    if args.trace:
        lines = []
        for kind, tl in traces:
            body = tl.trace_csv().splitlines()
            if not lines:
                lines.append("schedule," + body[0])
            lines += [f"{kind.value},{line}" for line in body[1:]]
        Path(args.trace).write_text("\n".join(lines) + "\n")
    return EXIT_OK


# --------------------------------------------------------------------------- reproduce


def cmd_reproduce(args: argparse.Namespace) -> int:
    table = reproduce(args.table)
    _emit(render(table.records(), args.format))
    if args.format == "markdown":
        status = "all cells within tolerance" if table.ok else f"{len(table.failures())} cell(s) out of tolerance"
        _emit(f"\n{args.table}: {status}\n")
    if not table.ok and args.strict:
        return EXIT_INFEASIBLE
    return EXIT_OK


# --------------------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="parascope", description="Distributed transformer training planner.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="memory, intensities and speed of one plan")
    _add_scenario_args(p)
    _add_constraint_args(p)
    p.add_argument("--plan", help=f"named plan: {', '.join(sorted(NAMED_PLANS))}")
    for name in ("nb", "nl", "na", "nmu", "bmu"):
        p.add_argument(f"--{name}", type=int)
    p.add_argument("--strict", action="store_true", help="exit 2 when the plan is infeasible")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("optimize", help="fastest plan, or smallest cluster for a deadline")
    _add_scenario_args(p)
    _add_constraint_args(p)
    p.add_argument("--deadline-days", type=float, help="minimise the cluster for this training time")
    p.add_argument("--strict", action="store_true", help="exit 2 when a strategy has no feasible plan")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="fastest plans across X_x model sizes")
    _add_scenario_args(p, model=False)
    _add_constraint_args(p)
    p.add_argument("--x", dest="x_range", required=True, help='sizes, e.g. "8..512", "8..512:16", "160"')
    p.add_argument("--step", type=int, default=8, help="x step for a..b ranges")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p.add_argument("--limits", action="store_true", help="only print the month and year size limits")
    p.add_argument("--strict", action="store_true", help="exit 2 when any size has no feasible plan")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("simulate", help="discrete-event run of the four schedules")
    _add_scenario_args(p)
    p.add_argument("--schedule", action="append",
                   help=f"{', '.join(k.value for k in ScheduleKind)} (repeatable; default all)")
    p.add_argument("--nl", type=int, default=1)
    p.add_argument("--nmu", type=int, default=None)
    p.add_argument("--bmu", type=int, default=1)
    p.add_argument("--nb", type=int, default=1)
    p.add_argument("--na", type=int, default=1)
    p.add_argument("--bandwidth", choices=("infinite", "profile"), default="infinite")
    p.add_argument("--trace", help="write per-task trace records to this CSV file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("reproduce", help="regenerate a published table side by side")
    p.add_argument("table", choices=TABLE_IDS)
    p.add_argument("--format", choices=("markdown", "csv"), default="markdown")
    p.add_argument("--strict", action="store_true", help="exit 2 when a cell is out of tolerance")
    p.set_defaults(func=cmd_reproduce)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_INVALID
    if args.command == "simulate" and args.nmu is None:
        args.nmu = max(args.nl, 1)
    try:
        return args.func(args)
    except (InvalidInput, ValueError, KeyError, FileNotFoundError, yaml.YAMLError, json.JSONDecodeError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"parascope: error: {msg}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
