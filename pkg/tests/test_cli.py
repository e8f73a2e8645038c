import csv
import io
import json

import pytest

from parascope.cli import EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, NAMED_PLANS, main, parse_x_range


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_named_plan(capsys):
    code, out, _ = run(capsys, "analyze", "--plan", "3d-improved")
    assert code == EXIT_OK
    assert "38640" in out and "6.81 d" in out


def test_analyze_single_gpu_plan_takes_centuries(capsys):
    code, out, _ = run(capsys, "analyze", "--plan", "none")
    assert code == EXIT_OK
    assert " y " in out


def test_analyze_explicit_plan_strict_infeasible(capsys):
    args = ("analyze", "--x", "160", "--strategy", "baseline", "--nb", "4000")
    assert run(capsys, *args)[0] == EXIT_OK
    code, out, _ = run(capsys, *args, "--strict")
    assert code == EXIT_INFEASIBLE
    assert "critical batch" in out


def test_named_plans_cover_published_rows():
    assert {"3d-improved", "data-pipe-baseline", "none"} <= set(NAMED_PLANS)


def test_optimize_fastest_and_deadline(capsys):
    code, out, _ = run(capsys, "optimize", "--x", "160", "--strategy", "improved")
    assert code == EXIT_OK and "improved" in out
    code, out, _ = run(capsys, "optimize", "--x", "160", "--strategy", "improved", "--deadline-days", "180",
                       "--max-na", "1", "--format", "csv")
    assert code == EXIT_OK
    row = next(csv.DictReader(io.StringIO(out)))
    assert 1179 <= int(row["n_gpu"]) <= 1441


def test_optimize_infeasible(capsys):
    args = ("optimize", "--x", "160", "--parallelism", "none", "--no-offload")
    code, _, err = run(capsys, *args)
    assert code == EXIT_OK and "no feasible plan" in err
    assert run(capsys, *args, "--strict")[0] == EXIT_INFEASIBLE


@pytest.mark.parametrize("argv", [
    ("optimize", "--x", "3"),
    ("optimize", "--strategy", "fastest"),
    ("optimize", "--profile", "tpu"),
    ("optimize", "--epsilon", "2"),
    ("sweep", "--x", "10..2"),
    ("simulate", "--schedule", "modular-pipe", "--nl", "3"),
    ("analyze", "--plan", "sideways"),
    ("frobnicate",),
    ("optimize", "--config", "/nonexistent/scenario.yaml"),
])
def test_invalid_input_exits_1(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_INVALID
    assert err


def test_config_file_with_overrides(capsys, tmp_path):
    yaml_path = tmp_path / "s.yaml"
    yaml_path.write_text("model: {x: 16}\nstrategies: [partitioned]\nconstraints: {max_gpus: 8}\n")
    code, out, _ = run(capsys, "optimize", "--config", str(yaml_path), "--format", "csv")
    assert code == EXIT_OK
    row = next(csv.DictReader(io.StringIO(out)))
    assert row["method"] == "partitioned" and int(row["n_gpu"]) <= 8
    code, out, _ = run(capsys, "optimize", "--config", str(yaml_path), "--max-gpus", "2", "--format", "csv")
    assert int(next(csv.DictReader(io.StringIO(out)))["n_gpu"]) <= 2

    json_path = tmp_path / "s.json"
    json_path.write_text(json.dumps({"model": {"x": 16}, "strategies": ["partitioned"],
                                     "constraints": {"max_gpus": 8}}))
    assert run(capsys, "optimize", "--config", str(json_path), "--format", "csv")[1] == \
        run(capsys, "optimize", "--config", str(yaml_path), "--format", "csv")[1]


def test_malformed_config_exits_1(capsys, tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model: [unclosed\n")
    assert run(capsys, "optimize", "--config", str(bad))[0] == EXIT_INVALID
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{")
    assert run(capsys, "optimize", "--config", str(bad_json))[0] == EXIT_INVALID


def test_sweep_csv(capsys):
    code, out, _ = run(capsys, "sweep", "--x", "8..32", "--strategy", "improved", "--format", "csv")
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [int(r["x"]) for r in rows] == [8, 16, 24, 32]
    assert all(r["feasible"] == "True" for r in rows)


def test_sweep_markdown_has_limits(capsys):
    code, out, _ = run(capsys, "sweep", "--x", "8,160", "--strategy", "improved")
    assert code == EXIT_OK and "Size limits" in out and "month" in out


def test_sweep_matches_optimize(capsys):
    _, sweep_out, _ = run(capsys, "sweep", "--x", "160..160", "--strategy", "improved", "--format", "csv")
    _, opt_out, _ = run(capsys, "optimize", "--x", "160", "--strategy", "improved", "--format", "csv")
    swept = next(csv.DictReader(io.StringIO(sweep_out)))
    opt = next(csv.DictReader(io.StringIO(opt_out)))
    assert swept["n_gpu"] == opt["n_gpu"]
    assert float(swept["time_days"]) == pytest.approx(float(opt["time_days"]))


def test_parse_x_range():
    assert parse_x_range("8..32", 8) == [8, 16, 24, 32]
    assert parse_x_range("8..32:12", 8) == [8, 20, 32]
    assert parse_x_range("4,12", 8) == [4, 12]


def test_simulate_and_trace(capsys, tmp_path):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(capsys, "simulate", "--nl", "4", "--nmu", "8", "--format", "csv", "--trace", str(trace))
    assert code == EXIT_OK
    rows = {r["schedule"]: r for r in csv.DictReader(io.StringIO(out))}
    assert set(rows) == {"std-ga", "layered-ga", "std-pipe", "modular-pipe"}
    assert float(rows["std-pipe"]["idle_fraction"]) == pytest.approx(3 / 11)
    assert float(rows["modular-pipe"]["makespan_s"]) <= float(rows["std-pipe"]["makespan_s"])
    lines = trace.read_text().splitlines()
    assert lines[0] == "schedule,device,stream,kind,layer,micro_batch,start_s,end_s"
    assert {line.split(",")[0] for line in lines[1:]} == set(rows)


def test_simulate_skips_non_dividing_pipelines(capsys):
    code, out, err = run(capsys, "simulate", "--x", "6", "--nl", "4", "--nmu", "4")
    assert code == EXIT_OK
    assert "skipping" in err and "layered-ga" in out


def test_reproduce_tables(capsys):
    for table in ("models", "hardware", "memory", "speed", "clusters"):
        code, out, _ = run(capsys, "reproduce", table, "--strict")
        assert code == EXIT_OK, table
        assert "all cells within tolerance" in out


def test_output_is_byte_identical_across_runs(capsys):
    argv = ("sweep", "--x", "8..64", "--format", "csv")
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]
    argv = ("simulate", "--nl", "2", "--nmu", "4", "--bandwidth", "profile", "--nb", "4")
    assert run(capsys, *argv)[1] == run(capsys, *argv)[1]
