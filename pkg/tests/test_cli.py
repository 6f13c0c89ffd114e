"""End-to-end command line behavior on desk-sized experiments."""

import json
from pathlib import Path

import numpy as np
import pytest

from saddlesim.cli import EXIT_BENCHMARK, EXIT_CONFIG, EXIT_HORIZON, EXIT_OK, OUTPUT_DIR_ENV, main
from saddlesim.graph import dump_edge_list, generate_erdos_renyi
from saddlesim.metrics import HindsightBenchmark

TINY = """\
[experiment]
kind = qcqp
n = 4
d = 1
horizon = 30

[graph]
p_edge = 0.8
seed = 3

[failure]
mode = uniform
scenarios = perfect, 0.3

[solver]
feedback = full-info
a = 0.12
delta = 1

[run]
seeds = 11 12
output_dir = out
"""


def write_tiny(tmp_path, text=TINY, name="exp.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def read_series(path):
    rows = [line.split(",") for line in path.read_text().splitlines()]
    header, data = rows[0], rows[1:]
    return header, np.array([[float(v) for v in row] for row in data])


def test_validate_ok(tmp_path, capsys):
    assert main(["validate", str(write_tiny(tmp_path))]) == EXIT_OK
    assert capsys.readouterr().out.strip() == "ok"


def test_validate_lists_every_violation(tmp_path, capsys):
    bad = TINY.replace("n = 4", "n = 1").replace("seeds = 11 12", "seeds = 11 11")
    assert main(["validate", str(write_tiny(tmp_path, bad))]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "config error: [experiment] n must be at least 2" in err
    assert "config error: [run] duplicate seeds" in err


def test_run_writes_all_artifacts(tmp_path, capsys):
    cfg = write_tiny(tmp_path)
    out = tmp_path / "results"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == EXIT_OK
    stdout = capsys.readouterr().out
    assert "wrote 4 series files" in stdout

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["format"] == "saddlesim-run-manifest/1"
    assert manifest["scenarios"] == ["perfect", "p0.3"]
    assert manifest["seeds"] == [11, 12]
    assert sorted(manifest["series_files"]) == sorted(
        f"series_{label}_{seed}.csv"
        for label in ("perfect", "p0.3")
        for seed in (11, 12)
    )
    import hashlib

    for name, digest in manifest["series_files"].items():
        body = (out / name).read_text()
        assert hashlib.sha256(body.encode()).hexdigest() == digest
    assert (out / "summary.csv").exists()


def test_summary_is_exact_seed_mean(tmp_path):
    cfg = write_tiny(tmp_path)
    out = tmp_path / "results"
    main(["run", str(cfg), "--output-dir", str(out)])
    header, s11 = read_series(out / "series_p0.3_11.csv")
    _, s12 = read_series(out / "series_p0.3_12.csv")
    expected = np.stack([s11[:, 1:], s12[:, 1:]]).mean(axis=0)
    summary_rows = [
        line.split(",")
        for line in (out / "summary.csv").read_text().splitlines()[1:]
        if line.startswith("p0.3,")
    ]
    got = np.array([[float(v) for v in row[2:]] for row in summary_rows])
    assert np.array_equal(got, expected)
    assert [int(row[1]) for row in summary_rows] == list(range(1, 31))


def test_reruns_are_byte_identical(tmp_path):
    cfg = write_tiny(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", str(cfg), "--output-dir", str(out1)])
    main(["run", str(cfg), "--output-dir", str(out2)])
    names = sorted(p.name for p in out1.glob("series_*.csv"))
    assert names
    for name in names + ["summary.csv"]:
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    m1 = json.loads((out1 / "manifest.json").read_text())
    m2 = json.loads((out2 / "manifest.json").read_text())
    assert m1["config_sha256"] == m2["config_sha256"]
    assert m1["series_files"] == m2["series_files"]


def test_manifest_rerun_reproduces_series(tmp_path):
    cfg = write_tiny(tmp_path)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    main(["run", str(cfg), "--output-dir", str(out1)])
    assert main(["run", str(out1 / "manifest.json"), "--output-dir", str(out2)]) == EXIT_OK
    for p in out1.glob("series_*.csv"):
        assert (out2 / p.name).read_bytes() == p.read_bytes()


def test_worker_count_does_not_change_results(tmp_path):
    cfg = write_tiny(tmp_path)
    out1, out2 = tmp_path / "w1", tmp_path / "w2"
    main(["run", str(cfg), "--output-dir", str(out1), "--workers", "1"])
    main(["run", str(cfg), "--output-dir", str(out2), "--workers", "2"])
    for p in out1.glob("series_*.csv"):
        assert (out2 / p.name).read_bytes() == p.read_bytes()
    assert (out1 / "summary.csv").read_bytes() == (out2 / "summary.csv").read_bytes()


def test_output_dir_env_var(tmp_path, monkeypatch):
    cfg = write_tiny(tmp_path)
    target = tmp_path / "from_env"
    monkeypatch.setenv(OUTPUT_DIR_ENV, str(target))
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (target / "summary.csv").exists()


def test_failure_file_mode(tmp_path):
    edges = tmp_path / "net.edges"
    edges.write_text("n=4\n0 1\n1 2\n2 3\n")
    probs = tmp_path / "probs.txt"
    lines = ["# receiver sender prob"]
    for i, j in ((0, 1), (1, 0), (1, 2), (2, 1), (2, 3), (3, 2)):
        lines.append(f"{i} {j} 0.5")
    probs.write_text("\n".join(lines) + "\n")
    text = TINY.replace(
        "[graph]\np_edge = 0.8\nseed = 3",
        "[graph]\nedge_list = net.edges",
    ).replace(
        "[failure]\nmode = uniform\nscenarios = perfect, 0.3",
        "[failure]\nmode = file\nfile = probs.txt",
    )
    cfg = write_tiny(tmp_path, text)
    out = tmp_path / "results"
    assert main(["run", str(cfg), "--output-dir", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["scenarios"] == ["file"]
    _, series = read_series(out / "series_file_11.csv")
    delivered = series[1:, -1]  # round 1 always delivers by contract
    assert (delivered < 1.0).any()
    assert series[0, -1] == 1.0


def test_dump_graph_matches_generator(tmp_path, capsys):
    assert main(["dump-graph", str(write_tiny(tmp_path))]) == EXIT_OK
    expected = dump_edge_list(generate_erdos_renyi(4, 0.8, 3))
    assert capsys.readouterr().out == expected


def test_derive_params_prints_interval(tmp_path, capsys):
    # steep default constraint scales make the stability constants large,
    # so the tiny graph needs a long horizon before the interval opens up
    text = TINY.replace("horizon = 30", "horizon = 50000")
    assert main(["derive-params", str(write_tiny(tmp_path, text))]) == EXIT_OK
    out = capsys.readouterr().out
    assert "graph: n=4" in out
    assert "delta in [" in out


def test_derive_params_infeasible_horizon(tmp_path, capsys):
    text = TINY.replace("a = 0.12", "a = 1000").replace(
        "scenarios = perfect, 0.3", "scenarios = 0.4"
    )
    code = main(["derive-params", str(write_tiny(tmp_path, text))])
    captured = capsys.readouterr()
    assert code == EXIT_HORIZON
    assert "minimal admissible horizon" in captured.err


def test_run_rejects_too_short_bandit_horizon(tmp_path, capsys):
    text = TINY.replace("feedback = full-info", "feedback = two-point-bandit").replace(
        "horizon = 30", "horizon = 2"
    )
    assert main(["run", str(write_tiny(tmp_path, text)), "--output-dir", str(tmp_path / "o")]) == EXIT_HORIZON
    assert "infeasible horizon" in capsys.readouterr().err


def test_benchmark_failure_exit_code(tmp_path, capsys, monkeypatch):
    import saddlesim.runner as runner

    def broken(cost_rounds, constraints, feasible, **kwargs):
        x = np.zeros((len(cost_rounds[0]), 1))
        return HindsightBenchmark(
            decisions=x,
            average_cost=0.0,
            feasible=False,
            max_violation=1.0,
            stationarity=0.0,
            complementarity=0.0,
            iterations=0,
        )

    monkeypatch.setattr(runner, "solve_hindsight", broken)
    code = main(["run", str(write_tiny(tmp_path)), "--output-dir", str(tmp_path / "o")])
    assert code == EXIT_BENCHMARK
    assert "benchmark failure" in capsys.readouterr().err


def test_missing_config_file_reports_config_error(tmp_path, capsys):
    assert main(["validate", str(tmp_path / "absent.ini")]) == EXIT_CONFIG
    assert "cannot read config" in capsys.readouterr().err
