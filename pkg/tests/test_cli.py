import json
import subprocess
import sys

import pytest

from inertial_dr.cli import CSV_HEADER, main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_validate_examples(capsys):
    code, out, _ = run(capsys, "validate", "--alpha", "0.1", "--sigma", "0.01", "--delta", "1")
    assert code == 0 and "lambda_max = 0.801639" in out and "1.60327" in out
    code, out, _ = run(capsys, "validate", "--alpha", "0", "--sigma", "0.25")
    assert code == 0 and "lambda_max = 0.800000" in out
    code, out, _ = run(capsys, "validate", "--alpha", "0.9", "--delta", "0.1", "--sigma", "1")
    assert code == 1 and "12.83" in out


def test_validate_steps(capsys):
    code, out, _ = run(capsys, "validate", "--tau", "1", "--sigma-i", "1")
    assert code == 0 and "rho = 0.5" in out
    code, out, _ = run(capsys, "validate", "--tau", "2", "--sigma-i", "2")
    assert code == 1 and "violates" in out
    code, out, _ = run(capsys, "validate", "--tau", "1", "--sigma-i", "0.5", "0.5", "--norms", "1.4142135623730951")
    assert code == 0
    code, _, _ = run(capsys, "validate", "--tau", "1")
    assert code == 1
    code, out, _ = run(capsys, "validate", "--alpha", "0.2", "--lambda", "1.5")
    assert code == 1


def test_bad_flags_exit_1(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["cluster", "--p", "3"])
    assert exc.value.code == 1
    code, _, err = run(capsys, "cluster", "--alpha", "1.5")
    assert code == 1 and "schedule" in err


def test_cluster_outputs(tmp_path, capsys):
    out_dir = tmp_path / "a"
    code, out, _ = run(capsys, "cluster", "--per-moon", "20", "--K", "4", "--output", str(out_dir))
    assert code == 0
    csvs = sorted(p.name for p in out_dir.glob("cluster-*.csv"))
    assert len(csvs) == 4  # 2 tolerances x 2 algorithms
    for name in csvs:
        lines = (out_dir / name).read_text().splitlines()
        assert lines[0] == ",".join(CSV_HEADER)
        eps = float(name.split("eps")[1][:-4])
        assert float(lines[-1].split(",")[1]) <= eps
    summary = (out_dir / "summary.csv").read_text().splitlines()
    rows = {(r.split(",")[0], r.split(",")[1]): int(r.split(",")[3]) for r in summary[1:]}
    for alg in ("pd-dr-inertial", "pd-dr-classical"):
        assert rows[("1e-08", alg)] >= rows[("0.0001", alg)]


def test_cluster_deterministic(tmp_path, capsys):
    args = ["cluster", "--per-moon", "15", "--K", "4", "--eps", "1e-6"]
    run(capsys, *args, "--output", str(tmp_path / "a"))
    run(capsys, *args, "--output", str(tmp_path / "b"))
    for p in (tmp_path / "a").glob("cluster-*.csv"):
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_classical_row_matches_library(tmp_path, capsys):
    from inertial_dr.experiments import (build_clustering_problem, clustering_instance,
                                         gen_half_moons, reference_solution, run_primal_dual)
    run(capsys, "cluster", "--per-moon", "15", "--K", "4", "--eps", "1e-6", "--output", str(tmp_path))
    pts, _ = gen_half_moons(0, 15, 0.05)
    inst = clustering_instance(pts, 2, 5.2, 4, 0.5)
    prob = build_clustering_problem(inst)
    rep = run_primal_dual(prob, reference_solution(prob, key=inst.content_hash()), 1e-6, 0.0)
    rows = (tmp_path / "cluster-p2-classical-eps1e-06.csv").read_text().splitlines()
    assert len(rows) - 1 == rep.iterations


def test_json_format(tmp_path, capsys):
    code, _, _ = run(capsys, "cluster", "--per-moon", "15", "--K", "4", "--eps", "1e-4",
                     "--format", "json", "--output", str(tmp_path))
    assert code == 0
    doc = json.loads((tmp_path / "cluster-p2-inertial-eps0.0001.json").read_text())
    assert doc["config"]["alpha"] == 0.2 and "version" in doc
    assert set(doc["rows"][0]) == set(CSV_HEADER)
    assert json.loads((tmp_path / "summary.json").read_text())["cells"]


def test_not_converged_exit_2(capsys):
    code, out, _ = run(capsys, "cluster", "--per-moon", "15", "--K", "4", "--max-iter", "3")
    assert code == 2 and "not converged" in out


def test_io_error_exit_3(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    code, _, err = run(capsys, "cluster", "--per-moon", "15", "--K", "4", "--output", str(blocker / "sub"))
    assert code == 3 and "cannot write" in err


def test_heron_grid_cell(tmp_path, capsys):
    code, out, _ = run(capsys, "heron", "--n", "2", "--m", "10", "--eps", "1e-5", "--output", str(tmp_path))
    assert code == 0
    header, row = out.strip().splitlines()[-2:]
    assert header.split()[:6] == ["n", "m", "eps", "inertial", "classical", "subgradient"]
    assert "--" not in row
    assert len(list(tmp_path.glob("heron-n2-m10-*.csv"))) == 3


def test_heron_timeout_dashes(capsys):
    code, out, _ = run(capsys, "heron", "--n", "2", "--m", "5", "--eps", "1e-14", "--timeout", "0")
    assert code == 0
    assert out.strip().splitlines()[-1].split()[3:] == ["--", "--", "--"]


def test_toy(capsys):
    code, out, _ = run(capsys, "toy", "--quick")
    assert code == 0 and "FAIL" not in out
    code, _, _ = run(capsys, "toy", "--quick", "--alpha", "0.3", "--seed", "7")
    assert code == 0


def test_toy_failure_reports_invariant(monkeypatch, capsys):
    from inertial_dr import cli
    from inertial_dr.checks import SuiteResult

    bad = SuiteResult("fake", 1, ["broken invariant"])
    monkeypatch.setattr(cli, "run_all", lambda *a, **k: [bad])
    code, out, _ = run(capsys, "toy")
    assert code == 2 and "broken invariant" in out


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "inertial_dr.cli", "validate", "--alpha", "0"],
                         capture_output=True, text=True)
    assert out.returncode == 0 and "lambda_max" in out.stdout
