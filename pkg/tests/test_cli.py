import json

import pytest

from thurstonopt.cli import EXIT_FAILURE, EXIT_OK, EXIT_USAGE, build_parser, main, resolve_config


def run(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_info_reports_counts(capsys):
    code, out, _ = run(capsys, "info", "pillow_lattes", "--max-level", "2")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["degree"] == 4
    assert [lv["tiles"] for lv in rep["levels"]] == [2, 8, 32]


def test_q_of_constant_is_the_constant(capsys):
    code, out, _ = run(capsys, "q", "--potential", "const:1", "--level", "3")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["q"] == pytest.approx(1.0, abs=1e-12)
    assert rep["bounds"]["error_band"] == 0.0


def test_q_methods_agree(capsys):
    qs = []
    for method in ("howard", "karp", "brute"):
        code, out, _ = run(capsys, "q", "--potential", "coord:x", "--level", "1", "--method", method)
        assert code == EXIT_OK
        qs.append(json.loads(out)["q"])
    assert max(qs) - min(qs) <= 1e-12


@pytest.mark.parametrize("argv", [
    ("q", "--level", "0"),
    ("info", "nosuch"),
    ("q", "--potential", "bogus:1"),
    ("q", "--alpha", "2"),
])
def test_usage_errors_exit_two(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == EXIT_USAGE
    assert err.startswith("error:")


def test_precondition_failure_exits_one(capsys):
    code, _, err = run(capsys, "close", "anosov", "--level", "3", "--eta", "10")
    assert code == EXIT_FAILURE
    assert "critical" in err


def test_config_file_then_flags(tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nlevel = 3\nseed = 7\npotential = coord:x\n")
    parser = build_parser()
    resolved = resolve_config(parser.parse_args(["q", "--config", str(cfg), "--level", "5"]))
    assert resolved.level == 5
    assert resolved.seed == 7
    assert resolved.potential == "coord:x"
    assert resolved.kappa == 2.0


def test_config_rejects_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[run]\nlevle = 3\n")
    code, _, err = run(capsys, "q", "--config", str(cfg))
    assert code == EXIT_USAGE
    assert "levle" in err


def test_out_writes_report_and_manifest(tmp_path, capsys):
    out = tmp_path / "run"
    code, stdout, _ = run(capsys, "q", "--potential", "coord:x", "--level", "3", "--seed", "11", "--out", str(out))
    assert code == EXIT_OK
    assert json.loads((out / "q.json").read_text()) == json.loads(stdout)
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "q"
    assert manifest["seed"] == 11
    assert manifest["config"]["level"] == 3
    assert {"numpy", "scipy", "networkx", "python"} <= set(manifest["versions"])
    assert manifest["wall_time_s"] >= 0


def test_refine_svg(capsys):
    code, out, _ = run(capsys, "refine", "--level", "1", "--format", "svg")
    assert code == EXIT_OK
    assert out.lstrip().startswith("<svg")
    assert out.count("<path") == 8


def test_sweep_writes_csv(tmp_path, capsys):
    out = tmp_path / "sweep"
    code, stdout, _ = run(capsys, "sweep", "--level", "3", "--potential", "smooth:1", "--t", "1,16",
                          "--out", str(out))
    assert code == EXIT_OK
    rows = (out / "sweep.csv").read_text().splitlines()
    assert rows[0] == "t,distance"
    assert len(rows) == 3
    d = [r["distance"] for r in json.loads(stdout)["sweep"]]
    assert d[1] < d[0]


def test_tpo_locking(capsys):
    code, out, _ = run(capsys, "tpo", "--level", "4", "--potential", "smooth:2", "--trials", "5", "--threads", "1")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["success"]
    assert rep["locking"]["successes"] == 5


def test_selftest_passes(capsys):
    code, out, _ = run(capsys, "selftest")
    assert code == EXIT_OK
    rep = json.loads(out)
    assert rep["failed"] == 0
    assert rep["passed"] == len(rep["checks"])
