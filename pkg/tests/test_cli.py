import json

import pytest

from concaflow import cli
from concaflow.cli import EXIT_CONFIG, EXIT_MISMATCH, EXIT_OK, main


def _report(out):
    return json.loads((out / "report.json").read_text())


@pytest.mark.parametrize(
    "argv,code",
    [
        (["criterion", "--family", "phi:0", "--expect", "preserved"], EXIT_OK),
        (["criterion", "--family", "hot:1", "--expect", "preserved"], EXIT_OK),
        (["criterion", "--family", "lalpha:0.25", "--semilinear", "--kappa", "0", "--p", "2", "--expect", "not-preserved"], EXIT_OK),
        (["criterion", "--family", "phi:0", "--expect", "not-preserved"], EXIT_MISMATCH),
        (["criterion", "--family", "bogus:1"], EXIT_CONFIG),
        (["criterion"], EXIT_CONFIG),
        (["criterion", "--family", "phi:0", "--window", "1,2"], EXIT_CONFIG),
        (["nonsense"], EXIT_CONFIG),
    ],
)
def test_exit_codes(tmp_path, argv, code):
    assert main(argv + ["--out", str(tmp_path)] if argv[0] != "nonsense" else argv) == code


def test_report_schema(tmp_path):
    main(["criterion", "--family", "phi:-1", "--out", str(tmp_path)])
    rep = _report(tmp_path)
    assert rep["schema_version"] == 1
    assert rep["command"] == "criterion"
    assert rep["verdicts"][0]["operation"] == "criterion.dhf_criterion"
    assert rep["verdicts"][0]["preserved"] is False
    assert set(rep["versions"]) >= {"tool", "backend", "config_hash"}
    assert "log_fprime_derivative.dat" in rep["artifacts"]
    manifest = (tmp_path / "manifest.txt").read_text()
    assert "log_fprime_derivative.dat" in manifest
    assert rep["spec"]["grid"] == 1001


def test_deterministic_except_timestamp(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["hierarchy", "--families", "phi:0,hot:1,phi:1", "--out", str(out)]) == EXIT_OK
    ra, rb = _report(a), _report(b)
    ra.pop("timestamp", None)
    rb.pop("timestamp", None)
    assert ra == rb


def test_config_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# hot transform\ncommand = criterion\nfamily = hot:1\nexpect = not-preserved\n")
    assert main(["criterion", "--config", str(cfg), "--out", str(tmp_path / "a")]) == EXIT_MISMATCH
    assert main(["criterion", "--config", str(cfg), "--expect", "preserved", "--out", str(tmp_path / "b")]) == EXIT_OK


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("unknown_key = 3\n")
    assert main(["criterion", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    other = tmp_path / "other.cfg"
    other.write_text("command = rates\n")
    assert main(["criterion", "--config", str(other), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["criterion", "--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_negative_list_values_from_config(tmp_path):
    cfg = tmp_path / "rates.cfg"
    cfg.write_text("kind = pm\nm = 2\nalphas = -1,0,0.5,1\n")
    assert main(["rates", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_OK
    assert len(_report(tmp_path)["verdicts"]) == 4


def test_hierarchy_examples(tmp_path):
    assert main(["hierarchy", "--families", "hot:1", "--out", str(tmp_path / "one")]) == EXIT_OK
    labels, links, _ = cli.hierarchy_chain(["phi:0", "phi:1"])
    assert labels == ["phi:1", "phi:0"] and links == [">"]
    labels, links, _ = cli.hierarchy_chain(["hot:1", "lalpha:0.5", "lalpha:1", "phi:0"])
    assert labels[:2] == ["hot:1", "lalpha:0.5"]
    assert links[-1] == "~"


def test_evolve_hot_profile(tmp_path):
    code = main(["evolve", "--family", "hot:1", "--n", "129", "--times", "0.01,0.05", "--dt", "1e-4", "--expect", "pass", "--out", str(tmp_path)])
    assert code == EXIT_OK
    assert (tmp_path / "snapshot_t0.01.dat").exists()


def test_evolve_log_check(tmp_path):
    code = main(["evolve", "--family", "phi:0", "--check", "log", "--n", "129", "--times", "0.02", "--dt", "1e-4", "--expect", "pass", "--out", str(tmp_path)])
    assert code == EXIT_OK


def test_evolve_grid_file(tmp_path):
    from concaflow.flow import GridFunction, save_grid
    import numpy as np

    u = GridFunction.sample(lambda x: np.sin(np.pi * x) ** 2, 0, 1, 65)
    save_grid(GridFunction(np.where(u.values < 1e-15, 0, u.values), u.origin, u.spacing), tmp_path / "u.grid")
    code = main(["evolve", "--family", "phi:0", "--datum", "grid", "--grid-file", str(tmp_path / "u.grid"), "--check", "quasi", "--times", "0.01", "--dt", "1e-3", "--out", str(tmp_path / "o")])
    assert code == EXIT_OK


def test_disrupt_no_datum(tmp_path):
    assert main(["disrupt", "--family", "hot:1", "--expect", "no-datum", "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["disrupt", "--family", "hot:1", "--out", str(tmp_path / "b")]) == EXIT_CONFIG


@pytest.mark.slow
def test_disrupt_small(tmp_path):
    code = main(["disrupt", "--family", "phi:-1", "--n", "129", "--times", "0.001,0.01", "--out", str(tmp_path)])
    assert code == EXIT_OK
    rep = _report(tmp_path)
    assert any(v.get("profile") == "datum" and v["ratio"] >= 10 for v in rep["verdicts"] if "ratio" in v)


def test_envelope(tmp_path):
    assert main(["envelope", "--family", "hot:1", "--n", "33", "--out", str(tmp_path)]) == EXIT_OK
    assert (tmp_path / "envelope.grid").exists()


def test_bad_spec(tmp_path):
    assert main(["evolve", "--family", "phi:0", "--n", "8", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert main(["evolve", "--family", "phi:0", "--times", "0.2,0.1", "--out", str(tmp_path)]) == EXIT_CONFIG
