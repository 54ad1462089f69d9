import csv
import json

import pytest
import yaml

from nodal_blowup import cli
from nodal_blowup.config import parse_and_validate


def write_config(tmp_path, subcommand, **params):
    path = tmp_path / f"{subcommand}.yaml"
    path.write_text(yaml.safe_dump({"schema_version": 1, "subcommand": subcommand,
                                    "params": params}))
    return path


def invoke(tmp_path, subcommand, out="out", extra=(), **params):
    path = write_config(tmp_path, subcommand, **params)
    status = cli.main([subcommand, "--config", str(path), "--out", str(tmp_path / out), *extra])
    return status, tmp_path / out


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


CRITERION = dict(n=4, k=2, p_list=[2.5, 2.6, 2.7], n_nodes=1025)


def test_fmt_precision():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(True) == "true" and cli.fmt(None) == ""
    assert cli.fmt([1.0, 2.5]) == "1;2.5"


def test_criterion_csv_and_manifest(tmp_path):
    status, out = invoke(tmp_path, "criterion", **CRITERION)
    assert status == cli.EXIT_OK
    rows = read_csv(out / "criterion.csv")
    assert [float(r["p"]) for r in rows] == CRITERION["p_list"]
    assert all(float(r["identity_residual"]) < 1e-6 for r in rows)
    m = manifest(out)
    assert m["complete"] is True
    for key in ("config_sha256", "versions", "wall_clock_seconds", "schema_version", "outputs"):
        assert key in m
    cfg = parse_and_validate(yaml.safe_dump(
        {"schema_version": 1, "subcommand": "criterion", "params": CRITERION}))
    assert m["config_sha256"] == cfg.digest


def test_rerun_is_byte_identical(tmp_path):
    _, a = invoke(tmp_path, "criterion", out="a", **CRITERION)
    _, b = invoke(tmp_path, "criterion", out="b", **CRITERION)
    assert (a / "criterion.csv").read_bytes() == (b / "criterion.csv").read_bytes()
    assert (a / "criterion_summary.json").read_bytes() == (b / "criterion_summary.json").read_bytes()


def test_worker_pool_keeps_parameter_order(tmp_path):
    _, a = invoke(tmp_path, "criterion", out="a", **CRITERION)
    _, b = invoke(tmp_path, "criterion", out="b", extra=["--workers", "2"], **CRITERION)
    assert (a / "criterion.csv").read_bytes() == (b / "criterion.csv").read_bytes()


def test_interrupted_run_keeps_rows(tmp_path, monkeypatch):
    real = cli.criterion_row
    calls = []

    def flaky(*args):
        calls.append(args)
        if len(calls) == 2:
            raise KeyboardInterrupt
        return real(*args)

    monkeypatch.setattr(cli, "criterion_row", flaky)
    status, out = invoke(tmp_path, "criterion", **CRITERION)
    assert status == cli.EXIT_INTERRUPTED
    assert len(read_csv(out / "criterion.csv")) == 1
    m = manifest(out)
    assert m["complete"] is False and m["error"]["error"] == "Interrupted"


def test_module_failure_gives_error_json(tmp_path, capsys):
    # Newton from this seed does not converge on so coarse a grid
    status, out = invoke(tmp_path, "cartesian", p=3.0, cells=11, max_iter=8)
    assert status == cli.EXIT_FAILURE
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["subcommand"] == "cartesian" and err["error"]
    assert json.loads((out / "error.json").read_text()) == err
    assert manifest(out)["complete"] is False


def test_config_error_exit_code(tmp_path, capsys):
    status, _ = invoke(tmp_path, "criterion", n=4, p_list=[3.1])
    assert status == cli.EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and len(err["violations"]) == 2


def test_missing_output_directory(tmp_path):
    path = write_config(tmp_path, "limit", n_list=[3])
    assert cli.main(["limit", "--config", str(path)]) == cli.EXIT_CONFIG


def test_seed_flag_range(tmp_path):
    path = write_config(tmp_path, "limit", n_list=[3])
    with pytest.raises(SystemExit):
        cli.main(["limit", "--config", str(path), "--seed", str(2**64)])


def test_limit_subcommand(tmp_path):
    status, out = invoke(tmp_path, "limit", n_list=[3, 4], n_nodes=513, extrapolate=False)
    assert status == 0
    rows = read_csv(out / "limit.csv")
    assert [r["n"] for r in rows] == ["3", "4"]
    assert all(float(r["lambda_star"]) < 0 for r in rows)
    for col in ("trunc_radius", "n_nodes", "sobolev_level", "derrick_residual"):
        assert col in rows[0]


def test_stationary_and_spectrum_subcommands(tmp_path):
    params = dict(n=4, k=2, p_list=[2.5, 2.6, 2.7], n_nodes=1025)
    assert invoke(tmp_path, "stationary", out="s", **params)[0] == 0
    assert len(read_csv(tmp_path / "s" / "stationary.csv")) == 3
    assert (tmp_path / "s" / "stationary_trends.json").exists()
    assert invoke(tmp_path, "spectrum", out="e", **params)[0] == 0
    rows = read_csv(tmp_path / "e" / "spectrum.csv")
    assert all(float(r["lambda"]) < 0 for r in rows)


def test_sweep_theta_traces(tmp_path):
    status, out = invoke(tmp_path, "sweep-theta", n=4, k=2, p=2.9, theta_list=[0.0, 1.0, 3.0],
                         n_nodes=1025, refine_check=True)
    assert status == 0
    rows = read_csv(out / "sweep_theta.csv")
    assert [r["outcome"] for r in rows] == ["Global", "NearStationary", "BlowUp"]
    assert all(r["stable"] == "true" for r in rows)
    for theta in ("1.0", "3.0"):
        payload = json.loads((out / "sweep_theta" / f"theta_{theta}.json").read_text())
        assert 0 < len(payload["trace"]["times"]) <= cli.TRACE_POINTS
        assert len(payload["trace"]["sup"]) == len(payload["trace"]["times"])


def test_evolve_subcommand(tmp_path):
    status, out = invoke(tmp_path, "evolve", n=4, k=2, p=2.9, theta=3.0, n_nodes=1025)
    assert status == 0
    v = json.loads((out / "evolve.json").read_text())
    assert v["outcome"]["kind"] == "BlowUp" and v["outcome"]["t_estimate_physical"] > 0


def test_cartesian_subcommand(tmp_path):
    status, out = invoke(tmp_path, "cartesian", p=3.0, cells=15, mu_plus=0.05, mu_minus=0.2,
                         offset=0.0)
    assert status == 0
    (row,) = read_csv(out / "cartesian.csv")
    assert row["outcome"] == "positive" and row["label"]


def test_study_subcommand(tmp_path):
    status, out = invoke(tmp_path, "study", n=4, k=2, p_list=[2.5, 2.6, 2.7], n_nodes=1025,
                         theta_list=[0.5, 1.0, 1.5])
    assert status == 0
    for name in ("study_stationary.csv", "study_spectrum.csv", "study_criterion.csv",
                 "study_summary.json"):
        assert (out / name).exists(), name
    summary = json.loads((out / "study_summary.json").read_text())
    assert summary["evolve_p"] == 2.7
