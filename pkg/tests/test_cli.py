#!/usr/bin/env pytest
import json
import math
import pathlib
import pytest
from overlaysim import cli, routing

DIR = pathlib.Path(__file__).parent


@pytest.fixture(autouse=True)
def serial(monkeypatch):
    monkeypatch.setenv("OVERLAY_SIM_THREADS", "1")


def test_bounds(capsys):
    assert cli.main(["bounds", "--n", "1000"]) == 0
    lines = capsys.readouterr().out.splitlines()
    keys = [line.split()[0] for line in lines]
    for key in ("n", "series_8_4", "K1", "K2", "M"):
        assert key in keys
    (m_line,) = [line for line in lines if line.split()[0] == "M"]
    assert m_line.split()[1] == "15"


def test_bounds_csv(capsys):
    assert cli.main(["bounds", "--primary-only", "--csv"]) == 0
    out = capsys.readouterr().out.splitlines()
    header = out[-2].split(",")
    assert "K1" in header
    assert "M" not in header
    assert len(out[-1].split(",")) == len(header)


def test_simulate_stdout(capsys):
    argv = ["simulate", "--n", "200", "--frames", "4", "--primary-only"]
    assert cli.main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 2
    body = json.loads(lines[1])
    assert body["n"] == 200
    assert body["secondary"] is None
    assert body["frames"] == 4


def test_config_error(capsys):
    assert cli.main(["simulate", "--beta", "0.5"]) == 2
    assert capsys.readouterr().err.startswith("overlaysim: ")


def test_profile_and_flags(tmp_path):
    path = tmp_path / "run.yml"
    path.write_text("n: 300\nframes: 9\nalpha: 3\n")
    args = cli.build_parser().parse_args(
        ["bounds", "--config", str(path), "--frames", "5"]
    )
    config = cli._network(args)
    assert config.n == 300
    assert config.alpha == 3
    assert config.frames == 5


def test_n_list_makes_sweep():
    args = cli.build_parser().parse_args(["sweep", "--n", "400,200"])
    settings = cli._settings(args)
    assert settings["n"] == 400
    assert settings["sweep"] == (400, 200)


def test_sweep_with_fit(tmp_path, capsys):
    argv = [
        "sweep",
        "--n",
        "200,300,400",
        "--frames",
        "4",
        "--primary-only",
        "--fit",
        "lambda_p",
        "--out",
        str(tmp_path),
    ]
    assert cli.main(argv) == 0
    assert (tmp_path / "summary.csv").exists()
    fits = json.loads((tmp_path / "fits.json").read_text())
    assert list(fits) == ["lambda_p"]


def test_mask_dump(capsys):
    argv = ["mask-dump", "--n", "1000", "--beta", "2", "--slot", "12"]
    assert cli.main(argv) == 0
    out = capsys.readouterr().out
    assert out.startswith("P1\n270 270\n")
    assert len(out.splitlines()) == 2 + 270


def test_mask_dump_needs_secondary(capsys):
    assert cli.main(["mask-dump", "--primary-only"]) == 2


def test_paths_from_deployment(tmp_path):
    dump = tmp_path / "paths.csv"
    argv = ["paths", "--load", str(DIR / "golden.deploy"), "--dump", str(dump)]
    assert cli.main(argv) == 0
    lines = dump.read_text().splitlines()
    assert lines[0] == ",".join(routing.PATH_FIELDS)
    assert len(lines) == 1 + 15


@pytest.mark.parametrize("dump", [["--dump"], ["--dump", "-"], []])
def test_paths_dump_to_stdout(capsys, dump):
    argv = ["paths", "--load", str(DIR / "golden.deploy")] + dump
    assert cli.main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == ",".join(routing.PATH_FIELDS)
    assert len(lines) == 1 + 15


def test_paths_writes_deployment(tmp_path, capsys):
    deployment = tmp_path / "net.deploy"
    argv = [
        "paths",
        "--n",
        "200",
        "--primary-only",
        "--deployment",
        str(deployment),
    ]
    assert cli.main(argv) == 0
    assert deployment.read_text().startswith("# overlaysim-deployment")
    out = capsys.readouterr().out.splitlines()
    assert out[0] == ",".join(routing.PATH_FIELDS)


def test_validate(capsys):
    argv = ["validate", "--n", "10000", "--tier", "primary"]
    assert cli.main(argv + ["--trials", "300"]) == 0
    report = json.loads(capsys.readouterr().out)
    (occupancy,) = report["occupancy"]
    assert occupancy["tier"] == "primary"
    assert occupancy["passed"] is True
    assert report["chernoff"]["violations"] == 0


def test_analyze(tmp_path, capsys):
    metrics = tmp_path / "metrics.jsonl"
    lines = [json.dumps({"generated": "2026-01-01T00:00:00"})]
    for n in (500, 1000, 2000):
        lines.append(
            json.dumps(
                {
                    "n": n,
                    "m": n**1.5,
                    "seed": 0,
                    "primary": {
                        "lambda_min": 1 / math.sqrt(n * math.log(n)),
                        "D": math.sqrt(n / math.log(n)),
                    },
                    "secondary": None,
                }
            )
        )
    metrics.write_text("\n".join(lines) + "\n")
    argv = ["analyze", "--in", str(metrics), "--fit", "lambda_p,D_s"]
    assert cli.main(argv) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["lambda_p"]["slope"] == pytest.approx(-0.5)
    assert "error" in report["D_s"]


def test_analyze_missing_file(tmp_path):
    argv = ["analyze", "--in", str(tmp_path / "none.jsonl")]
    assert cli.main(argv) == 1
