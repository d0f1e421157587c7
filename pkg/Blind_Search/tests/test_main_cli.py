"""
Tests for Blind Search CLI argument handling, exit codes and output.
"""

import json
import pytest
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent.parent))

from src.main import (
    EXIT_DISTRIBUTION,
    EXIT_NUMERICAL,
    EXIT_OK,
    EXIT_USAGE,
    SEED_ENV,
    build_config,
    main,
    parse_cli_args,
)


def test_subcommand_is_required():
    with pytest.raises(SystemExit) as excinfo:
        parse_cli_args([])
    assert excinfo.value.code == EXIT_USAGE


def test_exact_requires_n():
    with pytest.raises(SystemExit) as excinfo:
        parse_cli_args(["exact"])
    assert excinfo.value.code == EXIT_USAGE


def test_continuous_does_not_need_n():
    args = parse_cli_args(["continuous", "--eps", "0.03125,0.015625"])
    assert args.eps == [0.03125, 0.015625]


@pytest.mark.parametrize("argv", [
    ["exact", "--n", "0"],
    ["simulate", "--n", "4", "--runs", "0"],
    ["bounds", "--n", "4", "--C", "-1"],
    ["continuous", "--x0", "1.5"],
    ["scaling", "--n-min-exp", "6", "--n-max-exp", "4"],
    ["simulate", "--n", "4", "--seed", "-3"],
    ["exact", "--n", "4", "--format", "xml"],
])
def test_invalid_arguments_exit_with_usage_code(argv):
    with pytest.raises(SystemExit) as excinfo:
        parse_cli_args(argv)
    assert excinfo.value.code == EXIT_USAGE


def test_seed_from_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "17")
    assert parse_cli_args(["simulate", "--n", "4"]).seed == 17


def test_explicit_seed_overrides_environment(monkeypatch):
    monkeypatch.setenv(SEED_ENV, "17")
    assert parse_cli_args(["simulate", "--n", "4", "--seed", "0x10"]).seed == 16


def test_config_file_and_flags_are_layered(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"potential": {"C": 2.0}, "simulation": {"runs": 50}}))

    config = build_config(parse_cli_args(["bounds", "--n", "4", "-c", str(config_path)]))
    assert config["potential"]["C"] == 2.0
    assert config["simulation"]["runs"] == 50
    assert config["exact"]["n_cap"] == 32768

    config = build_config(parse_cli_args(["bounds", "--n", "4", "-c", str(config_path), "--C", "3"]))
    assert config["potential"]["C"] == 3.0


def test_unreadable_config_is_usage_error(tmp_path):
    assert main(["exact", "--n", "4", "-c", str(tmp_path / "missing.json")]) == EXIT_USAGE


def test_exact_json_output(capsys):
    assert main(["exact", "--n", "4", "--dist", "pow2", "--format", "json"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["e_value"] == pytest.approx(2.625, abs=1e-12)
    assert data["t"] == pytest.approx([0.0, 2.0, 2.0, 3.0, 3.5], abs=1e-12)
    assert data["upper_bound"] == pytest.approx(10.0)


def test_exact_oracle(capsys):
    assert main(["exact", "--n", "2", "--dist", "harmonic", "--format", "json", "--oracle"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["closed_form"] == pytest.approx(1.75, abs=1e-12)


def test_exact_csv_header(capsys):
    assert main(["exact", "--n", "2", "--dist", "uniform"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "a,t,a_uniform,b"
    assert len(lines) == 4


def test_emit_dist_round_trip(tmp_path):
    dist_path = tmp_path / "dist.json"
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    assert main(["exact", "--n", "8", "--dist", "pow2", "--emit-dist", str(dist_path), "--out", str(first)]) == EXIT_OK
    assert main(["exact", "--n", "8", "--dist", f"file:{dist_path}", "--out", str(second)]) == EXIT_OK
    assert first.read_text() == second.read_text()


def test_bounds_csv(capsys):
    assert main(["bounds", "--n", "2", "--dist", "uniform"]) == EXIT_OK
    header, row = capsys.readouterr().out.splitlines()
    assert header == "name,n,lower_bound,e_value,upper_bound,phi0,max_drop,certified_lower_bound,verdict"
    fields = row.split(",")
    assert fields[0] == "uniform"
    assert float(fields[3]) == pytest.approx(2.0)
    assert float(fields[4]) == pytest.approx(6.0)
    assert fields[-1] == "lb <= E <= ub"


def test_potential_csv_header(capsys):
    assert main(["potential", "--n", "8", "--dist", "harmonic"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "s,drop,delta0,delta_mid"
    assert len(lines) == 9


def test_strict_potential_with_small_constant_is_rejected(tmp_path):
    out = tmp_path / "potential.csv"
    code = main(["potential", "--n", "2", "--dist", "uniform", "--C", "1", "--strict", "--out", str(out)])
    assert code == EXIT_DISTRIBUTION
    assert not out.exists()


def test_simulate_output_independent_of_workers(tmp_path):
    outputs = []
    for workers in ("1", "2"):
        out = tmp_path / f"sim_{workers}.csv"
        code = main([
            "simulate", "--n", "16", "--dist", "harmonic", "--runs", "200",
            "--seed", "5", "--workers", workers, "--out", str(out),
        ])
        assert code == EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1]
    assert outputs[0].decode().splitlines()[0] == "process,n,runs,mean,std_error,censored,master_seed"


@pytest.mark.parametrize("dist", ["zipf", "file:does_not_exist.json", "adversarial:B=0.5"])
def test_invalid_distribution_exit_code(tmp_path, dist):
    out = tmp_path / "out.csv"
    assert main(["exact", "--n", "4", "--dist", dist, "--out", str(out)]) == EXIT_DISTRIBUTION
    assert not out.exists()


def test_cap_exceeded_exit_code(tmp_path):
    out = tmp_path / "out.csv"
    code = main(["exact", "--n", "100", "--n-cap-override", "50", "--out", str(out)])
    assert code == EXIT_NUMERICAL
    assert not out.exists()


def test_unwritable_output_is_usage_error(tmp_path, caplog):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    code = main(["exact", "--n", "4", "--dist", "pow2", "--out", str(blocker / "x.csv")])
    assert code == EXIT_USAGE
    assert "cannot write output" in caplog.text


def test_unwritable_emit_dist_writes_nothing(tmp_path):
    blocker = tmp_path / "blocker"
    blocker.write_text("")
    out = tmp_path / "out.csv"
    code = main([
        "exact", "--n", "4", "--dist", "pow2",
        "--emit-dist", str(blocker / "dist.json"), "--out", str(out),
    ])
    assert code == EXIT_USAGE
    assert not out.exists()


def test_metadata_sidecar(tmp_path):
    out = tmp_path / "bounds.csv"
    assert main(["bounds", "--n", "4", "--seed", "9", "--metadata", "--out", str(out)]) == EXIT_OK
    sidecar = json.loads((tmp_path / "bounds.csv.meta.json").read_text())
    assert sidecar["command"] == "bounds"
    assert sidecar["seed"] == 9
    assert sidecar["dist"] == "harmonic"


def test_optimize_interval_zero_iterations(capsys):
    assert main(["optimize", "--n", "4", "--family", "interval", "--iters", "0", "--format", "json"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["best_value"] == pytest.approx(2.625, abs=1e-12)
    assert data["best_weights"] == [0.5, 0.5, 0.0, 0.0]


def test_compare_table(capsys):
    assert main(["compare", "--n", "4", "--strategies", "harmonic,pow2"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "name,e_value,upper_bound,lower_bound"
    assert [line.split(",")[0] for line in lines[1:]] == ["harmonic", "pow2"]


def test_scaling_json(capsys):
    assert main(["scaling", "--dist", "pow2", "--n-min-exp", "2", "--n-max-exp", "4", "--format", "json"]) == EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert [row["n"] for row in data["rows"]] == [4, 8, 16]
    assert data["rows"][0]["e_value"] == pytest.approx(2.625, abs=1e-12)
    assert data["e_ratio_spread"] == "nan"


def test_continuous_csv(capsys):
    assert main(["continuous", "--eps", "0.03125", "--runs", "20", "--seed", "1"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "epsilon,p,mean_steps,std_error,halving_rate"
    assert len(lines) == 2


def test_continuous_rejects_large_epsilon():
    assert main(["continuous", "--eps", "0.3", "--runs", "5"]) == EXIT_DISTRIBUTION
