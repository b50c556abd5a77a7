"""Command-line behaviour: happy paths and the exit-code contract."""

import json

import pytest

from mlmcsr.cli import main
from mlmcsr.driver import run_mlmc_sr
from mlmcsr.estimators import EstimatorConfig
from mlmcsr.models import SyntheticNormalModel


@pytest.fixture
def config_path(tmp_path):
    doc = {
        "model": {"name": "synthetic-normal", "params": {}},
        "y": 0.8,
        "epsilons": [0.1, 0.05],
        "runs": 4,
        "seed": 7,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc))
    return path


def kv(captured):
    out = {}
    for line in captured.splitlines():
        if ": " in line:
            key, _, value = line.partition(": ")
            out[key] = value
    return out


def test_estimate_matches_direct_run(config_path, capsys):
    assert main(["estimate", "--config", str(config_path)]) == 0
    lines = kv(capsys.readouterr().out)
    direct = run_mlmc_sr(SyntheticNormalModel(q=1.0),
                         EstimatorConfig(y=0.8, epsilon=0.1), seed=7)
    assert lines["method"] == "mlmc-sr"
    assert float(lines["estimate_raw"]) == direct.estimate_raw
    assert float(lines["total_cost"]) == direct.total_cost
    assert int(lines["final_L"]) == direct.final_L
    assert lines["converged"] == "True"


def test_estimate_flag_overrides(config_path, capsys):
    assert main(["estimate", "--config", str(config_path),
                 "--seed", "11", "--method", "mc", "--threads", "2"]) == 0
    lines = kv(capsys.readouterr().out)
    assert lines["method"] == "mc"
    assert lines["seed"] == "11"


def test_experiment_writes_files(config_path, tmp_path, capsys):
    out_dir = tmp_path / "out"
    assert main(["experiment", "--config", str(config_path),
                 "--output-dir", str(out_dir)]) == 0
    stdout = capsys.readouterr().out
    assert "epsilon q rmse mean_cost" in stdout
    assert (out_dir / "runs.csv").exists()
    assert (out_dir / "summary.csv").exists()
    assert (out_dir / "histogram_e0.csv").exists()
    assert (out_dir / "histogram_e1.csv").exists()


def test_experiment_without_output_dir_is_config_error(config_path, capsys):
    assert main(["experiment", "--config", str(config_path)]) == 2
    assert "output" in capsys.readouterr().err


def test_missing_config_file_is_io_error(tmp_path, capsys):
    assert main(["estimate", "--config", str(tmp_path / "nope.json")]) == 4
    assert "error" in capsys.readouterr().err


def test_bad_json_is_config_error(tmp_path, capsys):
    path = tmp_path / "broken.json"
    path.write_text("{oops")
    assert main(["estimate", "--config", str(path)]) == 2
    assert "JSON" in capsys.readouterr().err


def test_unknown_model_is_config_error(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model": {"name": "nope"}, "y": 0.8,
                                "epsilons": [0.1], "runs": 1}))
    assert main(["estimate", "--config", str(path)]) == 2
    assert "unknown model" in capsys.readouterr().err


def test_level_cap_is_nonconvergence_exit(tmp_path, capsys):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"model": {"name": "synthetic-normal"},
                                "y": 0.8, "epsilons": [0.001], "runs": 1,
                                "max_level": 3}))
    assert main(["estimate", "--config", str(path)]) == 3
    assert "no convergence" in capsys.readouterr().err


def test_unwritable_output_dir_is_io_error(config_path, tmp_path, capsys):
    blocker = tmp_path / "blocked"
    blocker.write_text("")  # a file where the directory should go
    assert main(["experiment", "--config", str(config_path),
                 "--output-dir", str(blocker)]) == 4
    assert "error" in capsys.readouterr().err


def test_rates_prints_reference_row(capsys):
    assert main(["rates", "--epsilon", "0.1", "--q", "3"]) == 0
    out = capsys.readouterr().out
    assert "mlmc-sr" in out
    assert "100000" in out  # mc at q=3: eps^-5
    assert "1000" in out    # mlmc-sr at q=3: eps^-3


def test_models_list(capsys):
    assert main(["models", "list"]) == 0
    out = capsys.readouterr().out
    assert "synthetic-normal" in out
    assert "elliptic-flux-1d" in out


def test_version_flag():
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0


def test_skip_redundant_flag_round_trips(config_path, capsys):
    # printed rule plus the skip produces a run too; just exercise the flag
    assert main(["estimate", "--config", str(config_path),
                 "--skip-redundant"]) == 0
    assert "estimate_raw" in capsys.readouterr().out
