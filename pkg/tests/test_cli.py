"""End-to-end coverage of the command-line pipeline at toy scale."""

import csv
import json
from pathlib import Path

import numpy as np
import pytest

from mqf2 import cli, data, metrics, model as model_mod, training
from mqf2.encoder import EncoderConfig
from mqf2.picnn import PicnnConfig


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


TINY = [
    "--seed", 9,
    "--picnn.hidden_width=6",
    "--encoder.hidden_size=8",
    "--train.epochs=2",
    "--train.es_samples=4",
    "--train.batch_size=4",
]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One full synth -> train -> predict -> evaluate run, shared read-only."""
    out = tmp_path_factory.mktemp("pipeline")
    assert run_cli("synth", "--out", out, "--seed", 9, "--num-series", 8,
                   "--gp.length=8") == 0
    assert run_cli("train", "--out", out, *TINY) == 0
    assert run_cli("predict", "--out", out, "--seed", 9, "--samples", 15) == 0
    assert run_cli("evaluate", "--out", out, "--seed", 9) == 0
    return out


def test_synth_writes_dataset_metadata_and_truth(pipeline):
    lines = (pipeline / "data.jsonl").read_text().splitlines()
    assert len(lines) == 8
    assert all(json.loads(line)["item_id"].startswith("gp_") for line in lines)
    meta = json.loads((pipeline / "metadata.json").read_text())
    assert meta == {"freq": "H", "prediction_length": 8}
    assert data.read_corr(pipeline / "truth_corr.csv").shape == (8, 8)


def test_synth_default_series_count(tmp_path):
    # default config draws the full synthetic panel; shrink only the length
    assert run_cli("synth", "--out", tmp_path, "--gp.length=2") == 0
    lines = (tmp_path / "data.jsonl").read_text().splitlines()
    assert len(lines) == 500


def test_synth_reruns_are_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run_cli("synth", "--out", tmp_path / d, "--seed", 5,
                       "--num-series", 4, "--gp.length=6") == 0
    assert (tmp_path / "a/data.jsonl").read_bytes() == (tmp_path / "b/data.jsonl").read_bytes()
    assert (tmp_path / "a/truth_corr.csv").read_bytes() == (tmp_path / "b/truth_corr.csv").read_bytes()
    assert run_cli("synth", "--out", tmp_path / "c", "--seed", 6,
                   "--num-series", 4, "--gp.length=6") == 0
    assert (tmp_path / "a/data.jsonl").read_bytes() != (tmp_path / "c/data.jsonl").read_bytes()


def test_archived_config_reflects_overrides(pipeline):
    # every stage leaves its own archive when the out directory is shared
    doc = json.loads((pipeline / "config.train.json").read_text())
    assert doc["seed"] == 9
    assert doc["picnn"]["hidden_width"] == 6
    assert doc["train"]["epochs"] == 2
    synth = json.loads((pipeline / "config.synth.json").read_text())
    assert synth["gp"]["num_series"] == 8
    assert (pipeline / "config.predict.json").exists()
    assert (pipeline / "config.evaluate.json").exists()


def test_train_writes_checkpoint_and_loss_curve(pipeline):
    model = model_mod.load_checkpoint(pipeline / "checkpoint.json")
    assert model.mode == "es"
    assert model.picnn_config.input_dim == 8
    with open(pipeline / "loss.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["epoch", "mean_loss"]
    assert [r[0] for r in rows[1:]] == ["1", "2"]
    assert all(np.isfinite(float(r[1])) for r in rows[1:])


def test_predict_row_count_and_header(pipeline):
    with open(pipeline / "forecasts.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["series_id", "sample_index"] + [f"step_{k}" for k in range(1, 9)]
    assert len(rows) == 1 + 8 * 15
    assert rows[1][0] == "gp_0000" and rows[1][1] == "0"


def test_predict_seed_controls_output(pipeline, tmp_path):
    args = ["predict", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
            "--checkpoint", pipeline / "checkpoint.json", "--samples", 15]
    assert run_cli(*args, "--seed", 9) == 0
    first = (tmp_path / "forecasts.csv").read_bytes()
    assert first == (pipeline / "forecasts.csv").read_bytes()
    assert run_cli(*args, "--seed", 10) == 0
    assert (tmp_path / "forecasts.csv").read_bytes() != first


def test_evaluate_report_contents(pipeline):
    doc = json.loads((pipeline / "report.json").read_text())
    assert "mean_wql" in doc and "sum_crps" in doc and "energy_score" in doc
    # the synthetic panel has no history beyond the horizon and ships a truth
    # correlation, so msis is absent and corr_mae present
    assert "msis" not in doc
    assert 0.0 < doc["corr_mae"] < 2.0
    model_corr = data.read_corr(pipeline / "model_corr.csv")
    assert model_corr.shape == (8, 8)
    assert np.allclose(np.diag(model_corr), 1.0)


def test_check_passes_on_trained_checkpoint(pipeline, capsys):
    assert run_cli("check", "--out", pipeline, "--seed", 0) == 0
    out = capsys.readouterr().out
    for name in ("config_valid", "params_wellformed", "monotone_map",
                 "round_trip", "inverse_jacobian_spd"):
        assert f"{name}: pass" in out


def test_report_renders_loss_and_metrics(pipeline, capsys):
    assert run_cli("report", "--out", pipeline) == 0
    out = capsys.readouterr().out
    assert "mean_wql" in out
    assert "epochs      2" in out


def test_report_empty_dir_is_io_error(tmp_path):
    assert run_cli("report", "--out", tmp_path) == 4


# ---------------------------------------------------------------------------
# configuration handling


def test_config_file_and_dotted_precedence(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"seed": 1, "gp": {"length": 6, "num_series": 3}}))
    assert run_cli("synth", "--out", tmp_path, "--config", cfg, "--gp.length=4") == 0
    doc = json.loads((tmp_path / "config.synth.json").read_text())
    assert doc["gp"]["length"] == 4        # dotted override beats the file
    assert doc["gp"]["num_series"] == 3    # file beats the default
    first = json.loads((tmp_path / "data.jsonl").read_text().splitlines()[0])
    assert len(first["target"]) == 4


def test_unknown_config_keys_are_rejected(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"gp": {"wavelength": 2}}))
    assert run_cli("synth", "--out", tmp_path, "--config", cfg) == 2
    assert run_cli("synth", "--out", tmp_path, "--gp.wavelength=2") == 2
    assert run_cli("synth", "--out", tmp_path, "--bogus-flag", 1) == 2


def test_override_value_parsing():
    assert cli._parse_override("0.5") == 0.5
    assert cli._parse_override("null") is None
    assert cli._parse_override("plain") == "plain"
    assert cli._parse_override("[1, 2]") == [1, 2]
    pairs = cli.parse_dotted_overrides(["--a.b=3", "--c.d", "x"])
    assert pairs == [("a.b", 3), ("c.d", "x")]
    from mqf2.errors import ConfigError
    with pytest.raises(ConfigError):
        cli.parse_dotted_overrides(["--a.b"])
    with pytest.raises(ConfigError):
        cli.parse_dotted_overrides(["stray"])


def test_defaults_track_module_defaults():
    assert cli.DEFAULTS["metrics"]["quantile_levels"] == list(metrics.DEFAULT_LEVELS)
    assert cli.DEFAULTS["metrics"]["wql_steps"] == list(metrics.DEFAULT_STEPS)
    mc = metrics.MetricConfig()
    assert cli.DEFAULTS["metrics"]["msis_zeta"] == mc.msis_zeta
    assert cli.DEFAULTS["metrics"]["energy_beta"] == mc.energy_beta
    tc = training.TrainConfig()
    for key in ("beta", "es_samples", "batch_size", "epochs", "learning_rate",
                "grad_clip", "instances_per_epoch"):
        assert cli.DEFAULTS["train"][key] == getattr(tc, key)
    ec = EncoderConfig(context_length=1, feature_dim=0)
    assert cli.DEFAULTS["encoder"]["hidden_size"] == ec.hidden_size
    assert cli.DEFAULTS["encoder"]["num_layers"] == ec.num_layers
    pc = PicnnConfig(input_dim=1, context_dim=1)
    assert cli.DEFAULTS["picnn"]["hidden_width"] == pc.hidden_width
    assert cli.DEFAULTS["picnn"]["num_layers"] == pc.num_layers
    assert cli.DEFAULTS["picnn"]["gamma_floor"] == pc.gamma_floor
    gp = data.GpConfig()
    for key in cli.DEFAULTS["gp"]:
        assert cli.DEFAULTS["gp"][key] == getattr(gp, key)


def test_threads_cap_sets_blas_env(monkeypatch):
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("MQF2_THREADS", "2")
    cli._cap_threads()
    import os
    assert os.environ["OMP_NUM_THREADS"] == "2"
    assert os.environ["OPENBLAS_NUM_THREADS"] == "2"
    assert os.environ["MKL_NUM_THREADS"] == "2"


# ---------------------------------------------------------------------------
# error paths and exit codes


def test_invalid_mode_flag_exits_two():
    with pytest.raises(SystemExit) as exc:
        run_cli("train", "--out", "/tmp/unused", "--mode", "bogus")
    assert exc.value.code == 2


def test_invalid_picnn_width_fails_before_compute(pipeline, tmp_path):
    rc = run_cli("train", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
                 "--picnn.hidden_width=0")
    assert rc == 2
    assert not (tmp_path / "checkpoint.json").exists()


def test_missing_dataset_and_checkpoint_exit_codes(tmp_path):
    assert run_cli("train", "--out", tmp_path, "--dataset", tmp_path / "no.jsonl") == 4
    assert run_cli("predict", "--out", tmp_path,
                   "--checkpoint", tmp_path / "no.json") == 4


def test_out_directory_required(tmp_path):
    assert run_cli("synth") == 2


# ---------------------------------------------------------------------------
# likelihood-mode route, baseline, and warm start


@pytest.fixture(scope="module")
def ml_run(pipeline, tmp_path_factory):
    out = tmp_path_factory.mktemp("ml_run")
    assert run_cli("train", "--out", out, "--dataset", pipeline / "data.jsonl",
                   "--mode", "ml", "--seed", 4, "--picnn.hidden_width=6",
                   "--encoder.hidden_size=8", "--train.epochs=1",
                   "--train.batch_size=4") == 0
    return out


def test_ml_predict_inverts_and_evaluates(pipeline, ml_run):
    assert run_cli("predict", "--out", ml_run, "--dataset", pipeline / "data.jsonl",
                   "--seed", 4, "--samples", 6) == 0
    with open(ml_run / "forecasts.csv", newline="") as fh:
        assert len(list(csv.reader(fh))) == 1 + 8 * 6
    assert run_cli("evaluate", "--out", ml_run, "--dataset", pipeline / "data.jsonl",
                   "--truth-corr", pipeline / "truth_corr.csv", "--seed", 4) == 0
    doc = json.loads((ml_run / "report.json").read_text())
    assert "corr_mae" in doc


def test_ml_predict_starved_solver_exits_three(pipeline, ml_run, tmp_path, capsys):
    rc = run_cli("predict", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
                 "--checkpoint", ml_run / "checkpoint.json", "--samples", 3,
                 "--inversion_max_iter=1")
    assert rc == 3
    assert "inversion failed for series" in capsys.readouterr().err


def test_baseline_predict_and_evaluate(pipeline, tmp_path):
    assert run_cli("predict", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
                   "--baseline", "--seed", 2, "--samples", 12) == 0
    with open(tmp_path / "forecasts.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert len(rows) == 1 + 8 * 12
    assert run_cli("evaluate", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
                   "--seed", 2) == 0
    assert (tmp_path / "report.json").exists()


def test_train_warm_start_from_checkpoint(pipeline, tmp_path):
    rc = run_cli("train", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
                 *TINY, "--train.epochs=1",
                 f"--train.initial_checkpoint={pipeline / 'checkpoint.json'}")
    assert rc == 0
    warm = model_mod.load_checkpoint(tmp_path / "checkpoint.json")
    cold = model_mod.load_checkpoint(pipeline / "checkpoint.json")
    assert any(not np.array_equal(warm.params[k], cold.params[k]) for k in warm.params)


def test_train_warm_start_mode_mismatch(pipeline, ml_run, tmp_path):
    rc = run_cli("train", "--out", tmp_path, "--dataset", pipeline / "data.jsonl",
                 *TINY, f"--train.initial_checkpoint={ml_run / 'checkpoint.json'}")
    assert rc == 2


# ---------------------------------------------------------------------------
# evaluate on hand-built inputs


def write_forecast_csv(path, ids, paths):
    n = paths.shape[2]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["series_id", "sample_index"] + [f"step_{k}" for k in range(1, n + 1)])
        for item_id, block in zip(ids, paths):
            for index, row in enumerate(block):
                writer.writerow([item_id, index] + [repr(float(v)) for v in row])


def test_evaluate_perfect_forecasts_score_zero(pipeline, tmp_path):
    dataset = data.load_jsonlines(pipeline / "data.jsonl")
    targets = np.stack([s.target[-8:] for s in dataset.series])
    paths = np.repeat(targets[:, None, :], 2, axis=1)
    write_forecast_csv(tmp_path / "forecasts.csv", [s.item_id for s in dataset.series], paths)
    assert run_cli("evaluate", "--out", tmp_path, "--dataset", pipeline / "data.jsonl") == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["mean_wql"] == 0.0
    assert doc["sum_crps"] == 0.0


def test_evaluate_history_enables_msis(tmp_path):
    series = [
        data.Series(f"s{i}", "2021-03-01 00:00:00", np.linspace(1.0, 12.0, 12) + i)
        for i in range(3)
    ]
    dataset = data.TimeSeriesDataset(series, "H", 4)
    data.save_jsonlines(dataset, tmp_path / "data.jsonl")
    rng = np.random.default_rng(0)
    paths = rng.normal(10.0, 1.0, size=(3, 5, 4))
    write_forecast_csv(tmp_path / "forecasts.csv", [s.item_id for s in series], paths)
    # hourly seasonality exceeds the held-in history, so pin the lag explicitly
    assert run_cli("evaluate", "--out", tmp_path, "--metrics.seasonal_lag=1") == 0
    doc = json.loads((tmp_path / "report.json").read_text())
    assert doc["msis"] > 0.0
    assert "corr_mae" not in doc


def test_evaluate_rejects_malformed_forecasts(pipeline, tmp_path):
    (tmp_path / "forecasts.csv").write_text("series_id,sample_index,step_1\n" "gp_0000,0,1.0\n")
    assert run_cli("evaluate", "--out", tmp_path, "--dataset", pipeline / "data.jsonl") == 4


# ---------------------------------------------------------------------------
# checkpoint health checks


def test_check_fresh_random_model(tmp_path):
    rng = np.random.default_rng(3)
    model = model_mod.new_model(
        PicnnConfig(input_dim=2, context_dim=4, hidden_width=5, num_layers=2),
        EncoderConfig(context_length=6, feature_dim=0, hidden_size=4, num_layers=1),
        "es",
        rng,
    )
    model_mod.save_checkpoint(model, tmp_path / "ckpt.json")
    assert run_cli("check", "--checkpoint", tmp_path / "ckpt.json", "--seed", 1) == 0


def test_check_negative_gamma_floor_fails_config_valid(pipeline, tmp_path, capsys):
    doc = json.loads((pipeline / "checkpoint.json").read_text())
    doc["potential"]["gamma_floor"] = -0.25
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert run_cli("check", "--checkpoint", tmp_path / "bad.json") == 2
    assert "config_valid: FAIL" in capsys.readouterr().out


def test_check_truncated_params_fail_wellformed(pipeline, tmp_path, capsys):
    doc = json.loads((pipeline / "checkpoint.json").read_text())
    name = sorted(doc["params"])[0]
    doc["params"][name]["values"] = doc["params"][name]["values"][:-1]
    doc["params"][name]["shape"] = [len(doc["params"][name]["values"])]
    (tmp_path / "bad.json").write_text(json.dumps(doc))
    assert run_cli("check", "--checkpoint", tmp_path / "bad.json") == 2
    out = capsys.readouterr().out
    assert "config_valid: pass" in out
    assert "params_wellformed: FAIL" in out
