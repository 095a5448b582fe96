"""Command-line front end over JSON-lines datasets.

Subcommands cover the whole pipeline: ``synth`` draws a correlated
synthetic dataset, ``train`` fits a model, ``predict`` writes sample
paths, ``evaluate`` scores them, ``check`` verifies a checkpoint's
structural properties, and ``report`` renders the run artifacts as text.

Every command is a pure function of (config, input files, seed): re-runs
write byte-identical artifacts.  Configuration is a single JSON document
assembled from built-in defaults, an optional ``--config`` file, dotted
overrides such as ``--train.learning_rate=0.0001``, and the dedicated
flags, in that order of precedence; the resolved document is archived
into the output directory.

Only the standard library is imported at module level so that ``main``
can pin the BLAS thread pools from MQF2_THREADS before numpy loads.
"""

import argparse
import copy
import csv
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

CONFIG_NAME = "config.{}.json"
DATA_NAME = "data.jsonl"
TRUTH_CORR_NAME = "truth_corr.csv"
CHECKPOINT_NAME = "checkpoint.json"
LOSS_NAME = "loss.csv"
FORECASTS_NAME = "forecasts.csv"
REPORT_NAME = "report.json"
MODEL_CORR_NAME = "model_corr.csv"

# Leaves with a None default are optional paths or "derive it" markers;
# everything else carries the module defaults so the archived document is
# self-describing.  Nested keys mirror the config dataclasses.
DEFAULTS = {
    "seed": 0,
    "mode": "es",
    "samples": 200,
    "baseline": False,
    "out": None,
    "dataset": None,
    "checkpoint": None,
    "forecasts": None,
    "truth_corr": None,
    "inversion_tol": 1e-6,
    "inversion_max_iter": 200,
    "encoder": {
        "context_length": 24,
        "hidden_size": 40,
        "num_layers": 2,
    },
    "picnn": {
        "hidden_width": 40,
        "num_layers": 2,
        "gamma_floor": 0.01,
    },
    "train": {
        "beta": 1.0,
        "es_samples": 50,
        "batch_size": 32,
        "epochs": 50,
        "learning_rate": 1e-3,
        "grad_clip": 10.0,
        "instances_per_epoch": None,
        "initial_checkpoint": None,
    },
    "metrics": {
        "quantile_levels": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        "wql_steps": [1, 5, 10, 15, 20],
        "msis_zeta": 0.05,
        "seasonal_lag": None,
        "energy_beta": 1.0,
    },
    "gp": {
        "num_series": 500,
        "length": 24,
        "rbf_lengthscale": 5.0,
        "rbf_variance": 0.5,
        "periodic_period": 12.0,
        "periodic_lengthscale": 1.0,
        "periodic_variance": 0.5,
        "noise_jitter": 1e-6,
    },
}


# ---------------------------------------------------------------------------
# configuration assembly


def _config_error(message):
    from .errors import ConfigError

    return ConfigError(message)


def _merge_tree(base, override, prefix=""):
    """Recursively merge ``override`` into ``base``, rejecting unknown keys."""
    for key, value in override.items():
        dotted = f"{prefix}{key}"
        if key not in base:
            raise _config_error(f"unknown config key {dotted!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise _config_error(f"config key {dotted!r} must be an object")
            _merge_tree(base[key], value, prefix=f"{dotted}.")
        else:
            base[key] = value


def _apply_dotted(config, path, value):
    parts = path.split(".")
    node = config
    for i, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise _config_error(f"unknown config key {'.'.join(parts[: i + 1])!r}")
        node = node[part]
    leaf = parts[-1]
    if leaf not in node:
        raise _config_error(f"unknown config key {path!r}")
    if isinstance(node[leaf], dict):
        raise _config_error(f"config key {path!r} is a section, not a value")
    node[leaf] = value


def _parse_override(text):
    """``--a.b=value`` tokens carry JSON when it parses, raw strings otherwise."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def parse_dotted_overrides(extras):
    """Turn leftover ``--dotted.path value`` arguments into (path, value) pairs."""
    pairs = []
    i = 0
    while i < len(extras):
        token = extras[i]
        if not token.startswith("--"):
            raise _config_error(f"unexpected argument {token!r}")
        body = token[2:]
        if "=" in body:
            path, raw = body.split("=", 1)
            i += 1
        else:
            path = body
            if i + 1 >= len(extras):
                raise _config_error(f"override {token!r} is missing a value")
            raw = extras[i + 1]
            i += 2
        pairs.append((path, _parse_override(raw)))
    return pairs


def load_config_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise _config_error(f"config file {path}: not valid JSON ({exc})")
    if not isinstance(doc, dict):
        raise _config_error(f"config file {path}: top level must be an object")
    return doc


def resolve_config(args, extras):
    """Defaults <- config file <- dotted overrides <- dedicated flags."""
    config = copy.deepcopy(DEFAULTS)
    if args.config is not None:
        _merge_tree(config, load_config_file(args.config))
    for path, value in parse_dotted_overrides(extras):
        _apply_dotted(config, path, value)
    for name in ("out", "seed", "mode", "samples"):
        value = getattr(args, name, None)
        if value is not None:
            config[name] = value
    for name in ("dataset", "checkpoint", "forecasts", "num_series"):
        value = getattr(args, name, None)
        if value is not None:
            if name == "num_series":
                config["gp"]["num_series"] = value
            else:
                config[name] = value
    if getattr(args, "truth_corr", None) is not None:
        config["truth_corr"] = args.truth_corr
    if getattr(args, "baseline", False):
        config["baseline"] = True

    if config["mode"] not in ("es", "ml"):
        raise _config_error(f"mode must be 'es' or 'ml', got {config['mode']!r}")
    if not isinstance(config["seed"], int) or isinstance(config["seed"], bool):
        raise _config_error(f"seed must be an integer, got {config['seed']!r}")
    if not isinstance(config["samples"], int) or config["samples"] < 1:
        raise _config_error(f"samples must be a positive integer, got {config['samples']!r}")
    if not (isinstance(config["inversion_tol"], (int, float)) and config["inversion_tol"] > 0):
        raise _config_error(f"inversion_tol must be > 0, got {config['inversion_tol']!r}")
    if not isinstance(config["inversion_max_iter"], int) or config["inversion_max_iter"] < 1:
        raise _config_error(
            f"inversion_max_iter must be a positive integer, got {config['inversion_max_iter']!r}"
        )
    return config


def _require_out(config):
    if not config["out"]:
        raise _config_error("an output directory is required (--out DIR)")
    out = Path(config["out"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _archive_config(config, out, command):
    # one archive per command so a shared out directory keeps the provenance
    # of every stage, not just the last one
    with open(out / CONFIG_NAME.format(command), "w", encoding="utf-8") as fh:
        json.dump(config, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _input_path(config, key, out, default_name):
    """Explicit path if configured, else the conventional file in the out dir."""
    if config[key]:
        return Path(config[key])
    if out is None:
        raise _config_error(f"no {key} path given and no --out directory to search")
    return out / default_name


# ---------------------------------------------------------------------------
# shared model plumbing


def _build_configs(config, dataset):
    """Encoder/potential configs with the cross-field constraints resolved:
    the potential's input is the dataset horizon, its context is the encoder
    state, and the covariate count follows the dataset frequency."""
    from . import data as datamod
    from .encoder import EncoderConfig
    from .picnn import PicnnConfig

    ec = EncoderConfig(
        context_length=config["encoder"]["context_length"],
        feature_dim=datamod.feature_dim(dataset.freq),
        hidden_size=config["encoder"]["hidden_size"],
        num_layers=config["encoder"]["num_layers"],
    )
    pc = PicnnConfig(
        input_dim=dataset.prediction_length,
        context_dim=ec.hidden_size,
        hidden_width=config["picnn"]["hidden_width"],
        num_layers=config["picnn"]["num_layers"],
        gamma_floor=config["picnn"]["gamma_floor"],
    )
    return ec, pc


def _metric_config(config, freq):
    from . import metrics

    section = config["metrics"]
    lag = section["seasonal_lag"]
    if lag is None:
        lag = metrics.seasonal_lag_for(freq)
    return metrics.MetricConfig(
        quantile_levels=tuple(section["quantile_levels"]),
        wql_steps=tuple(section["wql_steps"]),
        msis_zeta=section["msis_zeta"],
        seasonal_lag=lag,
        energy_beta=section["energy_beta"],
    )


# ---------------------------------------------------------------------------
# commands


def cmd_synth(config):
    """Draw the synthetic correlated dataset and its ground-truth correlation."""
    from . import data as datamod

    out = _require_out(config)
    _archive_config(config, out, "synth")
    gp = datamod.GpConfig(seed=config["seed"], **config["gp"])
    dataset = datamod.gp_synthesize(gp)
    data_path = out / DATA_NAME
    datamod.save_jsonlines(dataset, data_path)
    datamod.export_corr(datamod.gp_truth_correlation(gp), out / TRUTH_CORR_NAME)
    print(
        f"wrote {data_path} ({gp.num_series} series of length {gp.length}) "
        f"and {out / TRUTH_CORR_NAME}"
    )
    return EXIT_OK


def cmd_train(config):
    from . import data as datamod
    from . import model as modelmod
    from . import training

    out = _require_out(config)
    _archive_config(config, out, "train")
    dataset = datamod.load_jsonlines(_input_path(config, "dataset", out, DATA_NAME))
    ec, pc = _build_configs(config, dataset)
    section = config["train"]
    tc = training.TrainConfig(
        mode=config["mode"],
        beta=section["beta"],
        es_samples=section["es_samples"],
        batch_size=section["batch_size"],
        epochs=section["epochs"],
        learning_rate=section["learning_rate"],
        grad_clip=section["grad_clip"],
        seed=config["seed"],
        instances_per_epoch=section["instances_per_epoch"],
    )
    initial = None
    if section["initial_checkpoint"]:
        initial = modelmod.load_checkpoint(section["initial_checkpoint"])
    model, losses = training.train(dataset, ec, pc, tc, initial_model=initial)

    checkpoint_path = out / CHECKPOINT_NAME
    modelmod.save_checkpoint(model, checkpoint_path)
    with open(out / LOSS_NAME, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss"])
        for epoch, loss in enumerate(losses, start=1):
            writer.writerow([epoch, repr(float(loss))])
    print(
        f"wrote {checkpoint_path} and {out / LOSS_NAME} "
        f"({tc.epochs} epochs, final loss {losses[-1]:.6g})"
    )
    return EXIT_OK


def _forecast_rows(model, dataset, config):
    """Per-series sample paths in original units, conditioning each forecast
    on the window that precedes the final horizon (all zeros when the series
    is exactly one horizon long).  Inversion failures are collected, not
    fatal per series, so one bad row cannot hide the rest of the run."""
    import numpy as np

    from . import data as datamod
    from . import model as modelmod
    from . import training
    from .errors import NonConvergence, SeriesTooShort
    from .seeding import rng_for

    n = model.picnn_config.input_dim
    n_feat = model.encoder_config.feature_dim
    context_length = model.encoder_config.context_length
    if dataset.prediction_length != n:
        raise _config_error(
            f"checkpoint horizon {n} != dataset prediction_length "
            f"{dataset.prediction_length}"
        )
    if datamod.feature_dim(dataset.freq) != n_feat:
        raise _config_error(
            f"checkpoint expects {n_feat} covariates; frequency "
            f"{dataset.freq!r} provides {datamod.feature_dim(dataset.freq)}"
        )
    short = [s.item_id for s in dataset.series if len(s) < n]
    if short:
        raise SeriesTooShort(
            f"{len(short)} series shorter than the {n}-step horizon", ids=short
        )

    rng = rng_for(config["seed"], "sampling")
    rows = []
    failures = []
    for s in dataset.series:
        j = len(s.target) - n
        feats = None
        if n_feat and j > 0:
            feats = datamod.calendar_features(dataset.freq, s.start, len(s.target))
        window, scale = training.conditioning_window(
            s.target, feats, n_feat, j, context_length
        )
        h = modelmod.context_vector(model, window)
        try:
            paths = modelmod.sample_paths(
                model,
                h,
                config["samples"],
                rng,
                tol=config["inversion_tol"],
                max_iter=config["inversion_max_iter"],
            )
        except NonConvergence as exc:
            failures.append((s.item_id, exc))
            continue
        rows.append((s.item_id, np.asarray(paths) * scale))
    return rows, failures


def _baseline_rows(dataset, config):
    from . import training
    from .seeding import rng_for

    n = dataset.prediction_length
    baseline = training.baseline_independent(dataset, n)
    rng = rng_for(config["seed"], "sampling")
    return [(s.item_id, baseline.sample(config["samples"], rng)) for s in dataset.series]


def cmd_predict(config):
    from . import data as datamod
    from . import model as modelmod
    from .errors import NonConvergence

    out = _require_out(config)
    _archive_config(config, out, "predict")
    dataset = datamod.load_jsonlines(_input_path(config, "dataset", out, DATA_NAME))
    if config["baseline"]:
        rows, failures = _baseline_rows(dataset, config), []
        n = dataset.prediction_length
    else:
        model = modelmod.load_checkpoint(
            _input_path(config, "checkpoint", out, CHECKPOINT_NAME)
        )
        rows, failures = _forecast_rows(model, dataset, config)
        n = model.picnn_config.input_dim

    forecasts_path = out / FORECASTS_NAME
    with open(forecasts_path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["series_id", "sample_index"] + [f"step_{k}" for k in range(1, n + 1)]
        )
        for item_id, paths in rows:
            for index, path in enumerate(paths):
                writer.writerow([item_id, index] + [repr(float(v)) for v in path])
    print(
        f"wrote {forecasts_path} ({len(rows)} series x {config['samples']} paths)"
    )
    if failures:
        for item_id, exc in failures:
            print(f"inversion failed for series {item_id}: {exc}", file=sys.stderr)
        raise NonConvergence(
            f"sampling failed for {len(failures)} of {len(dataset.series)} series",
            residual=failures[0][1].residual,
            iterations=failures[0][1].iterations,
        )
    return EXIT_OK


def _read_forecasts(path, dataset):
    """Forecast CSV back as an (m, S, n) array aligned with the dataset."""
    import numpy as np

    from .errors import DataFormatError

    with open(path, newline="", encoding="ascii") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["series_id", "sample_index"]:
            raise DataFormatError(f"{path}: expected a series_id,sample_index header")
        n = len(header) - 2
        by_series = {}
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != n + 2:
                raise DataFormatError(f"{path}:{line}: expected {n + 2} columns")
            try:
                index = int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{line}: {exc}")
            by_series.setdefault(row[0], []).append((index, values))

    ids = [s.item_id for s in dataset.series]
    missing = [item_id for item_id in ids if item_id not in by_series]
    if missing:
        raise DataFormatError(
            f"{path}: no forecasts for {len(missing)} series, first {missing[:3]}"
        )
    extra = sorted(set(by_series) - set(ids))
    if extra:
        raise DataFormatError(
            f"{path}: forecasts for unknown series, first {extra[:3]}"
        )
    counts = {len(entries) for entries in by_series.values()}
    if len(counts) != 1:
        raise DataFormatError(f"{path}: unequal path counts per series {sorted(counts)}")
    paths = np.empty((len(ids), counts.pop(), n))
    for i, item_id in enumerate(ids):
        entries = sorted(by_series[item_id])
        if [e[0] for e in entries] != list(range(len(entries))):
            raise DataFormatError(
                f"{path}: series {item_id} sample indices are not 0..S-1"
            )
        paths[i] = [e[1] for e in entries]
    return paths


def cmd_evaluate(config):
    import numpy as np

    from . import data as datamod
    from . import metrics

    out = _require_out(config)
    _archive_config(config, out, "evaluate")
    dataset = datamod.load_jsonlines(_input_path(config, "dataset", out, DATA_NAME))
    paths = _read_forecasts(
        _input_path(config, "forecasts", out, FORECASTS_NAME), dataset
    )
    n = paths.shape[2]
    if any(len(s) < n for s in dataset.series):
        raise _config_error(f"dataset has series shorter than the {n}-step horizon")
    targets = np.stack([s.target[-n:] for s in dataset.series])
    history = [s.target[:-n] for s in dataset.series]
    if all(len(h) == 0 for h in history):
        history = None

    truth = None
    if config["truth_corr"]:
        truth = datamod.read_corr(config["truth_corr"])
    elif config["out"] and (out / TRUTH_CORR_NAME).exists():
        truth = datamod.read_corr(out / TRUTH_CORR_NAME)

    report = metrics.evaluate_forecasts(
        targets,
        paths,
        config=_metric_config(config, dataset.freq),
        history=history,
        true_corr=truth,
    )
    report_path = out / REPORT_NAME
    with open(report_path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")
    if truth is not None:
        datamod.export_corr(metrics.pooled_correlation(paths), out / MODEL_CORR_NAME)
    summary = f"mean_wql {report.mean_wql:.6g}, sum_crps {report.sum_crps:.6g}"
    if report.corr_mae is not None:
        summary += f", corr_mae {report.corr_mae:.6g}"
    print(f"wrote {report_path} ({summary})")
    return EXIT_OK


def _run_checks(config, checkpoint_path):
    """Structural checks on a checkpoint, cheapest first.  Returns
    (name, passed, detail) triples; numeric probes only run once the
    configuration itself validates."""
    import dataclasses

    import numpy as np

    from . import model as modelmod
    from . import picnn
    from .encoder import EncoderConfig
    from .errors import ConfigError, NumericalError
    from .picnn import PicnnConfig
    from .seeding import rng_for

    raw = modelmod.load_checkpoint(checkpoint_path, validate=False)
    results = []

    model = None
    try:
        pc = PicnnConfig(**dataclasses.asdict(raw.picnn_config))
        ec = EncoderConfig(**dataclasses.asdict(raw.encoder_config))
        model = modelmod.QuantileModel(pc, ec, raw.mode, raw.params)
        results.append(("config_valid", True, ""))
    except (ConfigError, TypeError) as exc:
        results.append(("config_valid", False, str(exc)))

    if model is not None:
        try:
            modelmod.validate_params(model)
            results.append(("params_wellformed", True, ""))
        except ConfigError as exc:
            results.append(("params_wellformed", False, str(exc)))
            model = None

    if model is None:
        done = {name for name, _, _ in results}
        for name in (
            "params_wellformed",
            "monotone_map",
            "round_trip",
            "inverse_jacobian_spd",
        ):
            if name not in done:
                results.append((name, False, "skipped: checkpoint failed earlier checks"))
        return results

    n = model.picnn_config.input_dim
    rng = rng_for(config["seed"], "sampling")
    h = rng.standard_normal(model.picnn_config.context_dim)

    a1 = rng.standard_normal((1000, n))
    a2 = rng.standard_normal((1000, n))
    g1 = picnn.grad_potential(model.params, model.picnn_config, a1, h)
    g2 = picnn.grad_potential(model.params, model.picnn_config, a2, h)
    inner = np.einsum("ij,ij->i", g1 - g2, a1 - a2)
    worst = float(np.min(inner))
    results.append(
        ("monotone_map", worst >= -1e-6, f"min pairwise inner product {worst:.3g}")
    )

    try:
        alpha = rng.standard_normal((100, n))
        y = picnn.grad_potential(model.params, model.picnn_config, alpha, h)
        back = modelmod.invert(
            model, y, h, tol=config["inversion_tol"], max_iter=config["inversion_max_iter"]
        )
        err = float(np.max(np.abs(back - alpha)))
        results.append(("round_trip", err <= 1e-4, f"max round-trip error {err:.3g}"))
    except NumericalError as exc:
        results.append(("round_trip", False, str(exc)))

    try:
        probes = picnn.grad_potential(
            model.params, model.picnn_config, rng.standard_normal((5, n)), h
        )
        rep = modelmod.check_inverse_monotone(model, probes, h=h)
        detail = (
            f"max symmetry error {float(np.max(rep.symmetry_errors)):.3g}, "
            f"min eigenvalue {float(np.min(rep.min_eigenvalues)):.3g}"
        )
        results.append(("inverse_jacobian_spd", rep.passed, detail))
    except NumericalError as exc:
        results.append(("inverse_jacobian_spd", False, str(exc)))
    return results


def cmd_check(config):
    out = Path(config["out"]) if config["out"] else None
    checkpoint_path = _input_path(config, "checkpoint", out, CHECKPOINT_NAME)
    results = _run_checks(config, checkpoint_path)
    for name, passed, detail in results:
        line = f"{name}: {'pass' if passed else 'FAIL'}"
        if detail:
            line += f" ({detail})"
        print(line)
    failed = [name for name, passed, _ in results if not passed]
    if not failed:
        return EXIT_OK
    print(f"{len(failed)} checks failed: {', '.join(failed)}", file=sys.stderr)
    structural = {"config_valid", "params_wellformed"}
    return EXIT_CONFIG if structural.intersection(failed) else EXIT_NUMERICAL


def cmd_report(config):
    from .errors import DataFormatError

    if not config["out"]:
        raise _config_error("an output directory is required (--out DIR)")
    out = Path(config["out"])
    report_path = out / REPORT_NAME
    loss_path = out / LOSS_NAME
    rendered = False

    if loss_path.exists():
        with open(loss_path, newline="", encoding="ascii") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            losses = [float(row[1]) for row in reader if row]
        if header != ["epoch", "mean_loss"] or not losses:
            raise DataFormatError(f"{loss_path}: malformed loss curve")
        best = min(range(len(losses)), key=losses.__getitem__)
        print(f"training loss ({loss_path.name}):")
        print(f"  epochs      {len(losses)}")
        print(f"  first       {losses[0]:.6g}")
        print(f"  last        {losses[-1]:.6g}")
        print(f"  best        {losses[best]:.6g} at epoch {best + 1}")
        rendered = True

    if report_path.exists():
        with open(report_path, encoding="utf-8") as fh:
            doc = json.load(fh)
        if not isinstance(doc, dict):
            raise DataFormatError(f"{report_path}: top level must be an object")
        if rendered:
            print()
        print(f"evaluation ({report_path.name}):")
        for key in sorted(doc):
            value = doc[key]
            text = f"{value:.6g}" if isinstance(value, (int, float)) else str(value)
            print(f"  {key:<18} {text}")
        rendered = True

    if not rendered:
        raise DataFormatError(
            f"nothing to report: neither {report_path} nor {loss_path} exists"
        )
    return EXIT_OK


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "check": cmd_check,
    "report": cmd_report,
}


# ---------------------------------------------------------------------------
# argument parsing and entry point


def build_parser():
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--config", metavar="PATH", help="JSON config file")
    shared.add_argument("--out", metavar="DIR", help="output directory")
    shared.add_argument("--seed", type=int, metavar="N", help="master random seed")
    shared.add_argument("--mode", choices=("es", "ml"), help="training objective")
    shared.add_argument(
        "--samples", type=int, metavar="S", help="sample paths per series"
    )

    parser = argparse.ArgumentParser(
        prog="mqf2",
        description="Multivariate quantile forecasting over JSON-lines datasets.",
        epilog=(
            "Any config key can be overridden by dotted path, e.g. "
            "--train.epochs=5 --gp.length=12.  MQF2_THREADS caps BLAS threads."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("synth", parents=[shared], help="draw the synthetic dataset")
    p.add_argument("--num-series", type=int, metavar="N", help="series to draw")

    p = sub.add_parser("train", parents=[shared], help="fit a model")
    p.add_argument("--dataset", metavar="PATH", help="JSON-lines dataset")

    p = sub.add_parser("predict", parents=[shared], help="write sample paths")
    p.add_argument("--dataset", metavar="PATH", help="JSON-lines dataset")
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint")
    p.add_argument(
        "--baseline",
        action="store_true",
        help="forecast from per-step moments instead of the model",
    )

    p = sub.add_parser("evaluate", parents=[shared], help="score forecasts")
    p.add_argument("--dataset", metavar="PATH", help="JSON-lines dataset")
    p.add_argument("--forecasts", metavar="PATH", help="forecast CSV")
    p.add_argument("--truth-corr", metavar="PATH", help="true correlation CSV")

    p = sub.add_parser("check", parents=[shared], help="verify a checkpoint")
    p.add_argument("--checkpoint", metavar="PATH", help="model checkpoint")

    sub.add_parser("report", parents=[shared], help="render run artifacts as text")
    return parser


def _cap_threads():
    cap = os.environ.get("MQF2_THREADS")
    if not cap:
        return
    for name in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[name] = cap


def main(argv=None):
    _cap_threads()
    parser = build_parser()
    args, extras = parser.parse_known_args(argv)

    from .errors import ConfigError, DataFormatError, NumericalError

    try:
        config = resolve_config(args, extras)
        return COMMANDS[args.command](config)
    except ConfigError as exc:
        print(f"mqf2: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"mqf2: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except DataFormatError as exc:
        print(f"mqf2: data error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"mqf2: io error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
