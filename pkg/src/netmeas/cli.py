"""Command-line interface.

Usage::

    netmeas simulate   [--config sim.yaml]   [--seed N] [--out DIR]
    netmeas calibrate   --config cal.yaml                [--out DIR]
    netmeas propagate   --config prop.yaml   [--seed N] [--out DIR] [--trials N]
    netmeas train       --config train.yaml  [--seed N] [--out DIR]
    netmeas predict     --config pred.yaml   [--seed N] [--out DIR] [--trials N]
    netmeas redundancy  --config red.yaml               [--out DIR]
    netmeas report      --config report.yaml            [--out DIR]

Configuration documents are YAML; relative paths inside them are resolved
against the directory of the configuration file.  Every command writes its
outputs plus ``manifest.json`` into ``--out`` and embeds the manifest in each
JSON report.  Exit status: 0 success, 1 runtime failure, 2 configuration or
parse failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__, sim
from .calibration import Affine, Polynomial, calibrate_least_squares, model_from_dict, read_calibration_csv
from .errors import ConfigError, ConfigurationError, DataError, NetmeasError
from .expr import Expression
from .features import correlation_matrix, redundancy_report
from .learning import r_squared
from .pipeline import PipelineModel, PipelineSpec, auto_select, fit_pipeline, predict_pipeline, predict_with_uncertainty
from .propagation import MeasurementFunction, validate_lpu_vs_mc
from .uncertain import RandomStream, distribution_from_dict

DEFAULT_SEED = 20240601
DEFAULT_TRIALS = 100_000

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2

_FORGING_SENSORS = ["power", "temp_1", "temp_2", "force_left", "force_right", "chuck_speed",
                    "radial_speed", "power_dup", "temp_1_dup", "force_left_dup", "noise_1", "noise_2"]
_FORGING_SEGMENTATION = {"phases": [
    {"name": "heating", "sensor": "power", "threshold": 10.0, "edge": "rise"},
    {"name": "forming", "sensor": "force_left", "threshold": 150.0, "edge": "rise"},
]}


def _forging_candidate(name, features, k, min_leaf):
    return {
        "name": name,
        "segmentation": _FORGING_SEGMENTATION,
        "features": {s: features for s in _FORGING_SENSORS},
        "selection": {"k": k},
        "learner": {"family": "forest", "n_trees": 100, "min_leaf": min_leaf},
    }


# Candidate pipelines used by ``train`` when the config lists none.
DEFAULT_CANDIDATES = [
    _forging_candidate("forest_moments_k5", [{"method": "moments", "phase": "forming"}], 5, 2),
    _forging_candidate("forest_moments_segments_k10", [
        {"method": "moments", "phase": "forming"},
        {"method": "segment_means", "n": 4, "phase": "forming"},
    ], 10, 2),
    _forging_candidate("forest_heating_forming_k8", [
        {"method": "moments", "phase": "heating"},
        {"method": "moments", "phase": "forming"},
    ], 8, 3),
]


# --------------------------------------------------------------------------
# helpers


class _Context:
    def __init__(self, args, config: dict, config_bytes: bytes, base: Path):
        self.args = args
        self.config = config
        self.base = base
        self.seed = args.seed if args.seed is not None else int(config.get("seed", DEFAULT_SEED))
        self.out = Path(args.out)
        self.manifest = {
            "command": args.command,
            "config_sha256": hashlib.sha256(config_bytes).hexdigest(),
            "seed": self.seed,
            "netmeas_version": __version__,
        }

    def path(self, key, required=True):
        value = self.config.get(key)
        if value is None:
            if required:
                raise ConfigError(f"config is missing '{key}'")
            return None
        p = Path(value)
        p = p if p.is_absolute() else self.base / p
        if not p.exists():
            raise ConfigError(f"'{key}' refers to missing path {p}")
        return p

    def say(self, msg):
        if not self.args.quiet:
            print(msg)


def _clean(obj):
    """Plain JSON types; non-finite floats become ``None``."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _write_json(path: Path, doc: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(_clean(doc), fh, indent=2)
        fh.write("\n")


def _write_manifest(ctx: _Context, outputs):
    _write_json(ctx.out / "manifest.json", {**ctx.manifest, "outputs": sorted(outputs)})


def _load_config(args):
    """``(config dict, raw bytes, base dir)``; a missing ``--config`` yields an
    empty document."""
    if args.config is None:
        return {}, b"", Path.cwd()
    path = Path(args.config)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    raw = path.read_bytes()
    try:
        doc = yaml.safe_load(raw) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return doc, raw, path.parent


def _as_config_error(fn, *args, what="config"):
    try:
        return fn(*args)
    except ConfigurationError:
        raise
    except (NetmeasError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {what}: {exc}") from None


# --------------------------------------------------------------------------
# commands


def run_simulate(ctx: _Context):
    cfg = ctx.config
    if not cfg:
        cfg = sim.forging_config()
    elif cfg.get("preset"):
        presets = {"forging": sim.forging_config, "dynamic_distortion": sim.dynamic_distortion_config}
        if cfg["preset"] not in presets:
            raise ConfigError(f"unknown preset '{cfg['preset']}' (choose from {sorted(presets)})")
        cfg = {**presets[cfg["preset"]](), **{k: v for k, v in cfg.items() if k != "preset"}}
    process, sensors, n_runs = _as_config_error(sim.load_config, cfg, what="simulation config")
    bench = sim.make_benchmark(process, sensors, n_runs, RandomStream(ctx.seed))
    sim.write_benchmark(bench, ctx.out, extra_manifest=ctx.manifest)
    ctx.say(f"wrote {n_runs} runs to {ctx.out}")


def run_calibrate(ctx: _Context):
    cfg = ctx.config
    data_path = ctx.path("data")
    model = _as_config_error(model_from_dict, cfg.get("model", {"family": "affine"}), what="model")
    beta0 = cfg.get("initial")
    if beta0 is None:
        beta0 = _identity_beta(model)
    data = read_calibration_csv(data_path)
    res = calibrate_least_squares(model, data, beta0)
    b = res.b
    doc = {
        "manifest": ctx.manifest,
        "model": model.to_dict(),
        "estimates": b.estimates,
        "std_uncertainties": b.std_uncertainties,
        "covariance": b.covariance,
        "correlation": b.correlation(),
        "chi_square": res.chi_square,
        "degrees_of_freedom": len(data) - model.n_params,
        "converged": res.converged,
        "iterations": res.iterations,
        "residuals": res.residuals,
    }
    _write_json(ctx.out / "calibration.json", doc)
    _write_manifest(ctx, ["calibration.json"])
    ctx.say("b = " + ", ".join(f"{v:.6g} +- {u:.2g}" for v, u in zip(b.estimates, b.std_uncertainties)))


def _identity_beta(model):
    """Parameters making the forward model the identity map."""
    if isinstance(model, Affine):
        return [1.0, 0.0]
    if isinstance(model, Polynomial):
        return [0.0, 1.0] + [0.0] * (model.n_params - 2)
    raise ConfigError("composed models need explicit 'initial' parameters")


def _measurement_function(cfg):
    expr_src = cfg.get("expression")
    if not isinstance(expr_src, str):
        raise ConfigError("config needs an 'expression' string")
    inputs = cfg.get("inputs")
    if not isinstance(inputs, dict) or not inputs:
        raise ConfigError("config needs an 'inputs' mapping of name -> distribution")
    names = list(inputs)
    expr = Expression(expr_src, names=names)
    dists = [_as_config_error(distribution_from_dict, inputs[n], what=f"input '{n}'") for n in names]
    if any(d.dim != 1 for d in dists):
        raise ConfigError("propagate inputs must be scalar distributions")
    f = MeasurementFunction(lambda X: expr.evaluate_rows(np.atleast_2d(X), names), len(names),
                            vectorized=True, names=tuple(names))
    return expr, names, dists, f


def run_propagate(ctx: _Context):
    cfg = ctx.config
    expr, names, dists, f = _measurement_function(cfg)
    trials = ctx.args.trials or int(cfg.get("trials", DEFAULT_TRIALS))
    tol = float(cfg.get("tolerance", 0.05))
    verdict = validate_lpu_vs_mc(f, dists, trials, RandomStream(ctx.seed), tol)
    doc = {
        "manifest": ctx.manifest,
        "expression": expr.source,
        "inputs": {n: cfg["inputs"][n] for n in names},
        "trials": trials,
        "seed": ctx.seed,
        "lpu": verdict.lpu.to_dict(),
        "monte_carlo": verdict.mc.to_dict(),
        "verdict": {"accepted": verdict.accepted, "tolerance": tol,
                    "relative_difference": abs(verdict.u_lpu - verdict.u_mc) / verdict.u_mc if verdict.u_mc else None},
    }
    _write_json(ctx.out / "propagation.json", doc)
    _write_manifest(ctx, ["propagation.json"])
    ctx.say(f"y = {verdict.lpu.estimate:.6g}  u_LPU = {verdict.u_lpu:.6g}  u_MC = {verdict.u_mc:.6g}  "
            f"{'accepted' if verdict.accepted else 'rejected'}")


def _labelled_runs(directory):
    runs, targets = sim.read_benchmark(directory)
    missing = [r.run_id for r, t in zip(runs, targets) if t is None]
    if missing:
        raise DataError(f"{directory}: no target for runs {missing[:5]}")
    return runs, np.asarray(targets, dtype=float)


def run_train(ctx: _Context):
    cfg = ctx.config
    data_dir = ctx.path("data")
    cand_docs = cfg.get("candidates") or DEFAULT_CANDIDATES
    candidates = [_as_config_error(PipelineSpec.from_dict, c, what=f"candidate {i}") for i, c in enumerate(cand_docs)]
    folds = int(cfg.get("folds", 5))
    runs, y = _labelled_runs(data_dir)
    n_train = int(cfg.get("train", min(60, len(runs) - 1)))
    if not 2 <= n_train < len(runs):
        raise ConfigError(f"'train' must lie in [2, {len(runs) - 1}] for {len(runs)} runs")
    stream = RandomStream(ctx.seed)
    perm = stream.child(0).generator().permutation(len(runs))
    tr, te = np.sort(perm[:n_train]), np.sort(perm[n_train:])
    train_runs = [runs[i] for i in tr]
    report = auto_select(candidates, train_runs, y[tr], folds, stream.child(1))
    if report.best_spec is None:
        errs = "; ".join(f"{c.name}: {c.error}" for c in report.ranking)
        raise NetmeasError(f"all candidates failed: {errs}")
    model = fit_pipeline(report.best_spec, train_runs, y[tr], stream.child(2))
    model.cv = report.to_dict()
    pred = predict_pipeline(model, [runs[i] for i in te])
    held_out = {
        "r2": r_squared(y[te], pred),
        "mse": float(np.mean((pred - y[te]) ** 2)),
        "n_test": int(te.size),
    }
    doc = {
        "manifest": ctx.manifest,
        "selection": report.to_dict(),
        "selected_features": model.selected_names,
        "held_out": held_out,
        "train_runs": [runs[i].run_id for i in tr],
        "test_runs": [runs[i].run_id for i in te],
        "test_predictions": pred,
        "test_targets": y[te],
    }
    _write_json(ctx.out / "model.json", {"manifest": ctx.manifest, "model": model.to_dict()})
    _write_json(ctx.out / "cv_report.json", doc)
    _write_manifest(ctx, ["model.json", "cv_report.json"])
    ctx.say(f"selected {report.best_spec.name or report.best_index}; held-out R2 = {held_out['r2']:.4f}")


def run_predict(ctx: _Context):
    cfg = ctx.config
    model_path = ctx.path("model")
    data_dir = ctx.path("data")
    try:
        doc = json.loads(model_path.read_text())
        model = PipelineModel.from_dict(doc.get("model", doc))
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{model_path}: not a model document ({exc})") from None
    runs, targets = sim.read_benchmark(data_dir)
    pred = predict_pipeline(model, runs)
    noise = cfg.get("noise_std") or {}
    unc = None
    if noise:
        trials = ctx.args.trials or int(cfg.get("trials", 1000))
        unc = predict_with_uncertainty(model, runs, noise, trials, RandomStream(ctx.seed))
    _mkdir(ctx.out)
    with (ctx.out / "predictions.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "prediction"] + (["mc_mean", "std_uncertainty"] if unc else []) + ["target"])
        for i, r in enumerate(runs):
            row = [r.run_id, repr(float(pred[i]))]
            if unc:
                row += [repr(float(unc[i].estimate)), repr(float(unc[i].std_uncertainty))]
            row.append("" if targets[i] is None else repr(float(targets[i])))
            w.writerow(row)
    summary = {"manifest": ctx.manifest, "n_runs": len(runs), "noise_std": noise}
    known = [i for i, t in enumerate(targets) if t is not None]
    if len(known) >= 2:
        yt = np.asarray([targets[i] for i in known])
        summary["r2"] = r_squared(yt, pred[known])
        summary["mse"] = float(np.mean((pred[known] - yt) ** 2))
    _write_json(ctx.out / "predict_report.json", summary)
    _write_manifest(ctx, ["predictions.csv", "predict_report.json"])
    ctx.say(f"predicted {len(runs)} runs")


def _mkdir(path: Path):
    path.mkdir(parents=True, exist_ok=True)


def run_redundancy(ctx: _Context):
    cfg = ctx.config
    data_dir = ctx.path("data")
    threshold = float(cfg.get("threshold", 0.99))
    runs, _ = sim.read_benchmark(data_dir)
    groups = redundancy_report(runs, threshold)
    sensors, R = correlation_matrix(runs)
    _mkdir(ctx.out)
    with (ctx.out / "correlation.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sensor", *sensors])
        for s, row in zip(sensors, R):
            w.writerow([s, *(repr(float(v)) for v in row)])
    _write_json(ctx.out / "redundancy.json", {"manifest": ctx.manifest, "threshold": threshold, "groups": groups})
    _write_manifest(ctx, ["correlation.csv", "redundancy.json"])
    ctx.say(f"{len(groups)} redundant group(s): " + "; ".join(",".join(g) for g in groups))


def _flatten(prefix, obj, rows):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, list) and obj and all(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    elif isinstance(obj, list):
        rows.append((prefix, json.dumps(obj)))
    else:
        rows.append((prefix, "" if obj is None else repr(obj) if isinstance(obj, float) else str(obj)))


def run_report(ctx: _Context):
    """Collect JSON reports into one ``source,key,value`` table."""
    sources = ctx.config.get("sources")
    if not isinstance(sources, list) or not sources:
        raise ConfigError("config needs a non-empty 'sources' list of JSON report paths")
    paths = []
    for s in sources:
        p = Path(s)
        p = p if p.is_absolute() else ctx.base / p
        if not p.is_file():
            raise ConfigError(f"report source not found: {p}")
        paths.append(p)
    rows = []
    for p in paths:
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{p}:{exc.lineno}: invalid JSON") from None
        flat = []
        _flatten("", doc, flat)
        rows.extend((p.name, k, v) for k, v in flat)
    _mkdir(ctx.out)
    with (ctx.out / "summary.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source", "key", "value"])
        w.writerows(rows)
    _write_manifest(ctx, ["summary.csv"])
    ctx.say(f"summarized {len(paths)} report(s) into {ctx.out / 'summary.csv'}")


COMMANDS = {
    "simulate": (run_simulate, "generate a synthetic benchmark directory", False),
    "calibrate": (run_calibrate, "least-squares sensor calibration from CSV", True),
    "propagate": (run_propagate, "LPU and Monte Carlo uncertainty propagation", True),
    "train": (run_train, "select and fit a prediction pipeline", True),
    "predict": (run_predict, "apply a fitted pipeline to runs", True),
    "redundancy": (run_redundancy, "group highly correlated sensors", True),
    "report": (run_report, "tabulate JSON reports", True),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netmeas", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"netmeas {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text, needs_config) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=needs_config, help="YAML configuration document")
        p.add_argument("--seed", type=_u64, default=None, help=f"master seed (default {DEFAULT_SEED})")
        p.add_argument("--out", default=f"{name}_out", help="output directory")
        p.add_argument("--trials", type=int, default=None, help="Monte Carlo trials")
        p.add_argument("--quiet", action="store_true", help="suppress progress output")
    return parser


def _u64(text):
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid seed {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    fn = COMMANDS[args.command][0]
    try:
        config, raw, base = _load_config(args)
        ctx = _Context(args, config, raw, base)
        fn(ctx)
    except ConfigurationError as exc:
        print(f"netmeas {args.command}: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NetmeasError as exc:
        print(f"netmeas {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - exit-code contract
        print(f"netmeas {args.command}: unexpected error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
