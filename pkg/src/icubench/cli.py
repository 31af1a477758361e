"""Command-line entry point: synth, build, features, train, evaluate, report."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import ConfigError, Task, ccs_map, load_phenotype_config, load_variable_config

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_MISSING_INPUT = 3
EXIT_SCHEMA = 4
EXIT_TEST_REFUSED = 5
EXIT_DIVERGED = 6
DATA_ENV = "ICUBENCH_DATA"


class CliError(Exception):
    def __init__(self, category: str, message: str, code: int):
        super().__init__(message)
        self.category = category
        self.code = code


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError("invalid_flags", message, EXIT_USAGE)


# --- helpers -------------------------------------------------------------------
def _sha256_path(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for f in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(str(f.relative_to(path)).encode() + b"\0")
            h.update(hashlib.sha256(f.read_bytes()).digest())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


def _write_manifest(out: Path, args: argparse.Namespace, inputs: dict[str, Path]) -> None:
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items()) if k != "func"}
    manifest = {
        "tool": "icubench",
        "version": __version__,
        "config": config,
        "inputs": {k: {"path": str(p), "sha256": _sha256_path(p)} for k, p in sorted(inputs.items())},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(obj):
    """Undefined metrics (NaN) become null so outputs stay strict JSON."""
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if np.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _data_root(value: str | None, what: str) -> Path:
    if value is None:
        env = os.environ.get(DATA_ENV)
        if not env:
            raise CliError("missing_input", f"no {what} given and ${DATA_ENV} is unset", EXIT_MISSING_INPUT)
        value = env
    p = Path(value)
    if not p.exists():
        raise CliError("missing_input", f"{what} {p} does not exist", EXIT_MISSING_INPUT)
    return p


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise CliError("missing_input", f"{what} {path} does not exist", EXIT_MISSING_INPUT)
    return path


def _specs(args):
    return load_variable_config(getattr(args, "variables", None))


def _ccs(args):
    return ccs_map(load_phenotype_config(getattr(args, "phenotypes", None)))


def _task(name: str | None) -> Task | None:
    return None if name in (None, "multitask") else Task(name)


# --- subcommands ----------------------------------------------------------------
def cmd_synth(args) -> None:
    from .syngen import SynthConfig, SynthConfigError, generate

    overrides = {}
    if args.config:
        overrides = json.loads(_require(Path(args.config), "config").read_text())
        known = set(SynthConfig.__dataclass_fields__)
        unknown = set(overrides) - known
        if unknown:
            raise CliError("invalid_config", f"unknown synth config keys {sorted(unknown)}", EXIT_SCHEMA)
        if "phenotype_prevalence" in overrides:
            overrides["phenotype_prevalence"] = tuple(overrides["phenotype_prevalence"])
    cfg = replace(SynthConfig(), **overrides)
    cfg = replace(cfg, seed=args.seed, n_patients=args.patients, signal_strength=args.strength,
                  signal_kind=args.signal)
    out = Path(args.out)
    try:
        cfg.validate()
    except SynthConfigError as e:
        raise CliError("invalid_config", str(e), EXIT_SCHEMA) from None
    generate(cfg, out, jobs=args.jobs)
    _write_manifest(out, args, {})


def cmd_build(args) -> None:
    from .pipeline import SchemaError, build_benchmark, load_tables, write_benchmark

    tables_dir = _data_root(args.tables, "tables directory")
    specs = _specs(args)
    try:
        tables = load_tables(tables_dir)
        bench = build_benchmark(tables, specs, _ccs(args), args.test_fraction, args.seed)
    except FileNotFoundError as e:
        raise CliError("missing_input", str(e), EXIT_MISSING_INPUT) from None
    except SchemaError as e:
        raise CliError("schema_violation", str(e), EXIT_SCHEMA) from None
    out = Path(args.out)
    write_benchmark(bench, specs, out)
    _write_manifest(out, args, {"tables": tables_dir})


def _load_bench(args):
    from .pipeline import read_benchmark

    root = _data_root(args.data, "benchmark directory")
    try:
        return root, read_benchmark(root, _specs(args))
    except FileNotFoundError as e:
        raise CliError("missing_input", str(e), EXIT_MISSING_INPUT) from None


def cmd_features(args) -> None:
    from .datasets import feature_matrix
    from .featlin import write_feature_csv

    root, bench = _load_bench(args)
    specs = _specs(args)
    task = Task(args.task)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for side, insts in zip(("train", "test"), bench.instances[task]):
        X, _, stays = feature_matrix(bench.episodes, insts, specs)
        write_feature_csv(out / f"{side}_features.csv", stays, [i.window_end_hours for i in insts], X, specs)
    _write_manifest(out, args, {"data": root})


def _linear_kind(task: Task) -> str:
    return {Task.IHM: "binary", Task.DECOMP: "binary", Task.LOS: "multiclass", Task.PHENO: "multilabel"}[task]


def _train_linear(args, bench, specs, out: Path) -> dict:
    from .datasets import feature_matrix, validation_split
    from .featlin import fit_feature_scaler, predict_linear, save_linear, train_linear
    from .train import task_score

    task = Task(args.task)
    insts = bench.instances[task][0]
    X, y, stays = feature_matrix(bench.episodes, insts, specs)
    patient = {e.stay_id: e.patient_id for e in bench.episodes}
    pats = np.asarray([patient[s] for s in stays])
    tr_p, va_p = validation_split(sorted(set(pats.tolist())), 0.15, args.seed)
    tr = np.isin(pats, list(tr_p))
    scaler = fit_feature_scaler(X[tr])
    model = train_linear(scaler.apply(X[tr]), y[tr], args.reg, args.C, _linear_kind(task), seed=args.seed)
    save_linear(model, out / "model.bin")
    val = {}
    if (~tr).any():
        val[task.value] = task_score(task.value, predict_linear(model, scaler.apply(X[~tr])), y[~tr])
    return {"model": "linear", "task": task.value, "seed": args.seed, "val_fraction": 0.15,
            "train_patients": sorted(tr_p), "val_patients": sorted(va_p),
            "scaler": {"mean": scaler.mean.tolist(), "std": scaler.std.tolist()}, "val_scores": val}


def _train_lstm(args, bench, specs, out: Path) -> dict:
    from .datasets import benchmark_task_data
    from .rnn import Arch, ModelSpec
    from .train import DivergenceError, LossSpec, TrainConfig, grid_search, grid_csv, save_result, train_model

    task = None if args.multitask else Task(args.task)
    ds = bool(args.deep_supervision)
    arch = Arch.CHANNELWISE if args.model == "channelwise" else Arch.STANDARD
    lambdas = tuple(float(v) for v in args.lambdas.split(",")) if args.lambdas else (1.0, 1.0, 1.0, 1.0)
    try:
        spec = ModelSpec(arch=arch, task=task, layers=args.layers, units=args.units, channel_units=args.channel_units,
                         dropout=args.dropout, deep_supervision=ds, bidirectional=args.bidirectional,
                         los_mode=args.los_mode, channel_widths=tuple(s.width for s in specs), seed=args.seed)
        loss_spec = LossSpec(task=task, deep_supervision=ds, alpha=args.target_replication_alpha, lambdas=lambdas,
                             los_mode=args.los_mode)
    except ValueError as e:
        raise CliError("invalid_config", str(e), EXIT_USAGE) from None
    data = benchmark_task_data(bench, specs, task, "train", grouped=spec.grouped, ccs=_ccs(args))
    tcfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr=args.lr, seed=args.seed,
                       patience=args.patience)
    try:
        if args.grid:
            grid = json.loads(_require(Path(args.grid), "grid file").read_text())
            ranking, result = grid_search(grid, spec, loss_spec, data, tcfg, specs, jobs=args.jobs)
            (out / "grid.csv").write_text(grid_csv(ranking))
        else:
            result = train_model(spec, data, loss_spec, tcfg, specs)
    except DivergenceError as e:
        raise CliError("diverged", str(e), EXIT_DIVERGED) from None
    save_result(result, out / "model.bin")
    (out / "history.csv").write_text(result.history_csv())
    st = result.standardizer
    return {"model": args.model, "task": "multitask" if task is None else task.value, "seed": args.seed,
            "val_fraction": 0.15, "spec": result.model.spec.to_dict(),
            "loss": {"deep_supervision": ds, "alpha": loss_spec.alpha, "lambdas": list(lambdas),
                     "los_mode": args.los_mode},
            "standardizer": {"columns": list(st.columns), "mean": list(st.mean), "std": list(st.std)},
            "best_epoch": result.best_epoch, "val_scores": result.val_scores,
            "train_patients": sorted(result.train_patients), "val_patients": sorted(result.val_patients)}


def cmd_train(args) -> None:
    root, bench = _load_bench(args)
    specs = _specs(args)
    if args.model != "linear" and not args.multitask and args.task is None:
        raise CliError("invalid_flags", "--task is required unless --multitask is given", EXIT_USAGE)
    if args.model == "linear" and (args.multitask or args.task is None):
        raise CliError("invalid_flags", "linear models need a single --task", EXIT_USAGE)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    run = _train_linear(args, bench, specs, out) if args.model == "linear" else _train_lstm(args, bench, specs, out)
    (out / "run.json").write_text(json.dumps(_jsonable(run), indent=2, sort_keys=True) + "\n")
    _write_manifest(out, args, {"data": root})


def _prediction_rows(task: str, p, los_mode: str):
    if task == "pheno":
        k = p.scores.shape[1]
        yield ["stay", "period_length"] + [f"y_{j}" for j in range(k)] + [f"p_{j}" for j in range(k)]
        for i in range(len(p.stays)):
            yield ([int(p.stays[i]), repr(float(p.periods[i]))] + [int(v) for v in p.labels[i]]
                   + [repr(float(v)) for v in p.scores[i]])
    elif task == "los" and los_mode == "buckets":
        k = p.scores.shape[1]
        yield ["stay", "period_length", "y_true", "bucket_true"] + [f"p_{j}" for j in range(k)]
        for i in range(len(p.stays)):
            yield ([int(p.stays[i]), repr(float(p.periods[i])), repr(float(p.hours[i])), int(p.labels[i])]
                   + [repr(float(v)) for v in p.scores[i]])
    else:
        yield ["stay", "period_length", "y_true", "prediction"]
        for i in range(len(p.stays)):
            label = repr(float(p.labels[i])) if task == "los" else int(p.labels[i])
            yield [int(p.stays[i]), repr(float(p.periods[i])), label, repr(float(p.scores[i]))]


def _linear_predictions(run, model_path, bench, specs, side_insts, keep):
    from .datasets import feature_matrix
    from .featlin import FeatureScaler, load_linear, predict_linear
    from .train import Predictions

    task = Task(run["task"])
    insts = [i for i in side_insts if keep(i.stay_id)]
    X, y, stays = feature_matrix(bench.episodes, insts, specs)
    scaler = FeatureScaler(np.asarray(run["scaler"]["mean"]), np.asarray(run["scaler"]["std"]))
    scores = predict_linear(load_linear(model_path), scaler.apply(X)) if len(insts) else np.zeros(0)
    periods = np.asarray([i.window_end_hours for i in insts])
    hours = np.asarray([float(i.target) for i in insts]) if task is Task.LOS else None
    return {task.value: Predictions(scores, y, stays, periods, hours)}, "buckets"


def _lstm_predictions(run, model_path, bench, specs, side, keep, ccs):
    from .datasets import benchmark_task_data
    from .discretizer import Standardizer
    from .rnn import LSTMModel
    from .train import LossSpec, predict

    model = LSTMModel.load(model_path)
    task = model.spec.task
    ls = LossSpec(task=task, deep_supervision=run["loss"]["deep_supervision"], alpha=run["loss"]["alpha"],
                  lambdas=tuple(run["loss"]["lambdas"]), los_mode=run["loss"]["los_mode"])
    data = benchmark_task_data(bench, specs, task, side, grouped=model.spec.grouped, ccs=ccs)
    data = data.subset({p for p in set(data.patients) if keep(p)})
    s = run["standardizer"]
    data = data.standardized(Standardizer(tuple(s["columns"]), tuple(s["mean"]), tuple(s["std"])))
    return predict(model, data, ls), ls.los_mode


def cmd_evaluate(args) -> None:
    from .train import task_score

    if args.split == "test" and not args.final:
        raise CliError("test_split_refused", "evaluation on the test split needs --final", EXIT_TEST_REFUSED)
    root, bench = _load_bench(args)
    specs = _specs(args)
    model_dir = _require(Path(args.model), "model directory")
    run = json.loads(_require(model_dir / "run.json", "run file").read_text())
    task = _task(run["task"])

    if args.split == "test":
        side = "test"
        keep_patient = lambda p: True  # noqa: E731
    else:
        side = "train"
        keep_patient = set(run["val_patients" if args.split == "val" else "train_patients"]).__contains__

    if run["model"] == "linear":
        patient = {e.stay_id: e.patient_id for e in bench.episodes}
        k = 0 if side == "train" else 1
        preds, los_mode = _linear_predictions(run, model_dir / "model.bin", bench, specs, bench.instances[task][k],
                                              lambda s: keep_patient(patient[s]))
    else:
        preds, los_mode = _lstm_predictions(run, model_dir / "model.bin", bench, specs, side, keep_patient, _ccs(args))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics = {}
    for name, p in sorted(preds.items()):
        with open(out / f"predictions_{name}.csv", "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(_prediction_rows(name, p, los_mode))
        metrics[name] = _point_metrics(name, p, los_mode)
        metrics[name]["main"] = task_score(name, p.scores, p.labels, los_mode)
    (out / "metrics.json").write_text(json.dumps(_jsonable({"split": args.split, "metrics": metrics}),
                                                 indent=2, sort_keys=True) + "\n")
    _write_manifest(out, args, {"data": root, "model": model_dir})
    for name, m in sorted(metrics.items()):
        print(name, " ".join(f"{k}={v:.4f}" for k, v in sorted(m.items()) if isinstance(v, float)))


def _safe(fn, *a) -> float:
    from .metrics import UndefinedMetricError

    try:
        return float(fn(*a))
    except UndefinedMetricError:
        return float("nan")


def _point_metrics(task: str, p, los_mode: str) -> dict:
    from .core import bucketize_hours
    from .metrics import auc_pr, auc_roc, linear_kappa, mad, multilabel_auc

    if task in ("ihm", "decomp"):
        return {"auc_roc": _safe(auc_roc, p.scores, p.labels), "auc_pr": _safe(auc_pr, p.scores, p.labels)}
    if task == "pheno":
        ml = multilabel_auc(p.scores, p.labels)
        return {"macro_auc_roc": float(ml.macro), "micro_auc_roc": float(ml.micro)}
    if los_mode == "raw":
        return {"mad": _safe(mad, p.scores, p.labels),
                "kappa": _safe(linear_kappa, bucketize_hours(np.maximum(p.scores, 0)), bucketize_hours(p.labels))}
    return {"kappa": _safe(linear_kappa, np.argmax(p.scores, axis=1), p.labels)}


def cmd_report(args) -> None:
    from .metrics import (
        ScoredSet,
        auc_pr,
        auc_roc,
        bootstrap_ci,
        calibration_curve,
        extended_los_score,
        linear_kappa,
        multilabel_auc,
        task_label_correlations,
    )

    src = _require(Path(args.predictions), "predictions directory")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    inputs = {"predictions": src}
    for path in sorted(src.glob("predictions_*.csv")):
        task = path.stem.split("_", 1)[1]
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        if not body:
            continue
        arr = {h: [r[i] for r in body] for i, h in enumerate(header)}
        stays = np.asarray(arr["stay"], dtype=int)
        entry = {}
        if task in ("ihm", "decomp"):
            s = np.asarray(arr["prediction"], dtype=float)
            y = np.asarray(arr["y_true"], dtype=float).astype(int)
            data = ScoredSet(s, y, "binary", stays)
            for name, fn in (("auc_roc", auc_roc), ("auc_pr", auc_pr)):
                ci = bootstrap_ci(fn, data, k=args.bootstrap, seed=args.seed)
                entry[name] = {"point": ci.point, "lower": ci.lower, "upper": ci.upper}
            curve = calibration_curve(s, y, bins=args.bins)
            (out / f"calibration_{task}.csv").write_text(curve.to_csv())
            entry["calibration_max_gap"] = curve.max_gap()
        elif task == "pheno":
            k = sum(1 for h in header if h.startswith("p_"))
            S = np.column_stack([np.asarray(arr[f"p_{j}"], dtype=float) for j in range(k)])
            Y = np.column_stack([np.asarray(arr[f"y_{j}"], dtype=int) for j in range(k)])
            ml = multilabel_auc(S, Y)
            entry = {"macro_auc_roc": ml.macro, "micro_auc_roc": ml.micro,
                     "per_label": ml.per_label, "excluded": ml.excluded}
        elif "bucket_true" in arr:
            k = sum(1 for h in header if h.startswith("p_"))
            P = np.column_stack([np.asarray(arr[f"p_{j}"], dtype=float) for j in range(k)])
            b = np.asarray(arr["bucket_true"], dtype=int)
            data = ScoredSet(P, b, "multiclass", stays)
            ci = bootstrap_ci(lambda p, t: linear_kappa(np.argmax(p, axis=1), t), data, k=args.bootstrap,
                              seed=args.seed)
            entry["kappa"] = {"point": ci.point, "lower": ci.lower, "upper": ci.upper}
            hours = np.asarray(arr["y_true"], dtype=float)
            periods = np.asarray(arr["period_length"], dtype=float)
            # extended LOS uses each stay's first prediction point, where total LOS = period + remaining
            first = {}
            for i, st in enumerate(stays):
                if st not in first or periods[i] < periods[first[st]]:
                    first[st] = i
            dists = {int(st): P[i] for st, i in first.items()}
            total = {int(st): periods[i] + hours[i] for st, i in first.items()}
            entry["extended_los_auc_roc"] = _safe(lambda: extended_los_score(dists, total).auc)
        else:
            s = np.asarray(arr["prediction"], dtype=float)
            y = np.asarray(arr["y_true"], dtype=float)
            entry["mad"] = float(np.mean(np.abs(s - y)))
        summary[task] = entry

    if args.data:
        root, bench = _load_bench(args)
        inputs["data"] = root
        cols = _label_columns(bench, _ccs(args))
        (out / "correlations.csv").write_text(task_label_correlations(cols).to_csv())
    (out / "report.json").write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    _write_manifest(out, args, inputs)


def _label_columns(bench, ccs) -> dict:
    from .pipeline import decomp_labels, pheno_labels

    eps = sorted(bench.episodes, key=lambda e: e.stay_id)
    cols = {
        "mortality": [float(e.mortality_inhospital) for e in eps],
        "decomp_any": [float(decomp_labels(e).any()) for e in eps],
        "los_over_7d": [float(e.los_hours is not None and e.los_hours >= 168.0) for e in eps],
    }
    labels = np.asarray([pheno_labels(e, ccs)[0] for e in eps])
    for k in range(labels.shape[1]):
        cols[f"pheno_{k}"] = labels[:, k].astype(float).tolist()
    return cols


# --- parser -----------------------------------------------------------------------
def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icubench", description="ICU benchmark construction, baselines and evaluation.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp):
        sp.add_argument("--variables", help="variable config file (default: packaged)")
        sp.add_argument("--phenotypes", help="phenotype config file (default: packaged)")
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (1 = serial, deterministic)")

    s = sub.add_parser("synth", help="generate a synthetic MIMIC-shaped cohort")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--patients", type=int, default=200)
    s.add_argument("--strength", type=float, default=1.0, help="planted signal strength in [0, 1]")
    s.add_argument("--signal", choices=("linear", "xor"), default="linear")
    s.add_argument("--config", help="JSON file of generator settings")
    common(s)
    s.set_defaults(func=cmd_synth)

    b = sub.add_parser("build", help="extract_subjects, validate_events, extract_episodes, split_train_and_test "
                                      "and the four task builders")
    b.add_argument("--tables", help=f"directory of source CSV tables (default ${DATA_ENV})")
    b.add_argument("--out", required=True)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--test-fraction", type=float, default=0.15)
    common(b)
    b.set_defaults(func=cmd_build)

    f = sub.add_parser("features", help="714 hand-engineered features per instance")
    f.add_argument("--data", help=f"built benchmark directory (default ${DATA_ENV})")
    f.add_argument("--task", required=True, choices=[t.value for t in Task])
    f.add_argument("--out", required=True)
    common(f)
    f.set_defaults(func=cmd_features)

    t = sub.add_parser("train", help="train a linear, LSTM or channel-wise LSTM model")
    t.add_argument("model", choices=("linear", "lstm", "channelwise"))
    t.add_argument("--data", help=f"built benchmark directory (default ${DATA_ENV})")
    t.add_argument("--task", choices=[t.value for t in Task])
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--multitask", action="store_true")
    t.add_argument("--deep-supervision", action="store_true")
    t.add_argument("--target-replication-alpha", type=float, default=0.5)
    t.add_argument("--lambdas", help="multitask weights decomp,ihm,los,pheno")
    t.add_argument("--units", type=int, default=16)
    t.add_argument("--channel-units", type=int, default=4)
    t.add_argument("--layers", type=int, default=1, choices=(1, 2))
    t.add_argument("--dropout", type=float, default=0.0)
    t.add_argument("--bidirectional", action="store_true")
    t.add_argument("--los-mode", choices=("buckets", "raw"), default="buckets")
    t.add_argument("--epochs", type=int, default=10)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--patience", type=int)
    t.add_argument("--grid", help="JSON list of configs to grid-search")
    t.add_argument("--reg", choices=("l1", "l2"), default="l2")
    t.add_argument("--C", type=float, default=1.0)
    common(t)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="score a trained model on the train, validation or test split")
    e.add_argument("--data", help=f"built benchmark directory (default ${DATA_ENV})")
    e.add_argument("--model", required=True, help="directory written by train")
    e.add_argument("--split", choices=("train", "val", "test"), default="val")
    e.add_argument("--final", action="store_true", help="required to touch the test split")
    e.add_argument("--out", required=True)
    common(e)
    e.set_defaults(func=cmd_evaluate)

    r = sub.add_parser("report", help="bootstrap CIs, calibration and label-correlation CSVs")
    r.add_argument("--predictions", required=True, help="directory written by evaluate")
    r.add_argument("--data", help="benchmark directory for task-label correlations")
    r.add_argument("--out", required=True)
    r.add_argument("--bootstrap", type=int, default=1000)
    r.add_argument("--bins", type=int, default=10)
    r.add_argument("--seed", type=int, default=0)
    common(r)
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        args.func(args)
        return EXIT_OK
    except CliError as e:
        err = e
    except ConfigError as e:
        err = CliError("invalid_config", str(e), EXIT_SCHEMA)
    except FileNotFoundError as e:
        err = CliError("missing_input", str(e), EXIT_MISSING_INPUT)
    print(json.dumps({"error": err.category, "message": str(err)}), file=sys.stderr)
    return err.code


if __name__ == "__main__":
    sys.exit(main())
