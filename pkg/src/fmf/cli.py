"""Command-line interface.

Commands: synth, train, forecast, evaluate, tune, sweep, inspect-clusters.
Log verbosity comes from ``FMF_LOG_LEVEL`` (default WARNING). Exit codes:
0 success, 1 input error, 2 internal invariant violation.
"""
from __future__ import annotations

import argparse
import contextlib
import csv
import json
import logging
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .clustering import write_cluster_report
from .config import RunConfig, parse_assignment
from .errors import FMFError, InputError, InvariantError
from .evaluation import compute_errors, write_error_report
from .factorization import energy_profile
from .forecaster import forecast_matrix
from .ingest import HOUR, AlignedDataset, align, load_ami_csv, load_holidays, load_weather_csv, to_hour, write_ami_csv, write_holidays, write_weather_csv, CalendarContext
from .pipeline import aggregation_sweep, train, write_sweep
from .preprocess import scale_weather
from .snapshot import load_model, save_model
from .synthetic import SyntheticSpec, generate_synthetic
from .tuning import TuningSpec, tune, tune_weights, validation_rows, _slice_dataset

log = logging.getLogger("fmf")


class OutputDir:
    """Exclusive use of an output directory; files written are removed on failure."""

    LOCK = ".fmf.lock"

    def __init__(self, path):
        self.path = Path(path)
        self.written: list[Path] = []

    def __enter__(self):
        self.path.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(self.path / self.LOCK, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise InputError(f"{self.path} is locked by another run (remove {self.LOCK} if stale)") from None
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        return self

    def file(self, name) -> Path:
        """Track an output; bare names land in the directory, ``Path`` objects are used as given."""
        p = Path(name) if isinstance(name, Path) else self.path / name
        self.written.append(p)
        return p

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            for p in self.written:
                with contextlib.suppress(FileNotFoundError):
                    p.unlink()
        with contextlib.suppress(FileNotFoundError):
            (self.path / self.LOCK).unlink()
        return False


# ---------------------------------------------------------------------------
# helpers


def _read_dataset(cfg: RunConfig) -> AlignedDataset:
    paths = cfg["paths"]
    if not paths["load_csv"] or not paths["weather_csv"]:
        raise InputError("paths.load_csv and paths.weather_csv are required (--load/--weather)")
    load = load_ami_csv(paths["load_csv"])
    weather = load_weather_csv(paths["weather_csv"], cfg["weather"]["interpolate"], cfg["weather"]["max_gap"])
    calendar = load_holidays(paths["holidays"]) if paths["holidays"] else CalendarContext()
    return align(load, weather, calendar)


def _m1(cfg: RunConfig, dataset: AlignedDataset) -> int:
    months = cfg["split"]["train_months"]
    if months is None:
        return int(cfg["split"]["m1"])
    start = pd.Timestamp(dataset.load.start)
    end = to_hour(start + pd.DateOffset(months=int(months)))
    return int((end - dataset.load.start) // HOUR)


def _snapshot_path(cfg: RunConfig, out: Path, given=None) -> Path:
    return Path(given or cfg["paths"]["snapshot"] or out / "model.fmf")


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _config_from_args(args) -> RunConfig:
    overrides = [parse_assignment(s) for s in (args.set or [])]
    mapping = {
        "load": "paths.load_csv",
        "weather": "paths.weather_csv",
        "holidays": "paths.holidays",
        "out": "paths.output_dir",
        "seed": "seed",
        "m1": "split.m1",
        "q": "model.q",
        "d": "model.d",
        "energy": "model.energy",
        "r": "model.r",
        "t": "model.t",
        "p": "model.p",
        "replicates": "model.replicates",
    }
    for attr, key in mapping.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides.append((key, value))
    return RunConfig.load(args.config, overrides)


# ---------------------------------------------------------------------------
# commands


def cmd_synth(args, cfg: RunConfig) -> int:
    syn = dict(cfg["synth"])
    for key in ("n_consumers", "n_hours", "noise", "start"):
        value = getattr(args, key, None)
        if value is not None:
            syn[key] = value
    spec = SyntheticSpec(
        n_consumers=int(syn["n_consumers"]),
        n_hours=int(syn["n_hours"]),
        seed=int(cfg["seed"]),
        noise=float(syn["noise"]),
        start=str(syn["start"]),
    )
    data = generate_synthetic(spec)
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        write_ami_csv(data.load, out.file("load.csv"))
        write_weather_csv(data.weather, out.file("weather.csv"))
        write_holidays(data.calendar, out.file("holidays.txt"))
        cfg.dump(out.file("effective_config.yaml"))
    print(f"wrote {data.load.m} hours x {data.load.n} consumers to {cfg['paths']['output_dir']}")
    return 0


def _train_weights(cfg: RunConfig, dataset, fmf):
    """Weights from the config, or tuned on the validation split when ``model.weights: tune``."""
    if cfg["model"]["weights"] != "tune":
        return fmf.weights, None
    spec = cfg.tuning_spec()
    fit_rows, val_rows = validation_rows(dataset, fmf.m1, spec)
    sub = _slice_dataset(dataset, fit_rows + val_rows)
    trained = train(sub, replace(fmf, m1=fit_rows))
    n = trained.model.n
    weights, value, trace = tune_weights(
        trained.model, trained.split.test_hours, trained.split.B[:, n : n + 3], sub.load.values[fit_rows:], spec
    )
    return weights, trace


def cmd_train(args, cfg: RunConfig) -> int:
    dataset = _read_dataset(cfg)
    fmf = cfg.fmf(m1=_m1(cfg, dataset))
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        tic = time.perf_counter()
        weights, wtrace = _train_weights(cfg, dataset, fmf)
        fmf = replace(fmf, weights=weights)
        trained = train(dataset, fmf)
        snap = _snapshot_path(cfg, out.path, getattr(args, "snapshot", None))
        save_model(trained.model, out.file(snap))
        profile = energy_profile(trained.split.A)
        _write_csv(out.file("energy_profile.csv"), ["d", "cumulative_energy"], profile)
        write_cluster_report(trained.model.cluster_vectors, out.file("cluster_report.csv"))
        if wtrace is not None:
            _write_csv(out.file("weight_trace.csv"), ["w%d" % (i + 1) for i in range(8)] + ["objective"],
                       [list(w) + [v] for w, v in wtrace])
        report = {
            "version": __version__,
            "m1": trained.split.m1,
            "n_consumers": trained.model.n,
            "d": trained.svd.d,
            "energy_fraction": trained.svd.energy_fraction,
            "r": trained.model.r,
            "wcss": trained.model.clustering.wcss,
            "replicates": int(fmf.replicates),
            "replicate_wcss_min": float(np.min(trained.model.clustering.replicate_wcss)),
            "replicate_wcss_max": float(np.max(trained.model.clustering.replicate_wcss)),
            "cluster_sizes": trained.model.clustering.sizes.tolist(),
            "weights": list(fmf.weights.w),
            "p": fmf.weights.p,
            "t": fmf.t,
            "seconds": {k: round(v, 3) for k, v in trained.seconds.items()},
        }
        with open(out.file("train_report.json"), "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
        cfg.data["model"]["weights"] = list(fmf.weights.w)
        cfg.dump(out.file("effective_config.yaml"))
    log.info("train finished in %.2fs", time.perf_counter() - tic)
    print(f"model: d={trained.svd.d} r={trained.model.r} wcss={trained.model.clustering.wcss:.6g} -> {snap}")
    return 0


def _forecast_frame(model, weather_series, start, horizon, actual=None):
    step = model.step_hours
    hourly = weather_series
    first = int((start - hourly.start) // HOUR)
    need = first + horizon * step
    if first < 0 or need > hourly.m:
        have_end = hourly.start + (hourly.m - 1) * HOUR
        raise InputError(
            f"weather covers {hourly.start}..{have_end} but the forecast needs {start}..{start + (horizon * step - 1) * HOUR}"
        )
    raw = hourly.values[first:need].reshape(horizon, step, 3).mean(axis=1)
    stamps = start + np.arange(horizon) * step * HOUR
    result = forecast_matrix(stamps, scale_weather(raw, model.params), model)
    n = model.n
    frame = pd.DataFrame(
        {
            "timestamp": np.repeat(np.char.add(np.datetime_as_string(stamps, unit="h").astype(str), ":00"), n),
            "consumer_id": np.tile(np.asarray(model.consumer_ids, dtype=object), horizon),
            "forecast_kwh": result.kwh.ravel(),
            "actual_kwh": np.nan if actual is None else actual.ravel(),
            "fallback_flag": np.repeat(result.fallback.astype(int), n),
        }
    )
    return frame, result


def _actual_block(load_path, model, start, horizon):
    load = load_ami_csv(load_path)
    if tuple(load.consumer_ids) != tuple(model.consumer_ids):
        idx = {c: j for j, c in enumerate(load.consumer_ids)}
        missing = [c for c in model.consumer_ids if c not in idx]
        if missing:
            raise InputError(f"actuals lack consumer(s) {missing[:5]}")
        cols = [idx[c] for c in model.consumer_ids]
    else:
        cols = list(range(load.n))
    first = int((start - load.start) // HOUR)
    step = model.step_hours
    if first < 0 or first + horizon * step > load.m:
        return None
    block = load.values[first : first + horizon * step][:, cols]
    return block.reshape(horizon, step, len(cols)).sum(axis=1)


def cmd_forecast(args, cfg: RunConfig) -> int:
    model = load_model(_snapshot_path(cfg, Path(cfg["paths"]["output_dir"]), args.snapshot))
    if not cfg["paths"]["weather_csv"]:
        raise InputError("--weather is required")
    weather = load_weather_csv(cfg["paths"]["weather_csv"], cfg["weather"]["interpolate"], cfg["weather"]["max_gap"])
    if args.start:
        start = to_hour(args.start)
    else:
        if model.train_start is None:
            raise InputError("snapshot has no training span; pass --start")
        start = model.train_start + model.m1 * model.step_hours * HOUR
    horizon = int(args.horizon)
    if horizon < 1:
        raise InputError("--horizon must be >= 1")
    actual = _actual_block(cfg["paths"]["load_csv"], model, start, horizon) if cfg["paths"]["load_csv"] else None
    frame, result = _forecast_frame(model, weather, start, horizon, actual)
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        frame.to_csv(out.file(args.output or "forecast.csv"), index=False, float_format="%.17g")
    print(f"forecast {horizon} period(s) x {model.n} consumer(s); {int(result.fallback.sum())} fallback hour(s)")
    return 0


def _evaluate_frames(forecast: pd.DataFrame, actual_path=None):
    need = {"timestamp", "consumer_id", "forecast_kwh"}
    if not need <= set(forecast.columns):
        raise InputError(f"forecast CSV needs columns {sorted(need)}")
    forecast = forecast.copy()
    forecast["consumer_id"] = forecast["consumer_id"].astype(str)
    forecast["timestamp"] = pd.to_datetime(forecast["timestamp"]).to_numpy(dtype="datetime64[h]")
    if actual_path:
        load = load_ami_csv(actual_path)
        long = pd.DataFrame(
            {
                "timestamp": np.repeat(load.timestamps, load.n),
                "consumer_id": np.tile(np.asarray(load.consumer_ids, dtype=object), load.m),
                "actual": load.values.ravel(),
            }
        )
        merged = forecast.merge(long, on=["timestamp", "consumer_id"], how="left")
        if merged["actual"].isna().any():
            bad = merged.loc[merged["actual"].isna(), ["timestamp", "consumer_id"]].head(5).values.tolist()
            raise InputError(f"no actual reading for {bad}")
        merged["actual_kwh"] = merged["actual"]
    else:
        if "actual_kwh" not in forecast.columns or forecast["actual_kwh"].isna().any():
            raise InputError("forecast CSV lacks actual_kwh values; pass --actual")
        merged = forecast
    ids = list(dict.fromkeys(merged["consumer_id"]))
    table_a = merged.pivot(index="timestamp", columns="consumer_id", values="actual_kwh")[ids]
    table_f = merged.pivot(index="timestamp", columns="consumer_id", values="forecast_kwh")[ids]
    return ids, table_a.to_numpy(dtype=float), table_f.to_numpy(dtype=float)


def cmd_evaluate(args, cfg: RunConfig) -> int:
    try:
        forecast = pd.read_csv(args.forecast, float_precision="round_trip")
    except FileNotFoundError:
        raise InputError(f"{args.forecast}: no such file") from None
    ids, actual, predicted = _evaluate_frames(forecast, args.actual)
    report = compute_errors(actual, predicted)
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        write_error_report(report, ids, out.file(args.output or "error_report.csv"))
    fmt = lambda x: "n/a" if x is None else f"{x:.4f}"  # noqa: E731
    print("MAE (kWh)  RMSE (kWh)  NRMSE  MAPE (%)")
    print(f"{fmt(report.mae)}  {fmt(report.rmse)}  {fmt(report.nrmse)}  {fmt(report.mape)}  (excluded {report.excluded_cells})")
    return 0


def cmd_tune(args, cfg: RunConfig) -> int:
    dataset = _read_dataset(cfg)
    fmf = cfg.fmf(m1=_m1(cfg, dataset))
    spec = cfg.tuning_spec()
    best, trace, wtrace, value = tune(dataset, spec, fmf)
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        rows = [
            [json.dumps(row.params, sort_keys=True), "" if row.objective is None else row.objective, round(row.seconds, 4), row.error]
            for row in trace
        ]
        _write_csv(out.file("tuning_trace.csv"), ["candidate", "objective", "wall_seconds", "error"], rows)
        _write_csv(out.file("weight_trace.csv"), ["w%d" % (i + 1) for i in range(8)] + ["objective"],
                   [list(w) + [v] for w, v in wtrace])
        tuned = RunConfig(json.loads(json.dumps(cfg.data)))
        model = tuned.data["model"]
        model.update(q=best.q, d=best.d, energy=best.energy, r=best.r, t=best.t, p=best.weights.p, weights=list(best.weights.w))
        tuned.dump(out.file(args.output or "tuned_config.yaml"))
    print(f"selected q={best.q} d={best.d} energy={best.energy} r={best.r} t={best.t} p={best.weights.p}; "
          f"weights={list(best.weights.w)}; validation {spec.objective}={value:.4f}")
    return 0


def cmd_sweep(args, cfg: RunConfig) -> int:
    dataset = _read_dataset(cfg)
    fmf = cfg.fmf(m1=_m1(cfg, dataset))
    sw = cfg["sweep"]
    n = dataset.load.n
    ks = sw["household_ks"]
    if ks is None:
        ks = sorted({k for k in (1, 2, 4, 8, 16) if k <= n} | {n})
    ks = [n if k == "n" else int(k) for k in ks]
    rows = aggregation_sweep(
        dataset,
        [int(w) for w in sw["windows"]],
        ks,
        fmf,
        household_d=sw["household_d"],
        household_replicates=int(sw["household_replicates"]),
    )
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        write_sweep(rows, out.file(args.output or "sweep_results.csv"))
        cfg.dump(out.file("effective_config.yaml"))
    for row in rows:
        print(f"window={row.window:>3} k={row.k:>4} MAPE={row.report.mape}")
    return 0


def cmd_inspect(args, cfg: RunConfig) -> int:
    model = load_model(_snapshot_path(cfg, Path(cfg["paths"]["output_dir"]), args.snapshot))
    with OutputDir(cfg["paths"]["output_dir"]) as out:
        write_cluster_report(model.cluster_vectors, out.file(args.output or "cluster_report.csv"))
    sizes = model.clustering.sizes
    print(f"{model.r} clusters; sizes min {sizes.min()} median {int(np.median(sizes))} max {sizes.max()}")
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fmf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key (repeatable)")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        return p

    def data(p):
        p.add_argument("--load", help="long-format load CSV")
        p.add_argument("--weather", help="hourly weather CSV")
        p.add_argument("--holidays", help="file with one ISO date per line")
        return p

    def hyper(p):
        p.add_argument("--m1", type=int, help="training hours")
        p.add_argument("--q", type=int)
        p.add_argument("--d", type=int)
        p.add_argument("--energy", type=float)
        p.add_argument("--r", type=int)
        p.add_argument("--t", type=int)
        p.add_argument("--p", type=float)
        p.add_argument("--replicates", type=int)
        return p

    p = common(sub.add_parser("synth", help="write a synthetic dataset"))
    p.add_argument("--n-consumers", dest="n_consumers", type=int)
    p.add_argument("--n-hours", dest="n_hours", type=int)
    p.add_argument("--noise", type=float)
    p.add_argument("--start")
    p.set_defaults(func=cmd_synth)

    p = hyper(data(common(sub.add_parser("train", help="fit a model and write a snapshot"))))
    p.add_argument("--snapshot", help="snapshot path (default <out>/model.fmf)")
    p.set_defaults(func=cmd_train)

    p = data(common(sub.add_parser("forecast", help="forecast from a snapshot")))
    p.add_argument("--snapshot")
    p.add_argument("--horizon", type=int, required=True, help="number of periods to forecast")
    p.add_argument("--start", help="first forecast hour (default: right after training)")
    p.add_argument("--output")
    p.set_defaults(func=cmd_forecast)

    p = common(sub.add_parser("evaluate", help="error metrics for a forecast CSV"))
    p.add_argument("--forecast", required=True)
    p.add_argument("--actual", help="load CSV with actual readings")
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)

    p = hyper(data(common(sub.add_parser("tune", help="select hyperparameters and weights on a validation split"))))
    p.add_argument("--output")
    p.set_defaults(func=cmd_tune)

    p = hyper(data(common(sub.add_parser("sweep", help="hour/household aggregation experiment"))))
    p.add_argument("--output")
    p.set_defaults(func=cmd_sweep)

    p = common(sub.add_parser("inspect-clusters", help="dump cluster feature distributions"))
    p.add_argument("--snapshot")
    p.add_argument("--output")
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("FMF_LOG_LEVEL", "WARNING").upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        return args.func(args, cfg)
    except InvariantError as exc:
        log.error("internal invariant violated: %s", exc)
        return 2
    except FMFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:  # noqa: BLE001
        log.exception("unexpected failure")
        return 2


if __name__ == "__main__":
    sys.exit(main())
