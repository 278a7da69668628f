"""Forecast error metrics and temporal/spatial aggregation."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .ingest import AlignedDataset, LoadMatrix, WeatherSeries

log = logging.getLogger(__name__)

MAPE_EPS = 1e-6
NRMSE_NORMALIZER = "range"
HOUR_WINDOWS = (1, 2, 4, 12, 24)


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Pooled metrics plus per-consumer arrays.

    ``mape`` is ``None`` when every actual is at or below ``MAPE_EPS``; it is
    in percent. ``nrmse`` divides RMSE by the range of the actuals.
    """

    mae: float
    rmse: float
    nrmse: float | None
    mape: float | None
    excluded_cells: int
    n_cells: int
    per_consumer_mae: np.ndarray
    per_consumer_rmse: np.ndarray
    per_consumer_mape: np.ndarray

    def row(self) -> dict:
        return {
            "mae": self.mae,
            "rmse": self.rmse,
            "nrmse": self.nrmse,
            "mape": self.mape,
            "excluded_cells": self.excluded_cells,
        }


def _mape(actual, forecast):
    keep = actual > MAPE_EPS
    if not keep.any():
        return None, int(actual.size)
    ape = 100.0 * np.abs(actual[keep] - forecast[keep]) / actual[keep]
    return float(np.mean(ape)), int(actual.size - keep.sum())


def compute_errors(actual, forecast) -> ErrorReport:
    a = np.asarray(actual, dtype=np.float64)
    f = np.asarray(forecast, dtype=np.float64)
    if a.shape != f.shape:
        raise InputError(f"shape mismatch: actual {a.shape} vs forecast {f.shape}")
    if a.size == 0:
        raise InputError("no cells to evaluate")
    if np.any(a < 0):
        raise InputError("actual loads must be non-negative")
    if a.ndim == 1:
        a, f = a[:, None], f[:, None]
    err = a - f
    mae = float(np.mean(np.abs(err)))
    rmse = float(np.sqrt(np.mean(err * err)))
    span = float(a.max() - a.min())
    nrmse = rmse / span if span > 0 else None
    mape, excluded = _mape(a, f)
    if mape is None:
        log.warning("MAPE undefined: all %d actual values are <= %g kWh", a.size, MAPE_EPS)

    per_mape = np.full(a.shape[1], np.nan)
    for j in range(a.shape[1]):
        value, _ = _mape(a[:, j], f[:, j])
        if value is not None:
            per_mape[j] = value
    return ErrorReport(
        mae,
        rmse,
        nrmse,
        mape,
        excluded,
        int(a.size),
        np.mean(np.abs(err), axis=0),
        np.sqrt(np.mean(err * err, axis=0)),
        per_mape,
    )


def aggregate_hours(load, window: int):
    """Sum ``window`` consecutive rows; a trailing partial window is dropped.

    Returns the aggregated matrix and the number of dropped rows.
    """
    X = np.asarray(load, dtype=np.float64)
    window = int(window)
    if window < 1:
        raise InputError(f"window must be >= 1, got {window}")
    rows = X.shape[0] // window
    dropped = X.shape[0] - rows * window
    if dropped:
        log.info("aggregate_hours: dropping %d trailing row(s) for window %d", dropped, window)
    out = X[: rows * window].reshape(rows, window, *X.shape[1:]).sum(axis=1)
    return out, dropped


def aggregate_households(load, assignments, k: int | None = None) -> np.ndarray:
    """Column ``c`` of the result is the sum of the member consumers' columns."""
    X = np.asarray(load, dtype=np.float64)
    labels = np.asarray(assignments, dtype=np.int64)
    if labels.shape != (X.shape[1],):
        raise InputError(f"{labels.size} assignments for {X.shape[1]} consumers")
    k = int(labels.max()) + 1 if k is None else int(k)
    if labels.min() < 0 or labels.max() >= k:
        raise InputError("assignment outside 0..k-1")
    onehot = np.zeros((X.shape[1], k))
    onehot[np.arange(X.shape[1]), labels] = 1.0
    return X @ onehot


def aggregate_dataset(dataset: AlignedDataset, window: int = 1, assignments=None, k=None) -> AlignedDataset:
    """Hour-window and/or household-cluster aggregate of a dataset.

    Loads are summed; weather is averaged over each window. Hours are
    aggregated first, then households.
    """
    load = dataset.load
    values, _ = aggregate_hours(load.values, window)
    weather = dataset.weather.values
    rows = values.shape[0]
    w = weather[: rows * window].reshape(rows, window, 3).mean(axis=1)
    ids = load.consumer_ids
    if assignments is not None:
        values = aggregate_households(values, assignments, k)
        ids = tuple(f"cluster{c}" for c in range(values.shape[1]))
    step = load.step_hours * int(window)
    return AlignedDataset(
        LoadMatrix(load.start, ids, values, step),
        WeatherSeries(load.start, w, step),
        dataset.calendar,
    )


def write_error_report(report: ErrorReport, consumer_ids, path) -> None:
    """Pooled row first (``consumer_id = ALL``), then one row per consumer."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["consumer_id", "mae", "rmse", "nrmse", "mape", "excluded_cells", "normalizer"])
        out.writerow(["ALL", report.mae, report.rmse, _blank(report.nrmse), _blank(report.mape), report.excluded_cells, NRMSE_NORMALIZER])
        for j, cid in enumerate(consumer_ids):
            mape = report.per_consumer_mape[j]
            out.writerow([cid, report.per_consumer_mae[j], report.per_consumer_rmse[j], "", "" if np.isnan(mape) else mape, "", ""])


def _blank(x):
    return "" if x is None else x


def aggregation_sweep(dataset, hour_windows=HOUR_WINDOWS, household_ks=None, config=None, **kwargs):
    """See :func:`fmf.pipeline.aggregation_sweep`."""
    from .pipeline import aggregation_sweep as _sweep

    return _sweep(dataset, hour_windows, household_ks, config, **kwargs)
