"""Validation-set selection of distance weights and pipeline hyperparameters.

Only the training rows (the first ``m1``) are ever read. They are split by
calendar months into a fitting part and a validation part; candidates are
scored by the validation error of the full pipeline, in kWh.
"""
from __future__ import annotations

import itertools
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from . import kernels
from .encoding import encode_hours
from .errors import FMFError, InputError, InvariantError
from .evaluation import compute_errors
from .forecaster import DistanceWeights, ForecastModel, combine_groups, rank_clusters, weighted_medians
from .ingest import HOUR, AlignedDataset, LoadMatrix, WeatherSeries, to_hour
from .pipeline import FMFConfig, train
from .preprocess import inverse_load

log = logging.getLogger(__name__)

WEIGHT_GRID = tuple(i / 8 for i in range(9))
OBJECTIVES = ("mape", "rmse", "mae")


@dataclass(frozen=True)
class TuningSpec:
    """What to search and how to score it.

    ``val_hours`` overrides the month-based validation split when given.
    Hyperparameter grids default to the single value already in the base
    config; ``energies`` is consulted only when ``d_values`` is empty.
    """

    train_months: int = 9
    val_months: int = 3
    val_hours: int | None = None
    weight_grid: tuple = WEIGHT_GRID
    initial_weights: tuple = (0.125,) * 8
    free_weights: tuple = tuple(range(8))
    strategy: str = "coordinate"
    max_passes: int = 5
    q_values: tuple = ()
    d_values: tuple = ()
    energies: tuple = ()
    r_values: tuple = ()
    t_values: tuple = ()
    p_values: tuple = ()
    objective: str = "mape"

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise InputError(f"objective must be one of {OBJECTIVES}")
        if not self.weight_grid:
            raise InputError("weight grid is empty")
        if any(g < 0 for g in self.weight_grid):
            raise InputError("weight grid values must be non-negative")
        if self.strategy not in ("coordinate", "grid"):
            raise InputError("strategy must be 'coordinate' or 'grid'")
        if self.strategy == "grid" and len(self.free_weights) > 4:
            raise InputError("exhaustive grid search supports at most 4 free weights")
        if len(self.initial_weights) != 8:
            raise InputError("initial_weights needs 8 values")


# Candidate sets covering the three reference configurations.
DATASET_TUNING_PRESET = dict(q_values=(3, 4, 5), energies=(0.99,), r_values=(70, 80), t_values=(2,))


def _add_months(hour: np.datetime64, months: int) -> np.datetime64:
    return to_hour(pd.Timestamp(hour) + pd.DateOffset(months=int(months)))


def validation_rows(dataset: AlignedDataset, m1: int, spec: TuningSpec) -> tuple[int, int]:
    """``(fit_rows, val_rows)``: both counted from the start, inside the first ``m1`` rows."""
    step = dataset.load.step_hours
    if spec.val_hours is not None:
        val = int(spec.val_hours) // step
        fit = m1 - val
    else:
        start = dataset.load.start
        cut = _add_months(start, spec.train_months)
        end = _add_months(start, spec.train_months + spec.val_months)
        fit = int((cut - start) // (step * HOUR))
        fit = min(fit, m1 - 1)
        val = min(int((end - start) // (step * HOUR)), m1) - fit
    if fit < 24 or val < 1:
        raise InputError(f"validation split leaves {fit} fitting and {val} validation rows")
    return fit, val


def _slice_dataset(dataset: AlignedDataset, rows: int) -> AlignedDataset:
    load = dataset.load
    return AlignedDataset(
        LoadMatrix(load.start, load.consumer_ids, load.values[:rows], load.step_hours),
        WeatherSeries(load.start, dataset.weather.values[:rows], load.step_hours),
        dataset.calendar,
    )


def _objective(actual, forecast, name):
    report = compute_errors(actual, forecast)
    value = getattr(report, name)
    if value is None:
        raise InputError(f"validation objective {name} is undefined (all validation actuals are zero)")
    return float(value)


@dataclass
class WeightSearch:
    """Pre-computed pieces for scoring many weight vectors on one validation set."""

    model: ForecastModel
    norms: np.ndarray
    actual: np.ndarray
    objective: str
    cache: dict = field(default_factory=dict)
    evaluations: int = 0

    @classmethod
    def build(cls, model: ForecastModel, val_hours, val_weather_scaled, val_actual, objective="mape", p=None):
        VH = encode_hours(val_hours, val_weather_scaled, model.calendar)
        p = model.weights.p if p is None else p
        norms = kernels.group_norms(VH, model.cluster_vectors, p)
        return cls(model, norms, np.asarray(val_actual, dtype=np.float64), objective)

    def score(self, w) -> float:
        w = tuple(float(x) for x in w)
        if w in self.cache:
            return self.cache[w]
        if not any(x > 0 for x in w):
            self.cache[w] = np.inf
            return np.inf
        sims = 1.0 - combine_groups(self.norms, w)
        order = rank_clusters(sims)[:, : self.model.t]
        sel = np.take_along_axis(sims, order, axis=1)
        transformed, _ = weighted_medians(sel, order, self.model.medians)
        value = _objective(self.actual, inverse_load(transformed, self.model.params), self.objective)
        self.cache[w] = value
        self.evaluations += 1
        return value


def _coordinate_descent(search: WeightSearch, spec: TuningSpec):
    grid = sorted(float(g) for g in spec.weight_grid)
    current = [float(x) for x in spec.initial_weights]
    best = search.score(current)
    trace = [(tuple(current), best)]
    for _ in range(spec.max_passes):
        moved = False
        for i in sorted(spec.free_weights):
            for g in grid:
                if g == current[i]:
                    continue
                cand = list(current)
                cand[i] = g
                value = search.score(cand)
                trace.append((tuple(cand), value))
                if value < best or (value == best and g < current[i]):
                    best, current, moved = value, cand, True
        if not moved:
            break
    return tuple(current), best, trace


def _exhaustive(search: WeightSearch, spec: TuningSpec):
    grid = sorted(float(g) for g in spec.weight_grid)
    free = sorted(spec.free_weights)
    best_w, best = None, np.inf
    trace = []
    # Lexicographic product order makes ties resolve to smaller values at lower indices.
    for combo in itertools.product(grid, repeat=len(free)):
        cand = [float(x) for x in spec.initial_weights]
        for i, g in zip(free, combo):
            cand[i] = g
        value = search.score(cand)
        trace.append((tuple(cand), value))
        if value < best:
            best, best_w = value, tuple(cand)
    if best_w is None:
        raise InputError("no admissible weight vector in the grid")
    return best_w, best, trace


def tune_weights(model: ForecastModel, val_hours, val_weather_scaled, val_actual, spec: TuningSpec):
    """Search the weight grid for the lowest validation objective.

    Returns the chosen :class:`DistanceWeights`, its objective value, and the
    trace of ``(weights, objective)`` pairs evaluated.
    """
    search = WeightSearch.build(model, val_hours, val_weather_scaled, val_actual, spec.objective)
    if len(spec.weight_grid) == 1:
        only = float(spec.weight_grid[0])
        w = tuple(only if i in spec.free_weights else float(x) for i, x in enumerate(spec.initial_weights))
        return DistanceWeights(w, model.weights.p), search.score(w), [(w, search.score(w))]
    if spec.strategy == "grid":
        w, best, trace = _exhaustive(search, spec)
    else:
        w, best, trace = _coordinate_descent(search, spec)
    if not np.isfinite(best):
        raise InputError("no admissible weight vector found")
    log.info("tuned weights %s (validation %s %.4f, %d evaluations)", w, spec.objective, best, search.evaluations)
    return DistanceWeights(w, model.weights.p), best, trace


@dataclass(frozen=True)
class TraceRow:
    params: dict
    objective: float | None
    seconds: float
    error: str = ""


def _fit_and_score(sub: AlignedDataset, cfg: FMFConfig, fit_rows: int, objective: str):
    trained = train(sub, cfg)
    n = trained.model.n
    from .forecaster import forecast_matrix

    res = forecast_matrix(trained.split.test_hours, trained.split.B[:, n : n + 3], trained.model)
    actual = sub.load.values[fit_rows:]
    return trained, _objective(actual, res.kwh, objective)


def tune_hyperparams(dataset: AlignedDataset, spec: TuningSpec, base: FMFConfig | None = None):
    """Grid search over (q, d or energy, r, t, p) by validation error.

    Ties go to smaller d, then smaller r, t, q and p. Returns the best
    :class:`FMFConfig` and a list of :class:`TraceRow`.
    """
    base = base or FMFConfig()
    fit_rows, val_rows = validation_rows(dataset, base.m1, spec)
    if fit_rows + val_rows > base.m1:
        raise InvariantError("validation rows overlap the test period")
    sub = _slice_dataset(dataset, fit_rows + val_rows)

    qs = spec.q_values or (base.q,)
    if spec.d_values:
        ranks = [("d", int(d)) for d in spec.d_values]
    elif spec.energies:
        ranks = [("energy", float(e)) for e in spec.energies]
    else:
        ranks = [("d", base.d)] if base.d is not None else [("energy", base.energy)]
    rs = spec.r_values or (base.r,)
    ts = spec.t_values or (base.t,)
    ps = spec.p_values or (base.weights.p,)

    trace = []
    scored = []
    for q, (kind, rank), r, t, p in itertools.product(qs, ranks, rs, ts, ps):
        params = {"q": int(q), kind: rank, "r": int(r), "t": int(t), "p": float(p)}
        cfg = replace(
            base,
            q=int(q),
            m1=fit_rows,
            d=rank if kind == "d" else None,
            energy=rank if kind == "energy" else None,
            r=int(r),
            t=int(t),
            weights=DistanceWeights(base.weights.w, p),
        )
        tic = time.perf_counter()
        try:
            trained, value = _fit_and_score(sub, cfg, fit_rows, spec.objective)
        except FMFError as exc:
            log.warning("candidate %s skipped: %s", params, exc)
            trace.append(TraceRow(params, None, time.perf_counter() - tic, str(exc)))
            continue
        seconds = time.perf_counter() - tic
        trace.append(TraceRow(params, value, seconds))
        scored.append(((value, trained.svd.d, int(r), int(t), int(q), float(p)), cfg))
    if not scored:
        raise InputError("every hyperparameter candidate failed")
    scored.sort(key=lambda item: item[0])
    best = replace(scored[0][1], m1=base.m1)
    return best, trace


def tune(dataset: AlignedDataset, spec: TuningSpec, base: FMFConfig | None = None):
    """Hyperparameters first, then weights with those hyperparameters fixed."""
    base = base or FMFConfig()
    best, trace = tune_hyperparams(dataset, spec, base)
    fit_rows, val_rows = validation_rows(dataset, base.m1, spec)
    sub = _slice_dataset(dataset, fit_rows + val_rows)
    trained = train(sub, replace(best, m1=fit_rows))
    n = trained.model.n
    weights, value, wtrace = tune_weights(
        trained.model,
        trained.split.test_hours,
        trained.split.B[:, n : n + 3],
        sub.load.values[fit_rows:],
        spec,
    )
    return replace(best, weights=weights), trace, wtrace, value
