"""End-to-end training and evaluation of the forecaster on an aligned dataset."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .clustering import HouseholdClustering, cluster_households, kmeans_pp
from .errors import InputError
from .evaluation import ErrorReport, aggregate_dataset, compute_errors
from .factorization import TruncatedSVD, hour_embedding, truncated_svd
from .forecaster import DistanceWeights, ForecastModel, ForecastResult, fit_model, forecast_matrix
from .ingest import AlignedDataset
from .preprocess import DesignMatrix, TrainTestSplit, fit_transform

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FMFConfig:
    q: int = 4
    m1: int = 8760
    d: int | None = None
    energy: float | None = 0.99
    r: int = 70
    replicates: int = 1000
    t: int = 2
    weights: DistanceWeights = field(default_factory=DistanceWeights)
    seed: int = 0
    svd_method: str = "exact"

    def to_dict(self) -> dict:
        out = asdict(self)
        out["weights"] = list(self.weights.w)
        out["p"] = self.weights.p
        return out


# Reference configurations keyed by dataset name.
DATASET_PRESETS = {
    "sweden": dict(q=4, d=300, energy=None, r=80, t=2, m1=8760),
    "ireland": dict(q=5, d=300, energy=None, r=70, t=2, m1=8760),
    "australia": dict(q=3, d=34, energy=None, r=70, t=2, m1=8760),
}


@dataclass(frozen=True, eq=False)
class TrainedFMF:
    model: ForecastModel
    design: DesignMatrix
    split: TrainTestSplit
    svd: TruncatedSVD
    seconds: dict


def train(dataset: AlignedDataset, config: FMFConfig) -> TrainedFMF:
    """Preprocess, factorize, cluster and assemble a model from the first ``m1`` rows."""
    clock = {}
    tic = time.perf_counter()
    design, params, split = fit_transform(dataset, config.q, config.m1)
    clock["preprocess"] = time.perf_counter() - tic

    tic = time.perf_counter()
    d = config.d
    if d is not None:
        limit = min(split.A.shape)
        if d > limit:
            log.info("requested d=%d exceeds min(m1, n+3)=%d; using %d", d, limit, limit)
            d = limit
    svd = truncated_svd(split.A, d=d, energy=None if d is not None else config.energy, method=config.svd_method, seed=config.seed)
    H = hour_embedding(svd)
    clock["svd"] = time.perf_counter() - tic

    tic = time.perf_counter()
    clustering = kmeans_pp(H.H, config.r, replicates=config.replicates, seed=config.seed)
    clock["clustering"] = time.perf_counter() - tic

    tic = time.perf_counter()
    model = fit_model(
        split.A,
        split.train_hours,
        params,
        clustering,
        config.weights,
        config.t,
        dataset.calendar,
        consumer_ids=dataset.load.consumer_ids,
        svd=svd,
        train_start=dataset.load.start,
        m1=split.m1,
        step_hours=dataset.load.step_hours,
    )
    clock["assemble"] = time.perf_counter() - tic
    log.info("trained: d=%d (energy %.4f), r=%d, WCSS %.6g", svd.d, svd.energy_fraction, clustering.r, clustering.wcss)
    return TrainedFMF(model, design, split, svd, clock)


def forecast_test(trained: TrainedFMF) -> ForecastResult:
    """Forecast the held-out rows ``B`` (their calendar and scaled weather only)."""
    n = trained.model.n
    return forecast_matrix(trained.split.test_hours, trained.split.B[:, n : n + 3], trained.model)


@dataclass(frozen=True, eq=False)
class RunResult:
    trained: TrainedFMF
    forecast: ForecastResult
    report: ErrorReport
    actual: np.ndarray


def run(dataset: AlignedDataset, config: FMFConfig) -> RunResult:
    """Train on the first ``m1`` rows and evaluate on the rest, in kWh."""
    trained = train(dataset, config)
    result = forecast_test(trained)
    actual = dataset.load.values[trained.split.m1 :]
    return RunResult(trained, result, compute_errors(actual, result.kwh), actual)


# ---------------------------------------------------------------------------
# Aggregation experiments


@dataclass(frozen=True, eq=False)
class SweepRow:
    window: int
    k: int
    report: ErrorReport


def household_partition(dataset: AlignedDataset, k: int, config: FMFConfig, d=None, replicates=100) -> HouseholdClustering | None:
    """Cluster households on their transformed training profiles; ``None`` when ``k == n``."""
    n = dataset.load.n
    if k == n:
        return None
    _, _, split = fit_transform(dataset, config.q, config.m1)
    energy = None if d is not None else config.energy
    return cluster_households(split.A[:, :n], k, d=d, energy=energy, seed=config.seed, replicates=replicates)


def aggregation_sweep(
    dataset: AlignedDataset,
    hour_windows=(1, 2, 4, 12, 24),
    household_ks=None,
    config: FMFConfig | None = None,
    household_d: int | None = None,
    household_replicates: int = 100,
) -> list[SweepRow]:
    """Retrain and evaluate on every (hour window, household cluster count) aggregate.

    Hours are summed first, then households. ``household_ks`` defaults to
    ``(1, 2, 4, 8, 16, n)`` restricted to values ``<= n``. The training span is
    ``config.m1 // window`` aggregated rows.
    """
    config = config or FMFConfig()
    n = dataset.load.n
    if household_ks is None:
        household_ks = sorted({k for k in (1, 2, 4, 8, 16) if k <= n} | {n})
    partitions = {}
    for k in household_ks:
        if not 1 <= int(k) <= n:
            raise InputError(f"household cluster count {k} outside 1..{n}")
        partitions[int(k)] = household_partition(dataset, int(k), config, household_d, household_replicates)

    rows = []
    for window in hour_windows:
        window = int(window)
        if window < 1:
            raise InputError(f"window must be >= 1, got {window}")
        for k in household_ks:
            part = partitions[int(k)]
            agg = aggregate_dataset(
                dataset, window, None if part is None else part.assignments, None if part is None else part.k
            )
            m1 = config.m1 // window
            cfg = replace(config, m1=m1)
            result = run(agg, cfg)
            log.info("sweep window=%d k=%d: MAPE %s", window, k, result.report.mape)
            rows.append(SweepRow(window, int(k), result.report))
    return rows


def write_sweep(rows, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["window", "k", "mae", "rmse", "nrmse", "mape", "excluded_cells"])
        for row in rows:
            rep = row.report
            out.writerow(
                [row.window, row.k, rep.mae, rep.rmse, "" if rep.nrmse is None else rep.nrmse,
                 "" if rep.mape is None else rep.mape, rep.excluded_cells]
            )
