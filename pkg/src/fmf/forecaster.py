"""Forecasting a test hour from the most similar clusters of training hours.

The distance between an hour vector ``vh`` and a cluster vector ``vC`` is a
weighted sum of eight per-group lp norms of ``|vh - vC|`` (hour of day, day of
week, day of month, month, holiday pair, temperature, wind, humidity).
Similarity is ``1 - distance``. A consumer's forecast is the similarity
weighted mean of that consumer's median transformed load in each of the ``t``
most similar clusters, mapped back to kWh.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .clustering import HourClustering
from .encoding import DIM, cluster_vectors, encode_hour, encode_hours
from .errors import InputError
from .ingest import CalendarContext
from .preprocess import TransformParams, inverse_load, inverse_transform

log = logging.getLogger(__name__)

N_WEIGHTS = kernels.N_GROUPS
WEIGHT_NAMES = ("hour", "weekday", "day_of_month", "month", "holiday", "temperature", "wind", "humidity")


@dataclass(frozen=True)
class DistanceWeights:
    w: tuple = (0.125,) * 8
    p: float = 2.0

    def __post_init__(self):
        w = tuple(float(x) for x in self.w)
        if len(w) != N_WEIGHTS:
            raise InputError(f"need {N_WEIGHTS} weights, got {len(w)}")
        if any(x < 0 or not np.isfinite(x) for x in w):
            raise InputError("weights must be finite and non-negative")
        if not any(x > 0 for x in w):
            raise InputError("at least one weight must be positive")
        if not float(self.p) >= 1.0:
            raise InputError(f"p must be >= 1, got {self.p}")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "p", float(self.p))

    def scaled(self, c: float) -> "DistanceWeights":
        return DistanceWeights(tuple(c * x for x in self.w), self.p)

    def as_dict(self) -> dict:
        return {"w": list(self.w), "p": self.p}


def combine_groups(norms, w) -> np.ndarray:
    """Weighted sum over the trailing group axis, accumulated in group order."""
    norms = np.asarray(norms)
    acc = np.zeros(norms.shape[:-1])
    for g in range(N_WEIGHTS):
        acc = acc + w[g] * norms[..., g]
    return acc


def distance_matrix(VH, VC, weights: DistanceWeights) -> np.ndarray:
    """``(m, r)`` distances between hour vectors and cluster vectors."""
    return combine_groups(kernels.group_norms(VH, VC, weights.p), weights.w)


def distance(vh, vC, weights: DistanceWeights) -> float:
    return float(distance_matrix(np.reshape(vh, (1, DIM)), np.reshape(vC, (1, DIM)), weights)[0, 0])


def similarity(vh, vC, weights: DistanceWeights) -> float:
    """``1 - distance``; negative for distances above one."""
    return 1.0 - distance(vh, vC, weights)


def median_table(A_load, assignments, r: int) -> np.ndarray:
    """``(r, n)`` medians of each consumer's transformed load over each cluster's hours."""
    A_load = np.asarray(A_load, dtype=np.float64)
    labels = np.asarray(assignments)
    out = np.empty((int(r), A_load.shape[1]))
    for c in range(int(r)):
        rows = A_load[labels == c]
        if rows.shape[0] == 0:
            raise InputError(f"cluster {c} has no members")
        out[c] = np.median(rows, axis=0)
    return out


@dataclass(frozen=True, eq=False)
class ForecastModel:
    clustering: HourClustering
    cluster_vectors: np.ndarray
    medians: np.ndarray
    weights: DistanceWeights
    t: int
    params: TransformParams
    calendar: CalendarContext = field(default_factory=CalendarContext)
    consumer_ids: tuple = ()
    svd: object = None
    train_start: np.datetime64 | None = None
    m1: int = 0
    step_hours: int = 1

    def __post_init__(self):
        r = self.cluster_vectors.shape[0]
        if not 1 <= int(self.t) <= r:
            raise InputError(f"t must be in 1..{r}, got {self.t}")
        if self.medians.shape != (r, self.params.n):
            raise InputError(f"median table shape {self.medians.shape} != ({r}, {self.params.n})")
        object.__setattr__(self, "t", int(self.t))

    @property
    def r(self) -> int:
        return self.cluster_vectors.shape[0]

    @property
    def n(self) -> int:
        return self.medians.shape[1]

    def with_weights(self, weights: DistanceWeights, t: int | None = None) -> "ForecastModel":
        from dataclasses import replace

        return replace(self, weights=weights, t=self.t if t is None else t)


def fit_model(
    A,
    train_hours,
    params: TransformParams,
    clustering: HourClustering,
    weights: DistanceWeights,
    t: int,
    calendar: CalendarContext,
    **extra,
) -> ForecastModel:
    """Assemble a :class:`ForecastModel` from the training design rows and a clustering."""
    A = np.asarray(A)
    n = params.n
    encodings = encode_hours(train_hours, A[:, n : n + 3], calendar)
    vectors = cluster_vectors(encodings, clustering.assignments, clustering.r)
    medians = median_table(A[:, :n], clustering.assignments, clustering.r)
    return ForecastModel(clustering, vectors, medians, weights, t, params, calendar, **extra)


def rank_clusters(sims) -> np.ndarray:
    """Cluster ids ordered by decreasing similarity, ties by lower id (row-wise)."""
    return np.argsort(-np.asarray(sims), axis=-1, kind="stable")


def nearest_clusters(vh, model: ForecastModel) -> np.ndarray:
    sims = 1.0 - distance_matrix(np.reshape(vh, (1, DIM)), model.cluster_vectors, model.weights)[0]
    return rank_clusters(sims)[: model.t]


@dataclass(frozen=True, eq=False)
class ForecastResult:
    kwh: np.ndarray
    transformed: np.ndarray
    fallback: np.ndarray
    neighbors: np.ndarray
    similarities: np.ndarray
    distance_evaluations: int
    median_reads: int


def weighted_medians(sims_sel, nbrs, medians):
    """Similarity-weighted mean of neighbour medians, positive similarities only.

    Rows where no selected similarity is positive fall back to the first
    (most similar) neighbour's median and are flagged.
    """
    m, t = nbrs.shape
    num = np.zeros((m, medians.shape[1]))
    den = np.zeros(m)
    for k in range(t):
        s = np.where(sims_sel[:, k] > 0, sims_sel[:, k], 0.0)
        num = num + s[:, None] * medians[nbrs[:, k]]
        den = den + s
    fallback = ~(den > 0)
    safe = np.where(fallback, 1.0, den)
    out = np.where(fallback[:, None], medians[nbrs[:, 0]], num / safe[:, None])
    return out, fallback


def forecast_encoded(VH, model: ForecastModel) -> ForecastResult:
    """Forecast from pre-computed hour encodings (``m x 79``)."""
    VH = np.atleast_2d(np.asarray(VH, dtype=np.float64))
    sims = 1.0 - distance_matrix(VH, model.cluster_vectors, model.weights)
    # Neighbours are chosen once per hour and shared by every consumer.
    order = rank_clusters(sims)[:, : model.t]
    sel = np.take_along_axis(sims, order, axis=1)
    transformed, fallback = weighted_medians(sel, order, model.medians)
    if fallback.any():
        log.info("%d hour(s) had no positive similarity among %d neighbours; used top-1 median", fallback.sum(), model.t)
    kwh = inverse_load(transformed, model.params)
    m = VH.shape[0]
    return ForecastResult(kwh, transformed, fallback, order, sel, m * model.r, m * model.t * model.n)


def forecast_matrix(timestamps, weather_scaled, model: ForecastModel) -> ForecastResult:
    """Forecast every consumer for each ``(timestamp, scaled weather)`` test hour."""
    if model is None:
        raise InputError("model is not trained")
    VH = encode_hours(timestamps, weather_scaled, model.calendar)
    return forecast_encoded(VH, model)


def forecast_cell(timestamp, weather_scaled, consumer: int, model: ForecastModel) -> float:
    """kWh forecast for one consumer at one hour."""
    if model is None:
        raise InputError("model is not trained")
    if not 0 <= consumer < model.n:
        raise InputError(f"consumer index {consumer} out of range")
    vh = encode_hour(timestamp, weather_scaled, model.calendar)
    nbrs = nearest_clusters(vh, model)
    sims = [similarity(vh, model.cluster_vectors[c], model.weights) for c in nbrs]
    num = 0.0
    den = 0.0
    for c, s in zip(nbrs, sims):
        if s > 0:
            num = num + s * model.medians[c, consumer]
            den = den + s
    if den > 0:
        value = num / den
    else:
        log.info("no positive similarity at %s; using top-1 cluster median", timestamp)
        value = model.medians[nbrs[0], consumer]
    return inverse_transform(value, model.params, consumer)
