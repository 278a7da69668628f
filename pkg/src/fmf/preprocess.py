"""Per-consumer scaling, q-th root transform, weather scaling and the inverse map.

Load cells go through ``x -> ((x - lo_j) / (hi_j - lo_j)) ** (1 / q)`` with
``lo_j, hi_j`` taken from the training rows only; test rows are clamped to the
training range first. Weather columns are min-max scaled (no root) and
appended, giving an ``m x (n + 3)`` design matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .ingest import AlignedDataset

log = logging.getLogger(__name__)

SCALE_THEN_ROOT = "scale_then_root"
CONSTANT_LEVEL = 0.5


@dataclass(frozen=True, eq=False)
class TransformParams:
    q: int
    per_consumer_min: np.ndarray
    per_consumer_max: np.ndarray
    weather_min: np.ndarray
    weather_max: np.ndarray
    transform_order: str = SCALE_THEN_ROOT

    def __post_init__(self):
        if isinstance(self.q, bool) or int(self.q) != self.q or int(self.q) < 1:
            raise InputError(f"q must be an integer >= 1, got {self.q!r}")
        object.__setattr__(self, "q", int(self.q))
        for name in ("per_consumer_min", "per_consumer_max", "weather_min", "weather_max"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            if not np.all(np.isfinite(arr)):
                raise InputError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        if np.any(self.per_consumer_max < self.per_consumer_min) or np.any(self.weather_max < self.weather_min):
            raise InputError("max must be >= min elementwise")
        if self.transform_order != SCALE_THEN_ROOT:
            raise InputError(f"unsupported transform order {self.transform_order!r}")

    @property
    def n(self) -> int:
        return self.per_consumer_min.size

    @property
    def constant_columns(self) -> np.ndarray:
        return self.per_consumer_max == self.per_consumer_min

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "transform_order": self.transform_order,
            "per_consumer_min": self.per_consumer_min.tolist(),
            "per_consumer_max": self.per_consumer_max.tolist(),
            "weather_min": self.weather_min.tolist(),
            "weather_max": self.weather_max.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TransformParams":
        return cls(
            q=data["q"],
            per_consumer_min=data["per_consumer_min"],
            per_consumer_max=data["per_consumer_max"],
            weather_min=data["weather_min"],
            weather_max=data["weather_max"],
            transform_order=data.get("transform_order", SCALE_THEN_ROOT),
        )

    def __eq__(self, other):
        if not isinstance(other, TransformParams):
            return NotImplemented
        return self.to_dict() == other.to_dict()


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    values: np.ndarray
    hour_index: np.ndarray

    @property
    def n(self) -> int:
        return self.values.shape[1] - 3

    @property
    def load(self) -> np.ndarray:
        return self.values[:, : self.n]

    @property
    def weather(self) -> np.ndarray:
        return self.values[:, self.n :]


@dataclass(frozen=True, eq=False)
class TrainTestSplit:
    A: np.ndarray
    B: np.ndarray
    m1: int
    m2: int
    train_hours: np.ndarray
    test_hours: np.ndarray


def _minmax(values, lo, hi):
    span = hi - lo
    const = span == 0
    safe = np.where(const, 1.0, span)
    out = np.clip((values - lo) / safe, 0.0, 1.0)
    return np.where(const, CONSTANT_LEVEL, out)


def int_power(values, q: int):
    """``values ** q`` for integer ``q`` by repeated multiplication.

    Used instead of ``np.power`` so scalar and array paths give identical bits.
    """
    out = np.array(values, dtype=np.float64, copy=True)
    base = np.array(values, dtype=np.float64)
    for _ in range(int(q) - 1):
        out = out * base
    return out


def transform_load(values_kwh, params: TransformParams) -> np.ndarray:
    """Map kWh rows (``(..., n)``) into the clamped, root-transformed [0, 1] space."""
    scaled = _minmax(np.asarray(values_kwh, dtype=np.float64), params.per_consumer_min, params.per_consumer_max)
    if params.q == 1:
        return scaled
    rooted = np.power(scaled, 1.0 / params.q)
    return np.where(params.constant_columns, CONSTANT_LEVEL, rooted)


def scale_weather(values, params: TransformParams) -> np.ndarray:
    """Min-max scale raw (temp, wind, humidity) rows with the training bounds, clamped to [0, 1]."""
    return _minmax(np.asarray(values, dtype=np.float64), params.weather_min, params.weather_max)


def fit_transform(dataset: AlignedDataset, q: int, m1: int):
    """Fit scaling on the first ``m1`` rows and transform the whole dataset.

    Returns
    -------
    design : DesignMatrix
        ``m x (n + 3)`` matrix, load columns first, then scaled weather.
    params : TransformParams
    split : TrainTestSplit
        ``A`` is the first ``m1`` rows of ``design.values``, ``B`` the rest.
    """
    m = dataset.load.m
    if isinstance(q, bool) or int(q) != q or int(q) < 1:
        raise InputError(f"q must be an integer >= 1, got {q!r}")
    m1 = int(m1)
    if not 24 <= m1 < m:
        raise InputError(f"need 24 <= m1 < m, got m1={m1}, m={m}")

    load = dataset.load.values
    weather = dataset.weather.values
    params = TransformParams(
        q=int(q),
        per_consumer_min=load[:m1].min(axis=0),
        per_consumer_max=load[:m1].max(axis=0),
        weather_min=weather[:m1].min(axis=0),
        weather_max=weather[:m1].max(axis=0),
    )
    const = np.flatnonzero(params.constant_columns)
    if const.size:
        ids = [dataset.load.consumer_ids[j] for j in const[:10]]
        log.warning("%d consumer(s) constant over training rows, mapped to %.1f: %s", const.size, CONSTANT_LEVEL, ids)

    values = np.hstack([transform_load(load, params), scale_weather(weather, params)])
    values.setflags(write=False)
    hours = dataset.timestamps
    design = DesignMatrix(values, hours)
    split = TrainTestSplit(values[:m1], values[m1:], m1, m - m1, hours[:m1], hours[m1:])
    return design, params, split


def inverse_transform(value, params: TransformParams, consumer: int) -> float:
    """kWh for a transformed value of consumer ``consumer`` (value clamped to [0, 1])."""
    if not 0 <= consumer < params.n:
        raise InputError(f"consumer index {consumer} out of range 0..{params.n - 1}")
    v = min(max(float(value), 0.0), 1.0)
    lo = float(params.per_consumer_min[consumer])
    hi = float(params.per_consumer_max[consumer])
    return float(int_power(v, params.q)) * (hi - lo) + lo


def inverse_load(values, params: TransformParams) -> np.ndarray:
    """Vectorized :func:`inverse_transform` over ``(..., n)`` arrays."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    span = params.per_consumer_max - params.per_consumer_min
    return int_power(v, params.q) * span + params.per_consumer_min


# ---------------------------------------------------------------------------
# Skewness diagnostics


@dataclass(frozen=True)
class SkewReport:
    pre_counts: np.ndarray
    pre_edges: np.ndarray
    post_counts: np.ndarray
    post_edges: np.ndarray
    pre_skewness: float
    post_skewness: float


def sample_skewness(x) -> float:
    x = np.asarray(x, dtype=np.float64)
    dev = x - x.mean()
    m2 = np.mean(dev**2)
    if m2 == 0:
        return 0.0
    return float(np.mean(dev**3) / m2**1.5)


def skew_report(column, q: int, bins: int = 20) -> SkewReport:
    """Histograms and sample skewness of a kWh column before and after the root transform."""
    x = np.asarray(column, dtype=np.float64).ravel()
    if x.size == 0:
        raise InputError("skew_report needs a non-empty column")
    lo, hi = x.min(), x.max()
    scaled = np.full_like(x, CONSTANT_LEVEL) if hi == lo else (x - lo) / (hi - lo)
    post = scaled if q == 1 else np.power(scaled, 1.0 / q)
    pre_counts, pre_edges = np.histogram(x, bins=bins)
    post_counts, post_edges = np.histogram(post, bins=bins, range=(0.0, 1.0))
    return SkewReport(pre_counts, pre_edges, post_counts, post_edges, sample_skewness(x), sample_skewness(post))
