"""Deterministic synthetic AMI datasets.

Each consumer's hourly load is

    level * shape(hour, weekday/weekend) * (1 + seasonal * s(day)) * holiday_dip * noise

where ``shape`` is one of a few daily archetypes normalized to mean one,
``s(day)`` is a winter-peaking annual cosine and ``noise`` is a mean-one
lognormal factor. Temperature, wind and humidity follow the same annual and
daily cycles plus AR(1) perturbations, so weather is correlated with load.
"""
from __future__ import annotations

import datetime as _dt
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .ingest import HOUR, AlignedDataset, CalendarContext, LoadMatrix, WeatherSeries, to_hour

PROFILES = ("evening", "daytime", "flat")


@dataclass(frozen=True)
class SyntheticSpec:
    n_consumers: int
    n_hours: int
    seed: int = 0
    profile_mix: tuple = (0.6, 0.3, 0.1)
    noise: float = 0.3
    mean_load: float = 1.3
    seasonal_amplitude: float = 0.35
    holiday_depth: float = 0.25
    weather_noise: float = 1.0
    start: str = "2009-07-14T00"
    holidays: tuple | None = None

    def validate(self):
        if int(self.n_consumers) < 1:
            raise InputError("n_consumers must be >= 1")
        if int(self.n_hours) < 48:
            raise InputError("n_hours must be >= 48")
        mix = np.asarray(self.profile_mix, dtype=float)
        if mix.shape != (len(PROFILES),) or np.any(mix < 0) or mix.sum() <= 0:
            raise InputError(f"profile_mix needs {len(PROFILES)} non-negative weights")
        if self.noise < 0 or self.weather_noise < 0:
            raise InputError("noise levels must be >= 0")
        if self.mean_load <= 0:
            raise InputError("mean_load must be > 0")
        if not 0 <= self.holiday_depth < 1:
            raise InputError("holiday_depth must be in [0, 1)")
        if not 0 <= self.seasonal_amplitude < 1:
            raise InputError("seasonal_amplitude must be in [0, 1)")


def default_holidays(first_year: int, last_year: int) -> frozenset:
    days = set()
    for year in range(first_year, last_year + 1):
        days.update({_dt.date(year, 1, 1), _dt.date(year, 3, 17), _dt.date(year, 12, 25), _dt.date(year, 12, 26)})
        for month in (5, 8):
            first = _dt.date(year, month, 1)
            days.add(first + _dt.timedelta(days=(7 - first.weekday()) % 7))
    return frozenset(days)


def _bump(hour, center, width):
    diff = (hour - center + 12.0) % 24.0 - 12.0
    return np.exp(-0.5 * (diff / width) ** 2)


def _daily_shapes(kind, peak_shift, hours):
    """Weekday and weekend shapes (24-vectors) for one consumer archetype."""
    h = hours + 0.0
    if kind == "evening":
        wk = 0.35 + 0.5 * _bump(h, 7.5 + peak_shift, 1.3) + 1.2 * _bump(h, 19.0 + peak_shift, 2.2)
        we = 0.40 + 0.4 * _bump(h, 10.0 + peak_shift, 2.0) + 0.5 * _bump(h, 14.0, 3.0) + 1.1 * _bump(h, 19.0 + peak_shift, 2.5)
    elif kind == "daytime":
        wk = 0.45 + 0.6 * _bump(h, 12.0 + peak_shift, 4.0) + 0.8 * _bump(h, 19.0 + peak_shift, 2.0)
        we = 0.45 + 0.8 * _bump(h, 12.0 + peak_shift, 4.0) + 0.8 * _bump(h, 19.0 + peak_shift, 2.0)
    else:
        wk = 0.8 + 0.2 * _bump(h, 18.0 + peak_shift, 3.0)
        we = 0.8 + 0.25 * _bump(h, 15.0 + peak_shift, 4.0)
    scale = (5 * wk.mean() + 2 * we.mean()) / 7.0
    return wk / scale, we / scale


def annual_cycle(days: np.ndarray) -> np.ndarray:
    """Winter-peaking cosine of the day of year (1 in mid-January, -1 in mid-July)."""
    years = days.astype("datetime64[Y]")
    doy = (days - years.astype("datetime64[D]")).astype(np.int64)
    return np.cos(2.0 * np.pi * (doy - 15) / 365.25)


def _ar1(rng, size, phi, sd):
    eps = rng.standard_normal(size) * sd * np.sqrt(1 - phi * phi)
    out = np.empty(size)
    acc = 0.0
    for i in range(size):
        acc = phi * acc + eps[i]
        out[i] = acc
    return out


def generate_synthetic(spec: SyntheticSpec) -> AlignedDataset:
    """Build an :class:`AlignedDataset` that depends only on ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n, m = int(spec.n_consumers), int(spec.n_hours)
    start = to_hour(spec.start)
    ts = start + np.arange(m) * HOUR
    hour = (ts.astype(np.int64) % 24).astype(np.int64)
    days = ts.astype("datetime64[D]")
    weekday = (days.astype(np.int64) + 3) % 7
    weekend = weekday >= 5

    if spec.holidays is None:
        y0 = int(str(days[0])[:4])
        y1 = int(str(days[-1])[:4])
        holidays = default_holidays(y0, y1)
    else:
        holidays = frozenset(_dt.date.fromisoformat(str(d)[:10]) for d in spec.holidays)
    calendar = CalendarContext(holidays)
    is_holiday = np.isin(days, calendar.holiday_days())

    mix = np.asarray(spec.profile_mix, dtype=float)
    kinds = rng.choice(len(PROFILES), size=n, p=mix / mix.sum())
    shifts = rng.uniform(-1.0, 1.0, size=n)
    levels = spec.mean_load * rng.lognormal(mean=-0.08, sigma=0.4, size=n)

    hours24 = np.arange(24)
    shape = np.empty((m, n))
    for j in range(n):
        wk, we = _daily_shapes(PROFILES[kinds[j]], shifts[j], hours24)
        shape[:, j] = np.where(weekend, we[hour], wk[hour])

    season = annual_cycle(days)
    factor = 1.0 + spec.seasonal_amplitude * season
    factor = factor * np.where(is_holiday, 1.0 - spec.holiday_depth, 1.0)
    load = levels[None, :] * shape * factor[:, None]
    if spec.noise > 0:
        sigma = spec.noise
        load = load * rng.lognormal(mean=-0.5 * sigma * sigma, sigma=sigma, size=(m, n))

    daily = np.cos(2.0 * np.pi * (hour - 15) / 24.0)
    wn = spec.weather_noise
    temp = 10.0 - 7.0 * season + 4.0 * daily + wn * _ar1(rng, m, 0.97, 2.5)
    wind = np.maximum(0.0, 4.0 + 1.0 * season + 1.2 * daily + wn * _ar1(rng, m, 0.9, 1.5))
    hum = np.clip(0.75 + 0.08 * season - 0.12 * daily + wn * _ar1(rng, m, 0.9, 0.06), 0.05, 1.0)

    matrix = LoadMatrix(start, tuple(f"H{j:04d}" for j in range(n)), load)
    weather = WeatherSeries(start, np.column_stack([temp, wind, hum]))
    return AlignedDataset(matrix, weather, calendar)
