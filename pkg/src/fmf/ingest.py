"""Reading, validating and aligning AMI load and weather data.

Timestamps are naive local civil time held as ``numpy.datetime64[h]``. No
timezone or DST arithmetic is done; inputs must already be on a clean hourly
grid.
"""
from __future__ import annotations

import datetime as _dt
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import pandas as pd

from .errors import CoverageError, InputError, TimestampError

HOUR = np.timedelta64(1, "h")
_MAX_LISTED = 20


def to_hour(value) -> np.datetime64:
    """Coerce a datetime-like to ``datetime64[h]``, rejecting sub-hour parts."""
    ts = np.datetime64(pd.Timestamp(value).to_datetime64(), "ns")
    hour = ts.astype("datetime64[h]")
    if hour != ts:
        raise InputError(f"timestamp {value!r} is not on an hour boundary")
    return hour


def _listing(hours) -> str:
    hours = [str(h) for h in hours]
    head = ", ".join(hours[:_MAX_LISTED])
    if len(hours) > _MAX_LISTED:
        head += f", ... ({len(hours)} total)"
    return head


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class LoadMatrix:
    """Hours-by-consumers matrix of kWh readings.

    Row ``i`` covers the period starting at ``start + i * step_hours``. Raw
    meter data has ``step_hours == 1``; aggregated views use larger steps.
    """

    start: np.datetime64
    consumer_ids: tuple
    values: np.ndarray
    step_hours: int = 1

    def __post_init__(self):
        object.__setattr__(self, "start", to_hour(self.start))
        object.__setattr__(self, "consumer_ids", tuple(str(c) for c in self.consumer_ids))
        values = _frozen(self.values)
        if values.ndim != 2:
            raise InputError(f"load values must be 2-D, got shape {values.shape}")
        m, n = values.shape
        if m < 2 or n < 1:
            raise InputError(f"load matrix needs m >= 2 hours and n >= 1 consumers, got {m}x{n}")
        if len(self.consumer_ids) != n:
            raise InputError(f"{len(self.consumer_ids)} consumer ids for {n} columns")
        if len(set(self.consumer_ids)) != n:
            raise InputError("consumer ids must be unique")
        if not np.all(np.isfinite(values)):
            raise InputError("load values must be finite")
        if np.any(values < 0):
            raise InputError("load values must be non-negative")
        if int(self.step_hours) < 1:
            raise InputError("step_hours must be >= 1")
        object.__setattr__(self, "step_hours", int(self.step_hours))
        object.__setattr__(self, "values", values)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + np.arange(self.m) * self.step_hours * HOUR

    def __eq__(self, other):
        if not isinstance(other, LoadMatrix):
            return NotImplemented
        return (
            self.start == other.start
            and self.step_hours == other.step_hours
            and self.consumer_ids == other.consumer_ids
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class WeatherSeries:
    """Per-period temperature (C), wind speed (m/s) and humidity (fraction)."""

    start: np.datetime64
    values: np.ndarray
    step_hours: int = 1

    def __post_init__(self):
        object.__setattr__(self, "start", to_hour(self.start))
        values = _frozen(self.values)
        if values.ndim != 2 or values.shape[1] != 3:
            raise InputError(f"weather values must be (m, 3), got {values.shape}")
        if values.shape[0] < 1:
            raise InputError("weather series is empty")
        if not np.all(np.isfinite(values)):
            raise InputError("weather values must be finite")
        hum = values[:, 2]
        if np.any(hum < 0) or np.any(hum > 1):
            raise InputError("humidity must be a fraction in [0, 1]")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "step_hours", int(self.step_hours))

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def timestamps(self) -> np.ndarray:
        return self.start + np.arange(self.m) * self.step_hours * HOUR

    def __eq__(self, other):
        if not isinstance(other, WeatherSeries):
            return NotImplemented
        return (
            self.start == other.start
            and self.step_hours == other.step_hours
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class CalendarContext:
    """Public holidays and the weekday that opens the week (0 = Monday)."""

    holidays: frozenset = field(default_factory=frozenset)
    week_start: int = 0

    def __post_init__(self):
        days = frozenset(
            d if isinstance(d, _dt.date) and not isinstance(d, _dt.datetime) else _dt.date.fromisoformat(str(d)[:10])
            for d in self.holidays
        )
        object.__setattr__(self, "holidays", days)
        if not 0 <= int(self.week_start) <= 6:
            raise InputError("week_start must be in 0..6")

    def holiday_days(self) -> np.ndarray:
        """Sorted holiday dates as ``datetime64[D]``."""
        return np.array(sorted(self.holidays), dtype="datetime64[D]")


@dataclass(frozen=True)
class AlignedDataset:
    load: LoadMatrix
    weather: WeatherSeries
    calendar: CalendarContext = field(default_factory=CalendarContext)

    def __post_init__(self):
        if (
            self.load.start != self.weather.start
            or self.load.m != self.weather.m
            or self.load.step_hours != self.weather.step_hours
        ):
            raise InputError("load and weather must cover identical periods; use align()")

    @property
    def timestamps(self) -> np.ndarray:
        return self.load.timestamps


# ---------------------------------------------------------------------------
# Load CSV


@dataclass(frozen=True)
class LoadSchema:
    """Column names (or zero-based positions) of the long-format load CSV."""

    timestamp: str | int = "timestamp"
    consumer: str | int = "consumer_id"
    kwh: str | int = "kwh"


def _column(frame: pd.DataFrame, key, path) -> pd.Series:
    if isinstance(key, int):
        if not 0 <= key < frame.shape[1]:
            raise InputError(f"{path}: column index {key} out of range")
        return frame.iloc[:, key]
    if key not in frame.columns:
        raise InputError(f"{path}: missing column {key!r} (have {list(frame.columns)})")
    return frame[key]


def _read_table(path) -> pd.DataFrame:
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        raise InputError(f"{path}: file is empty") from None
    except pd.errors.ParserError as exc:
        raise InputError(f"{path}: malformed CSV ({exc})") from None
    if frame.empty:
        raise InputError(f"{path}: no data rows")
    return frame


def _parse_hours(raw: pd.Series, path) -> np.ndarray:
    parsed = pd.to_datetime(raw.str.strip(), format="ISO8601", errors="coerce")
    if getattr(parsed.dt, "tz", None) is not None:
        raise InputError(f"{path}: timestamps carry a UTC offset; supply naive local time")
    bad = np.flatnonzero(parsed.isna().to_numpy())
    if bad.size:
        i = bad[0]
        raise InputError(f"{path}: line {i + 2}: unparseable timestamp {raw.iloc[i]!r}")
    ns = parsed.to_numpy(dtype="datetime64[ns]")
    hours = ns.astype("datetime64[h]")
    off = np.flatnonzero(hours != ns)
    if off.size:
        i = off[0]
        raise InputError(f"{path}: line {i + 2}: timestamp {raw.iloc[i]!r} is not on an hour boundary")
    return hours


def _parse_numbers(raw: pd.Series, path, what) -> np.ndarray:
    text = raw.str.strip()
    try:
        # Python's float() rounds correctly; pandas' fast parser can be off by an ulp.
        vals = text.to_numpy(dtype=object).astype(np.float64)
    except ValueError:
        vals = pd.to_numeric(text, errors="coerce").to_numpy(dtype=np.float64)
    bad = np.flatnonzero(~np.isfinite(vals))
    if bad.size:
        i = bad[0]
        raise InputError(f"{path}: line {i + 2}: bad {what} value {raw.iloc[i]!r}")
    return vals


def _check_grid(hours: np.ndarray, path, what) -> tuple[np.datetime64, int]:
    """Start and length of the hourly grid spanned by ``hours`` (must be gap-free)."""
    uniq = np.unique(hours)
    start, end = uniq[0], uniq[-1]
    m = int((end - start) // HOUR) + 1
    if m != uniq.size:
        full = start + np.arange(m) * HOUR
        missing = np.setdiff1d(full, uniq)
        raise TimestampError(f"{path}: {what} has {missing.size} missing hour(s): {_listing(missing)}", missing)
    return start, m


def load_ami_csv(path, schema: LoadSchema | None = None) -> LoadMatrix:
    """Parse a long-format (timestamp, consumer, kWh) CSV into a :class:`LoadMatrix`.

    Consumers are ordered by first appearance in the file. Gaps, duplicate
    readings, missing consumer-hours and negative readings are rejected.
    """
    schema = schema or LoadSchema()
    frame = _read_table(path)
    ts_raw = _column(frame, schema.timestamp, path)
    ids = _column(frame, schema.consumer, path).str.strip()
    kwh_raw = _column(frame, schema.kwh, path)

    empty = np.flatnonzero((ids == "").to_numpy())
    if empty.size:
        raise InputError(f"{path}: line {empty[0] + 2}: empty consumer id")
    hours = _parse_hours(ts_raw, path)
    kwh = _parse_numbers(kwh_raw, path, "kWh")
    neg = np.flatnonzero(kwh < 0)
    if neg.size:
        raise InputError(f"{path}: line {neg[0] + 2}: negative kWh {kwh[neg[0]]}")

    codes, order = pd.factorize(ids, sort=False)
    start, m = _check_grid(hours, path, "load series")
    row = ((hours - start) // HOUR).astype(np.int64)
    cell = row * len(order) + codes
    uniq, counts = np.unique(cell, return_counts=True)
    if np.any(counts > 1):
        dup = uniq[counts > 1]
        dup_hours = np.unique(start + (dup // len(order)) * HOUR)
        raise TimestampError(f"{path}: duplicate readings at hour(s): {_listing(dup_hours)}", dup_hours)

    values = np.full((m, len(order)), np.nan)
    values[row, codes] = kwh
    holes = np.argwhere(np.isnan(values))
    if holes.size:
        listed = [f"{order[j]}@{start + i * HOUR}" for i, j in holes[:_MAX_LISTED]]
        raise TimestampError(
            f"{path}: {len(holes)} missing consumer-hour reading(s): {', '.join(listed)}",
            np.unique(start + holes[:, 0] * HOUR),
        )
    return LoadMatrix(start, tuple(order), values)


def write_ami_csv(load: LoadMatrix, path) -> None:
    """Write ``load`` in the long CSV format read by :func:`load_ami_csv`."""
    ts = np.repeat(load.timestamps, load.n)
    frame = pd.DataFrame(
        {
            "timestamp": np.datetime_as_string(ts, unit="h"),
            "consumer_id": np.tile(np.asarray(load.consumer_ids, dtype=object), load.m),
            "kwh": load.values.ravel(),
        }
    )
    frame["timestamp"] = frame["timestamp"] + ":00"
    frame.to_csv(path, index=False, float_format="%.17g")


# ---------------------------------------------------------------------------
# Weather CSV


def _fill_gaps(hours, values, max_gap, interpolate, path):
    start, end = hours.min(), hours.max()
    m = int((end - start) // HOUR) + 1
    full = np.full((m, values.shape[1]), np.nan)
    idx = ((hours - start) // HOUR).astype(np.int64)
    full[idx] = values
    missing = np.flatnonzero(np.isnan(full[:, 0]))
    if missing.size == 0:
        return start, full
    missing_hours = start + missing * HOUR
    if not interpolate:
        raise TimestampError(
            f"{path}: weather has {missing.size} missing hour(s): {_listing(missing_hours)}", missing_hours
        )
    # Runs of consecutive missing rows.
    breaks = np.flatnonzero(np.diff(missing) > 1)
    runs = np.split(missing, breaks + 1)
    too_long = [r for r in runs if r.size > max_gap]
    if too_long:
        bad = np.concatenate(too_long)
        raise TimestampError(
            f"{path}: weather gap longer than {max_gap} hour(s) at {_listing(start + bad * HOUR)}",
            start + bad * HOUR,
        )
    known = np.flatnonzero(~np.isnan(full[:, 0]))
    for c in range(full.shape[1]):
        full[missing, c] = np.interp(missing, known, full[known, c])
    return start, full


def load_weather_csv(path, interpolate: bool = True, max_gap: int = 6) -> WeatherSeries:
    """Parse an hourly weather CSV (timestamp, temp_c, wind_mps, humidity).

    Humidity is taken as percent and divided by 100 when its maximum exceeds 1.
    Short runs of missing hours (at most ``max_gap``) are filled by linear
    interpolation when ``interpolate`` is true.
    """
    frame = _read_table(path)
    hours = _parse_hours(_column(frame, "timestamp", path), path)
    cols = [
        _parse_numbers(_column(frame, name, path), path, name) for name in ("temp_c", "wind_mps", "humidity")
    ]
    values = np.column_stack(cols)
    hum = values[:, 2]
    out = np.flatnonzero((hum < 0) | (hum > 100))
    if out.size:
        raise InputError(f"{path}: line {out[0] + 2}: humidity {hum[out[0]]} outside [0, 100]")
    if hum.max() > 1.0:
        values[:, 2] = hum / 100.0

    uniq, counts = np.unique(hours, return_counts=True)
    if np.any(counts > 1):
        dup = uniq[counts > 1]
        raise TimestampError(f"{path}: duplicate weather hour(s): {_listing(dup)}", dup)
    start, full = _fill_gaps(hours, values, int(max_gap), interpolate, path)
    return WeatherSeries(start, full)


def write_weather_csv(weather: WeatherSeries, path) -> None:
    frame = pd.DataFrame(
        {
            "timestamp": np.char.add(np.datetime_as_string(weather.timestamps, unit="h").astype(str), ":00"),
            "temp_c": weather.values[:, 0],
            "wind_mps": weather.values[:, 1],
            "humidity": weather.values[:, 2],
        }
    )
    frame.to_csv(path, index=False, float_format="%.17g")


def load_holidays(path) -> CalendarContext:
    """One ISO date per line; blank lines and ``#`` comments are ignored."""
    if not os.path.exists(path):
        raise InputError(f"{path}: no such file")
    days = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                days.add(_dt.date.fromisoformat(text))
            except ValueError:
                raise InputError(f"{path}: line {lineno}: bad date {text!r}") from None
    return CalendarContext(frozenset(days))


def write_holidays(calendar: CalendarContext, path) -> None:
    with open(path, "w") as fh:
        for day in sorted(calendar.holidays):
            fh.write(day.isoformat() + "\n")


# ---------------------------------------------------------------------------
# Alignment


def align(load: LoadMatrix, weather: WeatherSeries, calendar: CalendarContext | None = None) -> AlignedDataset:
    """Trim ``weather`` to the periods of ``load``.

    Raises :class:`CoverageError` listing the load periods with no weather.
    """
    calendar = calendar or CalendarContext()
    if load.step_hours != weather.step_hours:
        raise TimestampError(
            f"conflicting timestamps: load step {load.step_hours}h, weather step {weather.step_hours}h"
        )
    step = load.step_hours * HOUR
    offset = load.start - weather.start
    if offset % step != np.timedelta64(0, "h"):
        raise TimestampError(f"conflicting timestamps: weather grid starting {weather.start} is offset from load grid")
    first = int(offset // step)
    rows = first + np.arange(load.m)
    covered = (rows >= 0) & (rows < weather.m)
    if not covered.all():
        missing = load.timestamps[~covered]
        raise CoverageError(f"weather does not cover {missing.size} load hour(s): {_listing(missing)}", missing)
    trimmed = WeatherSeries(load.start, weather.values[first : first + load.m], load.step_hours)
    return AlignedDataset(load, trimmed, calendar)


def subset_consumers(dataset: AlignedDataset, columns: Sequence[int]) -> AlignedDataset:
    cols = list(columns)
    load = LoadMatrix(
        dataset.load.start,
        tuple(dataset.load.consumer_ids[c] for c in cols),
        dataset.load.values[:, cols],
        dataset.load.step_hours,
    )
    return AlignedDataset(load, dataset.weather, dataset.calendar)
