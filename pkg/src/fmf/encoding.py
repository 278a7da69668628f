"""The 79-coordinate calendar/weather feature vector for hours and clusters of hours.

Layout (zero-based)::

    0-23   hour of day         one-hot
    24-30  day of week         one-hot, offset by CalendarContext.week_start
    31-61  day of month        one-hot
    62-73  month               one-hot
    74-75  (holiday, non-holiday)
    76     scaled temperature
    77     scaled wind speed
    78     scaled humidity

A cluster's vector is the plain mean of its members' vectors, so each
categorical block of it is a distribution.
"""
from __future__ import annotations

import numpy as np

from .errors import InputError
from .ingest import CalendarContext

DIM = 79
HOUR_OF_DAY = slice(0, 24)
DAY_OF_WEEK = slice(24, 31)
DAY_OF_MONTH = slice(31, 62)
MONTH = slice(62, 74)
HOLIDAY = slice(74, 76)
TEMPERATURE, WIND, HUMIDITY = 76, 77, 78
CATEGORICAL = (HOUR_OF_DAY, DAY_OF_WEEK, DAY_OF_MONTH, MONTH, HOLIDAY)

_WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
_MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


def coordinate_labels(week_start: int = 0) -> tuple:
    days = tuple(_WEEKDAYS[(week_start + i) % 7] for i in range(7))
    return (
        tuple(f"{h:02d}:00" for h in range(24))
        + days
        + tuple(f"day{d:02d}" for d in range(1, 32))
        + _MONTHS
        + ("holiday", "non_holiday", "temperature", "wind_speed", "humidity")
    )


COORDINATE_LABELS = coordinate_labels()


def calendar_fields(timestamps, calendar: CalendarContext):
    """Hour, weekday (week_start-relative), day-of-month, month index and holiday flag."""
    ts = np.asarray(timestamps, dtype="datetime64[h]")
    hour = ts.astype(np.int64) % 24
    days = ts.astype("datetime64[D]")
    weekday = (days.astype(np.int64) + 3 - calendar.week_start) % 7
    months = days.astype("datetime64[M]")
    dom = (days - months.astype("datetime64[D]")).astype(np.int64)
    month = months.astype(np.int64) % 12
    holiday = np.isin(days, calendar.holiday_days())
    return hour, weekday, dom, month, holiday


def encode_hours(timestamps, weather, calendar: CalendarContext) -> np.ndarray:
    """Encode many hours at once; ``weather`` is ``(m, 3)`` already scaled to [0, 1]."""
    ts = np.atleast_1d(np.asarray(timestamps, dtype="datetime64[h]"))
    w = np.asarray(weather, dtype=np.float64).reshape(ts.size, 3)
    if np.any(w < 0) or np.any(w > 1) or not np.all(np.isfinite(w)):
        raise InputError("scaled weather must lie in [0, 1]")
    hour, weekday, dom, month, holiday = calendar_fields(ts, calendar)
    rows = np.arange(ts.size)
    out = np.zeros((ts.size, DIM))
    out[rows, hour] = 1.0
    out[rows, 24 + weekday] = 1.0
    out[rows, 31 + dom] = 1.0
    out[rows, 62 + month] = 1.0
    out[rows, np.where(holiday, 74, 75)] = 1.0
    out[:, 76:79] = w
    return out


def encode_hour(timestamp, weather, calendar: CalendarContext | None = None) -> np.ndarray:
    """Feature vector of one hour."""
    return encode_hours([timestamp], np.asarray(weather).reshape(1, 3), calendar or CalendarContext())[0]


def encode_cluster(member_vectors) -> np.ndarray:
    """Coordinate-wise mean of member vectors (summed in list order, then divided)."""
    members = np.asarray(member_vectors, dtype=np.float64)
    if members.ndim != 2 or members.shape[0] == 0:
        raise InputError("a cluster needs at least one member vector")
    acc = np.zeros(members.shape[1])
    for row in members:
        acc = acc + row
    return acc / members.shape[0]


def cluster_vectors(encodings, assignments, r: int) -> np.ndarray:
    """``encode_cluster`` for every cluster; members are accumulated in row order."""
    enc = np.asarray(encodings, dtype=np.float64)
    labels = np.asarray(assignments, dtype=np.int64)
    sums = np.zeros((int(r), enc.shape[1]))
    np.add.at(sums, labels, enc)
    counts = np.bincount(labels, minlength=int(r))
    if np.any(counts == 0):
        raise InputError(f"cluster(s) {np.flatnonzero(counts == 0).tolist()} have no members")
    return sums / counts[:, None]
