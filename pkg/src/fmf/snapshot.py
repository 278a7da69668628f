"""Binary model snapshots.

Layout (all integers little-endian)::

    magic      8 bytes   b"FMFSNAP\\0"
    version    uint32
    meta_len   uint32
    meta       meta_len bytes of UTF-8 JSON (sorted keys)
    n_arrays   uint32
    per array:
        name_len uint16, name (ASCII)
        dtype    1 byte, b"d" float64 or b"q" int64
        ndim     uint8, then ndim uint64 dimensions
        data     little-endian, C order

The same model always serializes to the same bytes.
"""
from __future__ import annotations

import datetime as _dt
import json
import struct

import numpy as np

from .clustering import HourClustering
from .errors import InputError
from .factorization import TruncatedSVD
from .forecaster import DistanceWeights, ForecastModel
from .ingest import CalendarContext
from .preprocess import TransformParams

MAGIC = b"FMFSNAP\x00"
VERSION = 1
_DTYPES = {b"d": np.dtype("<f8"), b"q": np.dtype("<i8")}


def _pack_array(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    if arr.dtype.kind in "iub":
        code, data = b"q", np.ascontiguousarray(arr, dtype="<i8")
    else:
        code, data = b"d", np.ascontiguousarray(arr, dtype="<f8")
    raw = name.encode("ascii")
    head = struct.pack("<H", len(raw)) + raw + code + struct.pack("<B", data.ndim)
    head += b"".join(struct.pack("<Q", s) for s in data.shape)
    return head + data.tobytes()


def dumps(model: ForecastModel) -> bytes:
    meta = {
        "params": model.params.to_dict(),
        "weights": model.weights.as_dict(),
        "t": model.t,
        "holidays": sorted(d.isoformat() for d in model.calendar.holidays),
        "week_start": model.calendar.week_start,
        "consumer_ids": list(model.consumer_ids),
        "train_start": None if model.train_start is None else str(model.train_start),
        "m1": model.m1,
        "step_hours": model.step_hours,
        "wcss": model.clustering.wcss,
        "n_iter": model.clustering.n_iter,
    }
    arrays = {
        "assignments": model.clustering.assignments,
        "centroids": model.clustering.centroids,
        "replicate_wcss": model.clustering.replicate_wcss,
        "cluster_vectors": model.cluster_vectors,
        "medians": model.medians,
    }
    if model.svd is not None:
        meta["energy_fraction"] = model.svd.energy_fraction
        meta["total_energy"] = model.svd.total_energy
        arrays.update({"svd_U": model.svd.U, "svd_sigma": model.svd.sigma, "svd_V": model.svd.V})
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = [MAGIC, struct.pack("<II", VERSION, len(blob)), blob, struct.pack("<I", len(arrays))]
    out.extend(_pack_array(name, arrays[name]) for name in sorted(arrays))
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise InputError("snapshot is truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def loads(buf: bytes) -> ForecastModel:
    rd = _Reader(buf)
    if rd.take(len(MAGIC)) != MAGIC:
        raise InputError("not an FMF model snapshot (bad magic)")
    version, meta_len = rd.unpack("<II")
    if version != VERSION:
        raise InputError(f"snapshot format version {version} is not supported (this build reads version {VERSION})")
    meta = json.loads(rd.take(meta_len).decode("utf-8"))
    (count,) = rd.unpack("<I")
    arrays = {}
    for _ in range(count):
        (name_len,) = rd.unpack("<H")
        name = rd.take(name_len).decode("ascii")
        code = rd.take(1)
        if code not in _DTYPES:
            raise InputError(f"snapshot array {name!r} has unknown dtype code {code!r}")
        (ndim,) = rd.unpack("<B")
        shape = rd.unpack("<" + "Q" * ndim) if ndim else ()
        dtype = _DTYPES[code]
        size = int(np.prod(shape)) * dtype.itemsize
        arrays[name] = np.frombuffer(rd.take(size), dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    if rd.pos != len(buf):
        raise InputError("trailing bytes after snapshot")

    clustering = HourClustering(
        arrays["assignments"], arrays["centroids"], float(meta["wcss"]), int(meta["n_iter"]), (), arrays["replicate_wcss"]
    )
    svd = None
    if "svd_U" in arrays:
        svd = TruncatedSVD(arrays["svd_U"], arrays["svd_sigma"], arrays["svd_V"], meta["energy_fraction"], meta["total_energy"])
    calendar = CalendarContext(frozenset(_dt.date.fromisoformat(d) for d in meta["holidays"]), meta["week_start"])
    return ForecastModel(
        clustering=clustering,
        cluster_vectors=arrays["cluster_vectors"],
        medians=arrays["medians"],
        weights=DistanceWeights(tuple(meta["weights"]["w"]), meta["weights"]["p"]),
        t=meta["t"],
        params=TransformParams.from_dict(meta["params"]),
        calendar=calendar,
        consumer_ids=tuple(meta["consumer_ids"]),
        svd=svd,
        train_start=None if meta["train_start"] is None else np.datetime64(meta["train_start"], "h"),
        m1=meta["m1"],
        step_hours=meta["step_hours"],
    )


def save_model(model: ForecastModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps(model))


def load_model(path) -> ForecastModel:
    try:
        with open(path, "rb") as fh:
            return loads(fh.read())
    except FileNotFoundError:
        raise InputError(f"{path}: no such snapshot") from None
