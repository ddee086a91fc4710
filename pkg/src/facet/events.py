"""Event data model, binary/CSV event I/O, and stream binning.

Events are DVS-style tuples (t, x, y, p): integer microsecond timestamp,
pixel column, pixel row, and polarity (0 = dimmer, 1 = brighter). Streams
keep events in non-decreasing timestamp order; binning segments a stream
into the units that accumulation turns into frame-like representations.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

EVT1_MAGIC = b"EVT1"
_EVT1_HEADER = struct.Struct("<4sHHQ")
# (u64 t, u16 x, u16 y, u8 p) packed, no padding: 13 bytes per record
_EVT1_RECORD_DTYPE = np.dtype([("t", "<u8"), ("x", "<u2"), ("y", "<u2"), ("p", "u1")])

CSV_HEADER = "t,x,y,p"


class FormatError(ValueError):
    """Raised when an event file does not conform to its declared format."""


class Event(NamedTuple):
    t: int
    x: int
    y: int
    p: int


@dataclass
class EventStream:
    """A sensor-sized, time-sorted sequence of events.

    Coordinates are stored as parallel arrays; `t` is int64 microseconds
    relative to the stream start.
    """

    width: int
    height: int
    t: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    x: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    y: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    p: np.ndarray = field(default_factory=lambda: np.empty(0, np.uint8))

    def __post_init__(self) -> None:
        self.t = np.asarray(self.t, np.int64)
        self.x = np.asarray(self.x, np.int64)
        self.y = np.asarray(self.y, np.int64)
        self.p = np.asarray(self.p, np.uint8)
        n = len(self.t)
        if not (len(self.x) == len(self.y) == len(self.p) == n):
            raise ValueError("event component arrays must have equal length")
        if self.width <= 0 or self.height <= 0:
            raise ValueError("sensor dimensions must be positive")
        _validate_events(self.t, self.x, self.y, self.p, self.width, self.height)
        if n > 1 and np.any(np.diff(self.t) < 0):
            order = np.argsort(self.t, kind="stable")
            self.t, self.x, self.y, self.p = (
                self.t[order], self.x[order], self.y[order], self.p[order],
            )

    def __len__(self) -> int:
        return len(self.t)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, EventStream):
            return NotImplemented
        return (
            self.width == other.width
            and self.height == other.height
            and np.array_equal(self.t, other.t)
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.p, other.p)
        )

    def event(self, i: int) -> Event:
        return Event(int(self.t[i]), int(self.x[i]), int(self.y[i]), int(self.p[i]))

    def __iter__(self) -> Iterable[Event]:
        for i in range(len(self)):
            yield self.event(i)


@dataclass(frozen=True)
class EventBin:
    """An ordered event slice plus the time window it accumulates over."""

    width: int
    height: int
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    t_start: int
    t_end: int

    def __post_init__(self) -> None:
        if self.t_end <= self.t_start:
            raise ValueError(
                f"bin window [{self.t_start}, {self.t_end}] has non-positive duration"
            )
        if len(self.t) > 0 and (self.t[0] < self.t_start or self.t[-1] > self.t_end):
            raise ValueError("bin contains events outside its window")
        _validate_events(
            self.t, self.x, self.y, self.p, self.width, self.height,
            offset_kind="event",
        )

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    def __len__(self) -> int:
        return len(self.t)

    def truncated(self, t_prime: int) -> "EventBin":
        """Drop events with t > t_prime, keeping the window unchanged."""
        keep = int(np.searchsorted(self.t, t_prime, side="right"))
        return EventBin(
            self.width, self.height,
            self.t[:keep], self.x[:keep], self.y[:keep], self.p[:keep],
            self.t_start, self.t_end,
        )


def _validate_events(t, x, y, p, width, height, *, offset_kind="record") -> None:
    for name, arr, bound in (("x", x, width), ("y", y, height)):
        bad = (arr < 0) | (arr >= bound)
        if bad.any():
            i = int(np.argmax(bad))
            raise FormatError(
                f"{name}={int(arr[i])} out of bounds [0, {bound}) at {offset_kind} {i}"
            )
    badp = p > 1
    if badp.any():
        i = int(np.argmax(badp))
        raise FormatError(f"polarity {int(p[i])} not in {{0, 1}} at {offset_kind} {i}")
    if (t < 0).any():
        i = int(np.argmax(t < 0))
        raise FormatError(f"negative timestamp at {offset_kind} {i}")


def _as_bytes(source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, str):
        return source.encode()
    if hasattr(source, "read"):
        data = source.read()
        return data.encode() if isinstance(data, str) else data
    raise TypeError(f"unsupported event source {type(source)!r}")


def read_events(source, fmt: str = "binary", *, width: int | None = None,
                height: int | None = None) -> EventStream:
    """Parse an EVT1 or CSV event file into a sorted EventStream.

    CSV files carry no sensor dimensions; pass `width`/`height` or they are
    inferred as max coordinate + 1. Unsorted input is stably sorted by t.
    """
    data = _as_bytes(source)
    if fmt == "binary":
        return _read_evt1(data)
    if fmt == "csv":
        return _read_csv(data, width, height)
    raise ValueError(f"unknown event format {fmt!r}")


def write_events(stream: EventStream, fmt: str = "binary") -> bytes:
    if fmt == "binary":
        return _write_evt1(stream)
    if fmt == "csv":
        return _write_csv(stream)
    raise ValueError(f"unknown event format {fmt!r}")


def load_events(path, fmt: str | None = None, **kwargs) -> EventStream:
    with open(path, "rb") as fh:
        data = fh.read()
    if fmt is None:
        fmt = "binary" if data[:4] == EVT1_MAGIC else "csv"
    return read_events(data, fmt, **kwargs)


def save_events(stream: EventStream, path, fmt: str = "binary") -> None:
    with open(path, "wb") as fh:
        fh.write(write_events(stream, fmt))


def _read_evt1(data: bytes) -> EventStream:
    if len(data) < _EVT1_HEADER.size:
        raise FormatError(f"truncated header: {len(data)} bytes, need {_EVT1_HEADER.size}")
    magic, width, height, count = _EVT1_HEADER.unpack_from(data, 0)
    if magic != EVT1_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {EVT1_MAGIC!r}")
    payload = data[_EVT1_HEADER.size:]
    expected = count * _EVT1_RECORD_DTYPE.itemsize
    if len(payload) != expected:
        raise FormatError(
            f"record payload is {len(payload)} bytes at byte {_EVT1_HEADER.size}, "
            f"expected {expected} for {count} records"
        )
    rec = np.frombuffer(payload, dtype=_EVT1_RECORD_DTYPE)
    return EventStream(
        width, height,
        rec["t"].astype(np.int64), rec["x"].astype(np.int64),
        rec["y"].astype(np.int64), rec["p"].astype(np.uint8),
    )


def _write_evt1(stream: EventStream) -> bytes:
    rec = np.empty(len(stream), dtype=_EVT1_RECORD_DTYPE)
    rec["t"] = stream.t
    rec["x"] = stream.x
    rec["y"] = stream.y
    rec["p"] = stream.p
    header = _EVT1_HEADER.pack(EVT1_MAGIC, stream.width, stream.height, len(stream))
    return header + rec.tobytes()


def _read_csv(data: bytes, width: int | None, height: int | None) -> EventStream:
    text = data.decode()
    lines = text.splitlines()
    if not lines or lines[0].strip() != CSV_HEADER:
        got = lines[0].strip() if lines else "<empty>"
        raise FormatError(f"bad CSV header {got!r} at line 1, expected {CSV_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"expected 4 fields at line {lineno}, got {len(parts)}")
        try:
            rows.append(tuple(int(v) for v in parts))
        except ValueError as exc:
            raise FormatError(f"non-integer field at line {lineno}: {exc}") from None
    if rows:
        arr = np.asarray(rows, np.int64)
        t, x, y, p = arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3]
    else:
        t = x = y = np.empty(0, np.int64)
        p = np.empty(0, np.int64)
    if width is None:
        width = int(x.max()) + 1 if len(x) else 1
    if height is None:
        height = int(y.max()) + 1 if len(y) else 1
    try:
        return EventStream(width, height, t, x, y, p.astype(np.uint8))
    except FormatError as exc:
        # re-key record index to a CSV line offset (+1 header, 1-based)
        raise FormatError(f"{exc} (record index; add 2 for CSV line)") from None


def _write_csv(stream: EventStream) -> bytes:
    out = io.StringIO()
    out.write(CSV_HEADER + "\n")
    for i in range(len(stream)):
        out.write(f"{stream.t[i]},{stream.x[i]},{stream.y[i]},{stream.p[i]}\n")
    return out.getvalue().encode()


@dataclass(frozen=True)
class BinningConfig:
    """Which binning strategy to apply: a fixed event count or time window."""

    mode: str  # "count" | "time"
    value: int  # events per bin, or window length in microseconds

    def __post_init__(self) -> None:
        if self.mode not in ("count", "time"):
            raise ValueError(f"mode must be 'count' or 'time', got {self.mode!r}")
        if self.value < 1:
            raise ValueError(f"value must be >= 1, got {self.value}")


def make_bins(stream: EventStream, config: BinningConfig) -> list[EventBin]:
    if config.mode == "count":
        return bin_fixed_count(stream, config.value)
    return bin_fixed_time(stream, config.value)


def bin_fixed_count(stream: EventStream, count: int = 5000) -> list[EventBin]:
    """Segment a stream into consecutive bins of exactly `count` events.

    The first bin starts at its first event's timestamp; later bins chain
    t_start from the previous bin's t_end so kernel weights span the true
    inter-bin gap. A trailing remainder shorter than `count` is dropped.
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    n_bins = len(stream) // count
    bins: list[EventBin] = []
    prev_end = None
    for k in range(n_bins):
        sl = slice(k * count, (k + 1) * count)
        t = stream.t[sl]
        t_start = int(t[0]) if prev_end is None else prev_end
        t_end = int(t[-1])
        bins.append(EventBin(
            stream.width, stream.height,
            t, stream.x[sl], stream.y[sl], stream.p[sl], t_start, t_end,
        ))
        prev_end = t_end
    return bins


def bin_fixed_time(stream: EventStream, window: int = 10000) -> list[EventBin]:
    """Segment the timeline into windows [k*w, (k+1)*w) of fixed duration.

    Windows with no events still yield (empty) bins, so a consumer can skip
    inference on them. The timeline runs from 0 to the last event.
    """
    if window <= 0:
        raise ValueError(f"window must be positive, got {window}")
    if len(stream) == 0:
        return []
    n_windows = int(stream.t[-1]) // window + 1
    edges = np.arange(n_windows + 1, dtype=np.int64) * window
    starts = np.searchsorted(stream.t, edges[:-1], side="left")
    stops = np.searchsorted(stream.t, edges[1:], side="left")
    bins = []
    for k in range(n_windows):
        sl = slice(int(starts[k]), int(stops[k]))
        bins.append(EventBin(
            stream.width, stream.height,
            stream.t[sl], stream.x[sl], stream.y[sl], stream.p[sl],
            int(edges[k]), int(edges[k + 1]),
        ))
    return bins
