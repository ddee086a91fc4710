"""Event accumulation: turn an EventBin into a two-channel representation.

Three methods are provided. The plain event volume weights every event by a
triangular kernel around a reference time, regardless of whether the event
lies before or after it. The causal variant gates the kernel with a step
function so only events at or before the reference time contribute, which
is what a real-time pipeline can actually compute. The fast causal variant
additionally stops accumulating at a pixel once its running value would
pass a limit, either by skipping whole events (default) or clipping the
final contribution.
"""

from __future__ import annotations

import struct
import time
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .events import BinningConfig, EventBin, EventStream, FormatError, make_bins

FCV1_MAGIC = b"FCV1"
_FCV1_HEADER = struct.Struct("<4sHHBB")

METHODS = ("volume", "causal", "fast_causal")


@dataclass
class Representation:
    """Accumulated per-polarity grids, row-major, float64 internally."""

    width: int
    height: int
    v_pos: np.ndarray
    v_neg: np.ndarray
    t_ref: int = 0


@dataclass(frozen=True)
class AccumulationConfig:
    method: str = "fast_causal"
    limit: float = 25.0
    overflow_mode: str = "skip"
    normalize: bool = False

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.overflow_mode not in ("skip", "clip"):
            raise ValueError(f"overflow_mode must be skip or clip, got {self.overflow_mode!r}")
        if self.method == "fast_causal" and not self.limit > 0:
            raise ValueError(f"limit must be positive, got {self.limit}")


@dataclass(frozen=True)
class EptReport:
    """Wall-clock event processing time (binning + accumulation) stats."""

    samples: int
    mean_ms: float
    p50_ms: float
    p95_ms: float

    def to_text(self) -> str:
        return (
            f"samples={self.samples} mean_ms={self.mean_ms:.4f} "
            f"p50_ms={self.p50_ms:.4f} p95_ms={self.p95_ms:.4f}"
        )


def kernel(tau: float) -> float:
    """Triangular kernel gated by a step function: H(tau) * max(1 - |tau|, 0)."""
    if tau < 0.0:
        return 0.0
    return max(1.0 - abs(tau), 0.0)


def _resolve_t_ref(b: EventBin, t_ref: int | None) -> int:
    if t_ref is None:
        return b.t_end
    if not (b.t_start <= t_ref <= b.t_end):
        raise ValueError(
            f"t_ref={t_ref} outside bin window [{b.t_start}, {b.t_end}]"
        )
    return int(t_ref)


def _causal_slice(b: EventBin, tr: int):
    # chronological slice t <= t_ref; whole bin when t_ref is the bin end
    if tr >= b.t_end:
        return b.t, b.x, b.y, b.p
    stop = int(np.searchsorted(b.t, tr, side="right"))
    return b.t[:stop], b.x[:stop], b.y[:stop], b.p[:stop]


def _ramp_weights(t: np.ndarray, tr: int, duration: int) -> np.ndarray:
    # the step-gated triangular kernel over t <= t_ref is a clipped ramp
    # anchored at t_ref - dt: (t - (t_ref - dt)) / dt == 1 - (t_ref - t) / dt;
    # shared verbatim by the causal and limited paths so sums stay bit-identical
    shift = float(tr) - float(duration)
    return np.clip((t.astype(np.float64) - shift) * (1.0 / duration), 0.0, 1.0)


def accumulate_causal(b: EventBin, t_ref: int | None = None) -> Representation:
    """Sum step-gated kernel weights per pixel and polarity.

    Each event at t_i contributes k((t_ref - t_i) / dt); the step gate is
    realised by slicing the (sorted) bin to events at or before t_ref, which
    defaults to the bin end.
    """
    tr = _resolve_t_ref(b, t_ref)
    t, x, y, p = _causal_slice(b, tr)
    w = _ramp_weights(t, tr, b.duration)
    grids = np.zeros((2, b.height, b.width), np.float64)
    np.add.at(grids, (p.astype(np.int64), y, x), w)
    return Representation(b.width, b.height, grids[1], grids[0], tr)


def accumulate_volume(b: EventBin, t_ref: int | None = None) -> Representation:
    """Non-causal event volume: events on both sides of t_ref contribute,
    so every event pays the symmetric |t_ref - t| fold."""
    tr = _resolve_t_ref(b, t_ref)
    w = np.maximum(
        1.0 - np.abs(float(tr) - b.t.astype(np.float64)) * (1.0 / b.duration), 0.0
    )
    grids = np.zeros((2, b.height, b.width), np.float64)
    np.add.at(grids, (b.p.astype(np.int64), b.y, b.x), w)
    return Representation(b.width, b.height, grids[1], grids[0], tr)


def accumulate_fast_causal(
    b: EventBin,
    limit: float = 25.0,
    mode: str = "skip",
    t_ref: int | None = None,
) -> Representation:
    """Causal accumulation with a per-pixel limit.

    In "skip" mode an event's whole contribution is dropped unless the
    running value stays within the limit (events are processed in
    chronological order, so the accepted events at a pixel form a prefix);
    in "clip" mode the final contribution is trimmed to exactly reach the
    limit. With limit >= bin size the output is bit-identical to
    accumulate_causal.
    """
    if not limit > 0:
        raise ValueError(f"limit must be positive, got {limit}")
    if mode == "skip":
        fn = _kernels.grouped_scan_skip
    elif mode == "clip":
        fn = _kernels.grouped_scan_clip
    else:
        raise ValueError(f"mode must be skip or clip, got {mode!r}")
    tr = _resolve_t_ref(b, t_ref)
    t, x, y, p = _causal_slice(b, tr)
    w = _ramp_weights(t, tr, b.duration)
    keys = (p.astype(np.int64) * b.height + y) * b.width + x
    grids = np.zeros((2, b.height, b.width), np.float64)
    fn(keys, w, 2 * b.height * b.width, float(limit), grids.reshape(-1))
    return Representation(b.width, b.height, grids[1], grids[0], tr)


def accumulate_bin(
    b: EventBin, config: AccumulationConfig, t_ref: int | None = None
) -> Representation:
    if config.method == "volume":
        rep = accumulate_volume(b, t_ref)
    elif config.method == "causal":
        rep = accumulate_causal(b, t_ref)
    else:
        rep = accumulate_fast_causal(b, config.limit, config.overflow_mode, t_ref)
    if config.normalize:
        rep = normalize_minmax(rep)
    return rep


def normalize_minmax(rep: Representation) -> Representation:
    """Map each channel to [0, 1]; a constant channel becomes all zeros."""

    def norm(v: np.ndarray) -> np.ndarray:
        lo, hi = float(v.min()), float(v.max())
        if hi == lo:
            return np.zeros_like(v)
        return (v - lo) / (hi - lo)

    return Representation(
        rep.width, rep.height, norm(rep.v_pos), norm(rep.v_neg), rep.t_ref
    )


def measure_ept(
    stream: EventStream,
    binning: BinningConfig,
    config: AccumulationConfig,
    repetitions: int = 3,
) -> EptReport:
    """Time binning + accumulation per emitted representation.

    The binning cost of a pass is amortised uniformly over its bins; each
    sample is one bin's accumulation plus that share, in milliseconds. One
    untimed pass warms the compiled kernels first.
    """
    if len(stream) == 0:
        raise ValueError("cannot measure EPT on an empty stream")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")

    warm = make_bins(stream, binning)
    if not warm:
        raise ValueError("binning configuration yields no bins for this stream")
    accumulate_bin(warm[0], config)

    samples: list[float] = []
    for _ in range(repetitions):
        t0 = time.perf_counter()
        bins = make_bins(stream, binning)
        bin_share = (time.perf_counter() - t0) / len(bins)
        for b in bins:
            t1 = time.perf_counter()
            accumulate_bin(b, config)
            samples.append(time.perf_counter() - t1 + bin_share)

    return _ept_report(samples)


def compare_ept(
    stream: EventStream,
    binning: BinningConfig,
    configs: dict[str, AccumulationConfig],
    repetitions: int = 3,
) -> dict[str, EptReport]:
    """Measure several accumulation configs with per-bin interleaving.

    All configs are timed back to back on each bin, so bin-to-bin variation
    and slow clock drift hit every method equally; use this when comparing
    methods rather than separate measure_ept runs.
    """
    if len(stream) == 0:
        raise ValueError("cannot measure EPT on an empty stream")
    if repetitions < 1:
        raise ValueError(f"repetitions must be >= 1, got {repetitions}")
    warm = make_bins(stream, binning)
    if not warm:
        raise ValueError("binning configuration yields no bins for this stream")
    for config in configs.values():
        accumulate_bin(warm[0], config)

    samples: dict[str, list[float]] = {name: [] for name in configs}
    for _ in range(repetitions):
        t0 = time.perf_counter()
        bins = make_bins(stream, binning)
        bin_share = (time.perf_counter() - t0) / len(bins)
        for b in bins:
            for name, config in configs.items():
                t1 = time.perf_counter()
                accumulate_bin(b, config)
                samples[name].append(time.perf_counter() - t1 + bin_share)
    return {name: _ept_report(vals) for name, vals in samples.items()}


def _ept_report(samples: list[float]) -> EptReport:
    arr = np.asarray(samples) * 1e3
    return EptReport(
        samples=len(arr),
        mean_ms=float(arr.mean()),
        p50_ms=float(np.median(arr)),
        p95_ms=float(np.percentile(arr, 95)),
    )


def write_fcv1(rep: Representation) -> bytes:
    """Serialize a representation: FCV1 header + channel-major float32 grids."""
    header = _FCV1_HEADER.pack(FCV1_MAGIC, rep.width, rep.height, 2, 0)
    payload = np.stack([rep.v_pos, rep.v_neg]).astype("<f4").tobytes()
    return header + payload


def read_fcv1(data: bytes) -> Representation:
    if len(data) < _FCV1_HEADER.size:
        raise FormatError(f"truncated FCV1 header: {len(data)} bytes")
    magic, width, height, channels, dtype_tag = _FCV1_HEADER.unpack_from(data, 0)
    if magic != FCV1_MAGIC:
        raise FormatError(f"bad magic {magic!r} at byte 0, expected {FCV1_MAGIC!r}")
    if channels != 2 or dtype_tag != 0:
        raise FormatError(
            f"unsupported FCV1 layout: channels={channels} dtype_tag={dtype_tag}"
        )
    expected = 2 * width * height * 4
    payload = data[_FCV1_HEADER.size:]
    if len(payload) != expected:
        raise FormatError(
            f"payload is {len(payload)} bytes at byte {_FCV1_HEADER.size}, expected {expected}"
        )
    grids = np.frombuffer(payload, "<f4").reshape(2, height, width).astype(np.float64)
    return Representation(width, height, grids[0], grids[1], 0)


def save_fcv1(rep: Representation, path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_fcv1(rep))


def load_fcv1(path) -> Representation:
    with open(path, "rb") as fh:
        return read_fcv1(fh.read())
