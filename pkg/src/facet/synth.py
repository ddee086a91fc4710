"""Deterministic synthetic DVS eye-event generator.

A parametric pupil (sinusoidal center path, fixed axes, optional rotation
drift) emits events along its boundary: pixels the pupil edge is moving
into get darker (polarity 0), pixels it is leaving get brighter
(polarity 1). Uniform noise events and blink intervals (no pupil events)
can be mixed in. Ground-truth ellipse labels are recorded every
`label_every` events so they line up with fixed-count binning.

Everything is drawn from one seeded generator, so equal scenarios produce
bit-identical streams.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .ellipse import EllipseParams
from .events import EventStream


class ScenarioError(ValueError):
    """Raised when a scenario is inconsistent or exits the sensor."""


@dataclass(frozen=True)
class Scenario:
    width: int = 64
    height: int = 64
    duration_us: int = 1_000_000
    center_x: float = 32.0
    center_y: float = 32.0
    amp_x: float = 6.0
    amp_y: float = 4.0
    period_us: int = 400_000
    axis_a: float = 16.0
    axis_b: float = 12.0
    theta_deg: float = 20.0
    theta_rate_dps: float = 0.0
    events_per_ms: float = 500.0
    noise_rate: float = 0.0
    blink: tuple[tuple[int, int], ...] = ()
    label_every: int = 5000
    seed: int = 0
    jitter_px: float = 0.0

    def __post_init__(self) -> None:
        if self.duration_us < 1000:
            raise ScenarioError("duration must be at least one millisecond")
        if self.period_us <= 0:
            raise ScenarioError("period_us must be positive")
        if self.events_per_ms < 0 or self.noise_rate < 0:
            raise ScenarioError("event rates must be non-negative")
        if not (self.axis_a >= self.axis_b > 0):
            raise ScenarioError(
                f"axes must satisfy a >= b > 0, got ({self.axis_a}, {self.axis_b})"
            )
        if self.label_every < 1:
            raise ScenarioError("label_every must be >= 1")
        margin = self.axis_a / 2.0 + 1.0 + 3.0 * self.jitter_px
        for lo, hi, c, amp in (
            (0.0, self.width - 1.0, self.center_x, abs(self.amp_x)),
            (0.0, self.height - 1.0, self.center_y, abs(self.amp_y)),
        ):
            if c - amp - margin < lo or c + amp + margin > hi:
                raise ScenarioError(
                    "trajectory (center +/- amplitude + semi-axis) exits the sensor"
                )
        for start, end in self.blink:
            if not (0 <= start < end <= self.duration_us):
                raise ScenarioError(f"bad blink interval ({start}, {end})")


def _trajectory(sc: Scenario, t_us: np.ndarray):
    """Center, angle, and center velocity (px/us) at the given times."""
    omega = 2.0 * math.pi / sc.period_us
    phase = omega * t_us
    cx = sc.center_x + sc.amp_x * np.sin(phase)
    cy = sc.center_y + sc.amp_y * np.sin(phase + math.pi / 2.0)
    theta = (sc.theta_deg + sc.theta_rate_dps * t_us / 1e6) % 180.0
    vx = sc.amp_x * omega * np.cos(phase)
    vy = sc.amp_y * omega * np.cos(phase + math.pi / 2.0)
    return cx, cy, theta, vx, vy


def ellipse_at(sc: Scenario, t_us: float) -> EllipseParams:
    """Ground-truth pupil ellipse at one instant."""
    cx, cy, theta, _, _ = _trajectory(sc, np.asarray(float(t_us)))
    return EllipseParams(float(cx), float(cy), sc.axis_a, sc.axis_b, float(theta))


def _in_blink(sc: Scenario, t_us: np.ndarray) -> np.ndarray:
    hidden = np.zeros(t_us.shape, bool)
    for start, end in sc.blink:
        hidden |= (t_us >= start) & (t_us < end)
    return hidden


def generate(sc: Scenario) -> tuple[EventStream, list[tuple[int, EllipseParams]]]:
    """Emit the event stream and its ground-truth labels."""
    rng = np.random.default_rng(sc.seed)
    n_ms = sc.duration_us // 1000
    ts, xs, ys, ps = [], [], [], []
    carry_b = 0.0
    carry_n = 0.0
    for m in range(n_ms):
        t_lo = m * 1000
        carry_b += sc.events_per_ms
        nb = int(carry_b)
        carry_b -= nb
        carry_n += sc.noise_rate
        nn = int(carry_n)
        carry_n -= nn

        t_b = t_lo + np.sort(rng.integers(0, 1000, nb))
        u = rng.uniform(0.0, 2.0 * math.pi, nb)
        jit = rng.normal(0.0, sc.jitter_px, (nb, 2)) if sc.jitter_px > 0 else None
        cx, cy, theta, vx, vy = _trajectory(sc, t_b.astype(float))
        rad = np.radians(theta)
        cth, sth = np.cos(rad), np.sin(rad)
        lx = (sc.axis_a / 2.0) * np.cos(u)
        ly = (sc.axis_b / 2.0) * np.sin(u)
        px = cx + cth * lx - sth * ly
        py = cy + sth * lx + cth * ly
        if jit is not None:
            px = px + jit[:, 0]
            py = py + jit[:, 1]
        # outward normal (unnormalised) rotated into sensor frame
        gx = np.cos(u) / (sc.axis_a / 2.0)
        gy = np.sin(u) / (sc.axis_b / 2.0)
        nx = cth * gx - sth * gy
        ny = sth * gx + cth * gy
        pol_b = np.where(vx * nx + vy * ny > 0.0, 0, 1).astype(np.uint8)

        keep = ~_in_blink(sc, t_b)
        t_b, px, py, pol_b = t_b[keep], px[keep], py[keep], pol_b[keep]
        x_b = np.clip(np.rint(px), 0, sc.width - 1).astype(np.int64)
        y_b = np.clip(np.rint(py), 0, sc.height - 1).astype(np.int64)

        t_n = t_lo + rng.integers(0, 1000, nn)
        x_n = rng.integers(0, sc.width, nn)
        y_n = rng.integers(0, sc.height, nn)
        pol_n = rng.integers(0, 2, nn).astype(np.uint8)

        t_all = np.concatenate([t_b, t_n])
        order = np.argsort(t_all, kind="stable")
        ts.append(t_all[order])
        xs.append(np.concatenate([x_b, x_n])[order])
        ys.append(np.concatenate([y_b, y_n])[order])
        ps.append(np.concatenate([pol_b, pol_n])[order])

    stream = EventStream(
        sc.width, sc.height,
        np.concatenate(ts), np.concatenate(xs), np.concatenate(ys), np.concatenate(ps),
    )
    labels = []
    for idx in range(sc.label_every - 1, len(stream), sc.label_every):
        t_end = int(stream.t[idx])
        labels.append((t_end, ellipse_at(sc, t_end).canonical()))
    return stream, labels


# --- scenario file format: flat key=value text -------------------------------

_INT_KEYS = {"width", "height", "duration_us", "period_us", "label_every", "seed"}
_FLOAT_KEYS = {
    "center_x", "center_y", "amp_x", "amp_y", "axis_a", "axis_b",
    "theta_deg", "theta_rate_dps", "events_per_ms", "noise_rate", "jitter_px",
}


def _parse_value(key: str, value: str):
    if key in _INT_KEYS:
        return int(value)
    if key in _FLOAT_KEYS:
        return float(value)
    if key == "blink":
        value = value.strip()
        if not value:
            return ()
        spans = []
        for span in value.split(";"):
            start, end = span.split("-")
            spans.append((int(start), int(end)))
        return tuple(spans)
    raise ScenarioError(f"unknown scenario key {key!r}")


def parse_scenario(text: str, overrides: dict[str, str] | None = None) -> Scenario:
    """Build a Scenario from key=value lines, applying optional overrides."""
    values: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ScenarioError(f"expected key=value at line {lineno}: {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        values[key] = _parse_value(key, raw)
    for key, raw in (overrides or {}).items():
        values[key] = _parse_value(key, raw)
    return Scenario(**values)


def format_scenario(sc: Scenario) -> str:
    lines = []
    for field in dataclasses.fields(Scenario):
        value = getattr(sc, field.name)
        if field.name == "blink":
            value = ";".join(f"{s}-{e}" for s, e in value)
        lines.append(f"{field.name}={value}")
    return "\n".join(lines) + "\n"
