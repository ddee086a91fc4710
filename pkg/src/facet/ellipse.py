"""Pupil ellipse model and geometry.

An ellipse is (x, y, a, b, theta): center in pixels, full major/minor axis
lengths (canonically a >= b), and the major-axis angle in degrees within
[0, 180). Because theta and theta + 180 describe the same ellipse, angles
are carried on the doubled circle as (sin 2theta, cos 2theta) wherever a
prediction target or loss needs a continuous representation.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

LABEL_HEADER = "t_end,x,y,a,b,theta_deg"


class FitError(ValueError):
    """Raised when a point set does not admit a least-squares ellipse."""


@dataclass
class EllipseParams:
    x: float
    y: float
    a: float
    b: float
    theta: float  # degrees

    def __post_init__(self) -> None:
        if not (self.a > 0 and self.b > 0):
            raise ValueError(f"axis lengths must be positive, got a={self.a}, b={self.b}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.a, self.b, self.theta)):
            raise ValueError("ellipse parameters must be finite")

    def canonical(self) -> "EllipseParams":
        """Reorder so a >= b (rotating by 90) and wrap theta into [0, 180)."""
        a, b, theta = self.a, self.b, self.theta
        if a < b:
            a, b = b, a
            theta += 90.0
        return EllipseParams(self.x, self.y, a, b, theta % 180.0)

    @property
    def center(self) -> np.ndarray:
        return np.array([self.x, self.y], float)


@dataclass(frozen=True)
class RotationEncoding:
    """Angle on the doubled circle: (sin 2theta, cos 2theta)."""

    s: float
    c: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s, self.c], float)


@dataclass
class GaussianEllipse:
    mu: np.ndarray  # (2,)
    sigma: np.ndarray  # (2, 2) symmetric positive-definite


@dataclass(frozen=True)
class SimilarityTransform:
    """Augmentation transform: hflip, then rotation and scaling about the
    frame center, then translation."""

    rotation: float = 0.0  # degrees
    scale: float = 1.0
    dx: float = 0.0
    dy: float = 0.0
    hflip: bool = False
    frame_width: int = 64
    frame_height: int | None = None

    def __post_init__(self) -> None:
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")


def encode_rotation(theta: float) -> RotationEncoding:
    if not 0.0 <= theta < 180.0:
        raise ValueError(f"theta must lie in [0, 180), got {theta}")
    rad = math.radians(2.0 * theta)
    return RotationEncoding(math.sin(rad), math.cos(rad))


def decode_rotation(raw) -> float:
    """Recover theta in [0, 180) degrees from a raw (s, c) prediction.

    The raw vector is normalised to the unit circle first; the zero vector
    carries no angle and is rejected.
    """
    if isinstance(raw, RotationEncoding):
        s, c = raw.s, raw.c
    else:
        s, c = float(raw[0]), float(raw[1])
    norm = math.hypot(s, c)
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError(f"degenerate rotation prediction ({s}, {c})")
    phi = math.atan2(s / norm, c / norm) % (2.0 * math.pi)
    theta = math.degrees(phi) / 2.0
    if theta >= 180.0:
        theta -= 180.0
    return theta


def _rot_matrix(theta_deg: float) -> np.ndarray:
    r = math.radians(theta_deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s], [s, c]])


def ellipse_to_gaussian(e: EllipseParams) -> GaussianEllipse:
    """Covariance R(theta) diag((a/2)^2, (b/2)^2) R(theta)^T; mean = center."""
    rot = _rot_matrix(e.theta)
    diag = np.diag([(e.a / 2.0) ** 2, (e.b / 2.0) ** 2])
    return GaussianEllipse(e.center, rot @ diag @ rot.T)


def transform_ellipse(e: EllipseParams, t: SimilarityTransform) -> EllipseParams:
    x, y, a, b, theta = e.x, e.y, e.a, e.b, e.theta
    w = t.frame_width
    h = t.frame_height if t.frame_height is not None else w
    cx, cy = w / 2.0, h / 2.0
    if t.hflip:
        x = (w - 1) - x
        theta = (180.0 - theta) % 180.0
    if t.rotation != 0.0:
        phi = math.radians(t.rotation)
        ux, uy = x - cx, y - cy
        x = cx + ux * math.cos(phi) - uy * math.sin(phi)
        y = cy + ux * math.sin(phi) + uy * math.cos(phi)
        theta = (theta + t.rotation) % 180.0
    if t.scale != 1.0:
        x = cx + t.scale * (x - cx)
        y = cy + t.scale * (y - cy)
        a *= t.scale
        b *= t.scale
    x += t.dx
    y += t.dy
    return EllipseParams(x, y, a, b, theta).canonical()


def sample_boundary(
    e: EllipseParams, n: int, jitter: float = 0.0, rng=0
) -> np.ndarray:
    """n boundary points at uniform parameter, optionally jittered (n, 2)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    u = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
    local = np.stack([(e.a / 2.0) * np.cos(u), (e.b / 2.0) * np.sin(u)])
    pts = (_rot_matrix(e.theta) @ local).T + e.center
    if jitter > 0.0:
        gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        pts = pts + gen.normal(0.0, jitter, pts.shape)
    return pts


def fit_ellipse(points: np.ndarray) -> EllipseParams:
    """Direct least-squares conic fit constrained to ellipses.

    Uses the numerically stable split of the design matrix into quadratic
    and linear parts; the quartic constraint guarantees an elliptic conic
    whenever one exists. Exact to ~1e-12 on noiseless boundary samples.
    """
    pts = np.asarray(points, float)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise FitError(f"expected (n, 2) points, got shape {pts.shape}")
    if len(pts) < 5:
        raise FitError(f"need at least 5 points, got {len(pts)}")

    mean = pts.mean(axis=0)
    xc = pts[:, 0] - mean[0]
    yc = pts[:, 1] - mean[1]

    d1 = np.stack([xc * xc, xc * yc, yc * yc], axis=1)
    d2 = np.stack([xc, yc, np.ones_like(xc)], axis=1)
    s1 = d1.T @ d1
    s2 = d1.T @ d2
    s3 = d2.T @ d2
    try:
        t = -np.linalg.solve(s3, s2.T)
    except np.linalg.LinAlgError:
        raise FitError("degenerate point configuration (collinear or repeated)") from None
    m = s1 + s2 @ t
    # apply inv([[0,0,2],[0,-1,0],[2,0,0]]) row-wise
    m = np.stack([m[2] / 2.0, -m[1], m[0] / 2.0])
    try:
        eigvals, eigvecs = np.linalg.eig(m)
    except np.linalg.LinAlgError:
        raise FitError("eigen decomposition failed") from None

    best = None
    for i in range(3):
        v = np.real(eigvecs[:, i])
        cond = 4.0 * v[0] * v[2] - v[1] ** 2
        if cond > 0:
            best = v
            break
    if best is None:
        raise FitError("no elliptic solution for these points")
    coeffs = np.concatenate([best, t @ best])
    return _conic_to_params(coeffs, mean)


def _conic_to_params(coeffs: np.ndarray, mean: np.ndarray) -> EllipseParams:
    a_, b_, c_, d_, e_, f_ = (float(v) for v in coeffs)
    if a_ + c_ < 0:  # normalize sign so the quadratic form is positive
        a_, b_, c_, d_, e_, f_ = -a_, -b_, -c_, -d_, -e_, -f_
    den = b_ * b_ - 4.0 * a_ * c_
    if den >= 0:
        raise FitError("fitted conic is not an ellipse")
    x0 = (2.0 * c_ * d_ - b_ * e_) / den
    y0 = (2.0 * a_ * e_ - b_ * d_) / den
    k = (a_ * x0 * x0 + b_ * x0 * y0 + c_ * y0 * y0 + d_ * x0 + e_ * y0 + f_)
    q = np.array([[a_, b_ / 2.0], [b_ / 2.0, c_]])
    lam, vec = np.linalg.eigh(q)
    if lam[0] <= 0 or k >= 0:
        raise FitError("fitted conic is degenerate")
    semi = np.sqrt(-k / lam)  # ascending lam -> descending semi-axes
    major, minor = float(semi[0]), float(semi[1])
    if abs(major - minor) < 1e-9:
        theta = 0.0  # circular: orientation undefined
    else:
        theta = math.degrees(math.atan2(vec[1, 0], vec[0, 0])) % 180.0
    return EllipseParams(
        x0 + float(mean[0]), y0 + float(mean[1]), 2.0 * major, 2.0 * minor, theta
    )


def write_labels(rows: list[tuple[int, EllipseParams]]) -> bytes:
    out = io.StringIO()
    out.write(LABEL_HEADER + "\n")
    for t_end, e in rows:
        out.write(
            f"{t_end},{e.x:.6f},{e.y:.6f},{e.a:.6f},{e.b:.6f},{e.theta:.6f}\n"
        )
    return out.getvalue().encode()


def read_labels(data: bytes | str) -> list[tuple[int, EllipseParams]]:
    text = data.decode() if isinstance(data, bytes) else data
    lines = text.splitlines()
    if not lines or lines[0].strip() != LABEL_HEADER:
        got = lines[0].strip() if lines else "<empty>"
        raise ValueError(f"bad label header {got!r}, expected {LABEL_HEADER!r}")
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 6:
            raise ValueError(f"expected 6 fields at line {lineno}, got {len(parts)}")
        t_end = int(parts[0])
        x, y, a, b, theta = (float(v) for v in parts[1:])
        rows.append((t_end, EllipseParams(x, y, a, b, theta)))
    return rows


def save_labels(rows: list[tuple[int, EllipseParams]], path) -> None:
    with open(path, "wb") as fh:
        fh.write(write_labels(rows))


def load_labels(path) -> list[tuple[int, EllipseParams]]:
    with open(path, "rb") as fh:
        return read_labels(fh.read())
