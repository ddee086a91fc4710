"""Loss suite for ellipse detection heads, plus training-target generation.

The total objective is a weighted sum of five terms: a penalty-reduced
focal loss on the center heatmap, smooth-L1 losses on the sub-pixel offset
and the axis sizes, a Gaussian-Wasserstein loss comparing predicted and
ground-truth ellipses as 2D Gaussians, and a trigonometric rotation loss.

The rotation term is the interesting one: a plain L1 on angles tears at
the 0/180 seam (179 deg vs 1 deg looks like a 178 deg miss even though the
ellipses are nearly identical), while the squared distance between
(sin 2theta, cos 2theta) encodings stays continuous there.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .ellipse import (
    EllipseParams,
    RotationEncoding,
    _rot_matrix,
    decode_rotation,
    ellipse_to_gaussian,
    encode_rotation,
)

log = logging.getLogger(__name__)

_EPS = 1e-12


@dataclass
class HeadTargets:
    """Ground-truth side of the four detection heads for one sample."""

    heatmap: np.ndarray  # (H, W), peak exactly 1 at center_cell
    center_cell: tuple[int, int]  # (row, col)
    offset: np.ndarray  # (dx, dy) in [0, 1)^2
    size: np.ndarray  # (a, b) pixels
    rotation: RotationEncoding


@dataclass
class HeadPrediction:
    """Raw prediction grids of the four heads; all share (H, W)."""

    heatmap: np.ndarray  # (H, W)
    offset: np.ndarray  # (2, H, W): dx, dy channels
    size: np.ndarray  # (2, H, W): a, b channels
    rotation: np.ndarray  # (2, H, W): sin(2theta), cos(2theta) channels

    def __post_init__(self) -> None:
        hw = self.heatmap.shape
        for name in ("offset", "size", "rotation"):
            grid = getattr(self, name)
            if grid.shape != (2,) + hw:
                raise ValueError(
                    f"{name} grid shape {grid.shape} does not match heatmap {hw}"
                )


@dataclass(frozen=True)
class LossWeights:
    heatmap: float = 1.0
    offset: float = 1.0
    size: float = 1.0
    gwd: float = 1.0
    trig: float = 1.0

    def __post_init__(self) -> None:
        for name in ("heatmap", "offset", "size", "gwd", "trig"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be non-negative")


def _as_encoding(value) -> np.ndarray:
    """Accept degrees, a RotationEncoding, or a raw (s, c) pair; normalize."""
    if isinstance(value, RotationEncoding):
        vec = value.as_array()
    elif np.isscalar(value):
        vec = encode_rotation(float(value)).as_array()
    else:
        vec = np.asarray(value, float)
    norm = float(np.hypot(vec[0], vec[1]))
    if norm == 0.0 or not math.isfinite(norm):
        raise ValueError(f"degenerate rotation prediction {vec}")
    return vec / norm


def trig_loss(theta_p, theta_g) -> float:
    """Squared L2 distance between doubled-angle encodings, in [0, 4].

    theta_p may be degrees or a raw (s, c) prediction (normalised first);
    theta_g likewise. Continuous across the 0/180 seam.
    """
    diff = _as_encoding(theta_p) - _as_encoding(theta_g)
    return float(diff @ diff)


def trig_loss_grad(theta_p: float, theta_g: float) -> float:
    """d(trig_loss)/d(theta_p) in 1/degree, for angle inputs."""
    return (math.pi / 45.0) * math.sin(math.radians(2.0 * (theta_p - theta_g)))


def angle_loss(theta_p: float, theta_g: float) -> float:
    """Plain L1 angle difference in radians; discontinuous at the seam."""
    return math.radians(abs(theta_p - theta_g))


def smooth_l1(pred, target) -> float:
    """Elementwise Huber with transition at 1, averaged over elements."""
    p = np.asarray(pred, float).ravel()
    t = np.asarray(target, float).ravel()
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    d = np.abs(p - t)
    return float(np.where(d < 1.0, 0.5 * d * d, d - 0.5).mean())


def focal_heatmap_loss(
    pred: np.ndarray, target: np.ndarray, alpha: float = 2.0, beta: float = 4.0
) -> float:
    """Penalty-reduced focal loss for peak heatmaps, normalised by peak count.

    Cells with target exactly 1 are positives; elsewhere the penalty is
    damped by (1 - target)^beta so cells near a peak are forgiven.
    Predictions at exactly 0 or 1 are clamped (logged, not fatal).
    """
    p = np.asarray(pred, float)
    t = np.asarray(target, float)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        log.warning("heatmap prediction outside (0, 1); clamping at %.0e", _EPS)
        p = np.clip(p, _EPS, 1.0 - _EPS)
    pos = t == 1.0
    pos_term = np.where(pos, (1.0 - p) ** alpha * np.log(p), 0.0).sum()
    neg_term = np.where(
        pos, 0.0, (1.0 - t) ** beta * p ** alpha * np.log(1.0 - p)
    ).sum()
    n_peaks = max(int(pos.sum()), 1)
    return float(-(pos_term + neg_term) / n_peaks)


def gwd_distance_sq(e_p: EllipseParams, e_g: EllipseParams) -> float:
    """Squared 2-Wasserstein distance between the ellipse Gaussians.

    Closed form for 2x2 SPD covariances:
      W^2 = |mu1 - mu2|^2 + Tr S1 + Tr S2
            - 2 sqrt(Tr(S1 S2) + 2 sqrt(det S1 det S2))
    """
    g1 = ellipse_to_gaussian(e_p)
    g2 = ellipse_to_gaussian(e_g)
    d = g1.mu - g2.mu
    cross = float(np.trace(g1.sigma @ g2.sigma))
    dets = math.sqrt(max(float(np.linalg.det(g1.sigma) * np.linalg.det(g2.sigma)), 0.0))
    inner = max(cross + 2.0 * dets, 0.0)
    w2 = float(d @ d) + float(np.trace(g1.sigma)) + float(np.trace(g2.sigma))
    w2 -= 2.0 * math.sqrt(inner)
    return max(w2, 0.0)


def gwd_loss(e_p: EllipseParams, e_g: EllipseParams) -> float:
    """Normalised Gaussian-Wasserstein loss 1 - 1/(1 + sqrt(W^2)) in [0, 1)."""
    return 1.0 - 1.0 / (1.0 + math.sqrt(gwd_distance_sq(e_p, e_g)))


def gwd_loss_grad(e_p: EllipseParams, e_g: EllipseParams) -> np.ndarray:
    """Analytic gradient of gwd_loss w.r.t. (x, y, a, b, theta) of e_p.

    Undefined at W^2 = 0 (identical ellipses). theta is in degrees.
    """
    g1 = ellipse_to_gaussian(e_p)
    g2 = ellipse_to_gaussian(e_g)
    s1, s2 = g1.sigma, g2.sigma
    det1 = float(np.linalg.det(s1))
    det2 = float(np.linalg.det(s2))
    cross = float(np.trace(s1 @ s2))
    dets = math.sqrt(max(det1 * det2, 0.0))
    inner = cross + 2.0 * dets
    w2 = gwd_distance_sq(e_p, e_g)
    if w2 <= 0.0 or inner <= 0.0:
        raise ValueError("gwd gradient is undefined for identical ellipses")

    # dW2/dSigma_p = I - (Sigma_g + sqrt(det1*det2) inv(Sigma_p)) / sqrt(inner)
    grad_sigma = np.eye(2) - (s2 + dets * np.linalg.inv(s1)) / math.sqrt(inner)

    rot = _rot_matrix(e_p.theta)
    d_a = rot @ np.diag([e_p.a / 2.0, 0.0]) @ rot.T
    d_b = rot @ np.diag([0.0, e_p.b / 2.0]) @ rot.T
    r = math.radians(e_p.theta)
    rot_d = np.array([[-math.sin(r), -math.cos(r)], [math.cos(r), -math.sin(r)]])
    diag = np.diag([(e_p.a / 2.0) ** 2, (e_p.b / 2.0) ** 2])
    d_theta = (rot_d @ diag @ rot.T + rot @ diag @ rot_d.T) * (math.pi / 180.0)

    dw2 = np.array([
        2.0 * (e_p.x - e_g.x),
        2.0 * (e_p.y - e_g.y),
        float(np.sum(grad_sigma * d_a)),
        float(np.sum(grad_sigma * d_b)),
        float(np.sum(grad_sigma * d_theta)),
    ])
    w = math.sqrt(w2)
    return dw2 / (2.0 * w * (1.0 + w) ** 2)


def make_targets(label: EllipseParams, grid: tuple[int, int]) -> HeadTargets:
    """Render one label into the four head targets on an (H, W) grid.

    The heatmap is a Gaussian splat centred on the integer cell containing
    the label center (peak exactly 1 there), with sigma = max(1, min(a,b)/6)
    so smaller pupils get sharper peaks; the fractional center goes into the
    offset target.
    """
    h, w = grid
    e = label.canonical()
    if not (0.0 <= e.x < w and 0.0 <= e.y < h):
        raise ValueError(f"label center ({e.x}, {e.y}) outside {h}x{w} grid")
    col = int(math.floor(e.x))
    row = int(math.floor(e.y))
    sigma = max(1.0, min(e.a, e.b) / 6.0)
    cols = np.arange(w, dtype=float)[None, :]
    rows = np.arange(h, dtype=float)[:, None]
    heatmap = np.exp(-((cols - col) ** 2 + (rows - row) ** 2) / (2.0 * sigma * sigma))
    return HeadTargets(
        heatmap=heatmap,
        center_cell=(row, col),
        offset=np.array([e.x - col, e.y - row]),
        size=np.array([e.a, e.b]),
        rotation=encode_rotation(e.theta),
    )


def _pred_ellipse_at(pred: HeadPrediction, row: int, col: int) -> EllipseParams:
    """Assemble the predicted ellipse read at one cell (used by the GWD term)."""
    x = col + float(pred.offset[0, row, col])
    y = row + float(pred.offset[1, row, col])
    a = max(float(pred.size[0, row, col]), 1e-6)
    b = max(float(pred.size[1, row, col]), 1e-6)
    theta = decode_rotation(pred.rotation[:, row, col])
    if a < b:
        a, b = b, a
        theta = (theta + 90.0) % 180.0
    return EllipseParams(x, y, a, b, theta)


def total_loss(
    pred: HeadPrediction,
    target: HeadTargets,
    weights: LossWeights = LossWeights(),
) -> tuple[float, dict[str, float]]:
    """Weighted sum of the five loss terms, with a per-term breakdown.

    Offset, size, rotation, and GWD terms are evaluated at the ground-truth
    peak cell.
    """
    row, col = target.center_cell
    terms = {
        "heatmap": focal_heatmap_loss(pred.heatmap, target.heatmap),
        "offset": smooth_l1(pred.offset[:, row, col], target.offset),
        "size": smooth_l1(pred.size[:, row, col], target.size),
        "gwd": gwd_loss(_pred_ellipse_at(pred, row, col), _target_ellipse(target)),
        "trig": trig_loss(pred.rotation[:, row, col], decode_rotation(target.rotation)),
    }
    total = (
        weights.heatmap * terms["heatmap"]
        + weights.offset * terms["offset"]
        + weights.size * terms["size"]
        + weights.gwd * terms["gwd"]
        + weights.trig * terms["trig"]
    )
    return float(total), terms


def _target_ellipse(target: HeadTargets) -> EllipseParams:
    row, col = target.center_cell
    return EllipseParams(
        col + float(target.offset[0]),
        row + float(target.offset[1]),
        float(target.size[0]),
        float(target.size[1]),
        decode_rotation(target.rotation),
    )
