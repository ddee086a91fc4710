"""Decode head outputs into an ellipse and score center predictions.

Decoding mirrors target generation: the heatmap argmax picks the center
cell, the offset channels refine it to sub-pixel, the size and rotation
channels complete the ellipse. Metrics follow the usual eye-tracking
reporting: P_n is the percentage of predictions within n pixels of the
true center, PE the mean center distance.

detect_classical is a network-free baseline: it thresholds an accumulated
representation (event cameras light up pupil boundaries) and fits an
ellipse straight to the active pixels, which is enough to close the loop
in end-to-end pipeline tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .accumulate import Representation
from .ellipse import EllipseParams, FitError, decode_rotation, fit_ellipse
from .losses import HeadPrediction, HeadTargets


class DecodeError(ValueError):
    """Raised when head outputs cannot be decoded into an ellipse."""


class DetectionFailed(RuntimeError):
    """No pupil found in a representation; callers may skip the frame."""


@dataclass(frozen=True)
class EvalReport:
    p10: float
    p5: float
    p1: float
    pe: float
    n_samples: int

    def to_text(self) -> str:
        return (
            f"P10 {self.p10:.2f}%  P5 {self.p5:.2f}%  P1 {self.p1:.2f}%  "
            f"PE {self.pe:.4f} px  ({self.n_samples} samples)"
        )

    def to_kv(self) -> str:
        return (
            f"p10={self.p10:.6f}\np5={self.p5:.6f}\np1={self.p1:.6f}\n"
            f"pe={self.pe:.6f}\nn={self.n_samples}\n"
        )


def parse_report(text: str) -> EvalReport:
    kv = dict(line.split("=", 1) for line in text.splitlines() if "=" in line)
    return EvalReport(
        float(kv["p10"]), float(kv["p5"]), float(kv["p1"]),
        float(kv["pe"]), int(kv["n"]),
    )


def decode_prediction(pred: HeadPrediction) -> EllipseParams:
    """Read the ellipse at the heatmap peak.

    Ties break to the smallest row, then column. Size channels are
    reordered so a >= b, rotating theta by 90 degrees when swapped.
    """
    hm = pred.heatmap
    if hm.size == 0:
        raise DecodeError("empty heatmap")
    flat = int(np.argmax(hm))
    row, col = divmod(flat, hm.shape[1])
    at_peak = [
        float(hm[row, col]),
        float(pred.offset[0, row, col]), float(pred.offset[1, row, col]),
        float(pred.size[0, row, col]), float(pred.size[1, row, col]),
        float(pred.rotation[0, row, col]), float(pred.rotation[1, row, col]),
    ]
    if not all(math.isfinite(v) for v in at_peak):
        raise DecodeError(f"non-finite head values at peak cell ({row}, {col})")
    x = col + at_peak[1]
    y = row + at_peak[2]
    a, b = at_peak[3], at_peak[4]
    theta = decode_rotation((at_peak[5], at_peak[6]))
    if a < b:
        a, b = b, a
        theta = (theta + 90.0) % 180.0
    return EllipseParams(x, y, a, b, theta)


def targets_to_prediction(target: HeadTargets, eps: float = 1e-9) -> HeadPrediction:
    """Expand targets into ideal prediction grids (test harness).

    The heatmap becomes the focal-optimal indicator (1 - eps at the peak
    cell, eps elsewhere); the regression channels are constant at their
    target values.
    """
    h, w = target.heatmap.shape
    heatmap = np.full((h, w), eps)
    heatmap[target.center_cell] = 1.0 - eps
    offset = np.empty((2, h, w))
    size = np.empty((2, h, w))
    rotation = np.empty((2, h, w))
    offset[0], offset[1] = target.offset[0], target.offset[1]
    size[0], size[1] = target.size[0], target.size[1]
    rotation[0], rotation[1] = target.rotation.s, target.rotation.c
    return HeadPrediction(heatmap=heatmap, offset=offset, size=size, rotation=rotation)


def _paired_distances(pred_centers, gt_centers) -> np.ndarray:
    p = np.asarray(pred_centers, float).reshape(-1, 2)
    g = np.asarray(gt_centers, float).reshape(-1, 2)
    if len(p) != len(g):
        raise ValueError(f"paired lists differ in length: {len(p)} vs {len(g)}")
    if len(p) == 0:
        raise ValueError("cannot score empty prediction lists")
    return np.hypot(p[:, 0] - g[:, 0], p[:, 1] - g[:, 1])


def pn_metric(pred_centers, gt_centers, n: float) -> float:
    """Percentage of predictions whose center lies within n pixels (inclusive)."""
    d = _paired_distances(pred_centers, gt_centers)
    return 100.0 * float(np.count_nonzero(d <= n)) / len(d)


def pixel_error(pred_centers, gt_centers) -> float:
    """Mean Euclidean center distance in pixels."""
    return float(_paired_distances(pred_centers, gt_centers).mean())


def evaluate_centers(pred_centers, gt_centers) -> EvalReport:
    d = _paired_distances(pred_centers, gt_centers)
    return EvalReport(
        p10=100.0 * float(np.count_nonzero(d <= 10.0)) / len(d),
        p5=100.0 * float(np.count_nonzero(d <= 5.0)) / len(d),
        p1=100.0 * float(np.count_nonzero(d <= 1.0)) / len(d),
        pe=float(d.mean()),
        n_samples=len(d),
    )


def detect_classical(
    rep: Representation, threshold_quantile: float = 0.8, min_points: int = 10
) -> EllipseParams:
    """Threshold active pixels and fit an ellipse to their coordinates.

    Pixels whose combined |v_pos| + |v_neg| exceeds the given quantile of
    the nonzero values are kept. Raises DetectionFailed when too few pixels
    survive (e.g. during a blink) or the fit degenerates.
    """
    if not 0.0 <= threshold_quantile < 1.0:
        raise ValueError(f"quantile must lie in [0, 1), got {threshold_quantile}")
    combined = np.abs(rep.v_pos) + np.abs(rep.v_neg)
    nonzero = combined[combined > 0.0]
    if nonzero.size == 0:
        raise DetectionFailed("representation has no active pixels")
    threshold = float(np.quantile(nonzero, threshold_quantile))
    ys, xs = np.nonzero(combined > threshold)
    needed = max(min_points, 5)
    if len(xs) < needed:
        raise DetectionFailed(f"only {len(xs)} active pixels, need {needed}")
    try:
        return fit_ellipse(np.column_stack([xs, ys]).astype(float))
    except FitError as exc:
        raise DetectionFailed(f"ellipse fit failed: {exc}") from exc
