"""Pixel-level scoring of background estimates: scaled error, ROC, AUC.

The per-pixel error is the channel-mean squared difference between a
frame and its estimated background. Errors are rescaled to [0, 1] with
the minimum and maximum taken jointly over the whole sequence. True and
false positive rates are both normalized by the total pixel count
N*h*w; the class-normalized rates (dividing by each curve's maximum,
i.e. the usual per-class rates) are reported alongside.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConstantFieldError

__all__ = ["RocCurve", "pixel_error", "scale_errors", "roc"]


@dataclass
class RocCurve:
    """ROC samples on an even threshold grid, plus both AUC readings."""

    thresholds: np.ndarray  # strictly increasing, includes 0
    fpr: np.ndarray  # total-count normalization, non-increasing
    tpr: np.ndarray
    auc_raw: float  # trapezoid over the total-count-normalized curve
    auc_normalized: float  # trapezoid after dividing each rate by its maximum
    degenerate: bool = False  # one of the classes was empty


def pixel_error(frame: np.ndarray, estimate: np.ndarray) -> np.ndarray:
    """Channel-mean squared error per pixel, (h, w)."""
    frame = np.asarray(frame, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if frame.shape != estimate.shape:
        raise ValueError(f"shape mismatch: {frame.shape} vs {estimate.shape}")
    if frame.ndim == 2:
        frame = frame[None]
        estimate = estimate[None]
    return np.mean((frame - estimate) ** 2, axis=0)


def scale_errors(errors: list[np.ndarray]) -> list[np.ndarray]:
    """Affinely map a sequence of error maps onto [0, 1] jointly.

    The extrema are taken over every frame and pixel at once, so frames
    with locally small errors stay small after scaling.
    """
    if not errors:
        raise ValueError("scale_errors needs at least one error map")
    lo = min(float(e.min()) for e in errors)
    hi = max(float(e.max()) for e in errors)
    if hi == lo:
        raise ConstantFieldError(f"error field is constant ({lo}); cannot rescale")
    return [(e - lo) / (hi - lo) for e in errors]


def roc(
    scaled: list[np.ndarray],
    annotations: list[np.ndarray],
    n_thresholds: int = 100,
) -> RocCurve:
    """ROC curve of scaled errors against binary foreground annotations.

    For every threshold on an inclusive even grid over [0, 1], a pixel
    counts as predicted-foreground when its scaled error is >= the
    threshold. Rates are divided by the total pixel count. The AUC is
    the trapezoid over points ordered by descending threshold (the
    alpha = 0 point is prepended if the grid were ever to miss it). A
    missing class flags the curve degenerate with a warning, and the
    class-normalized AUC becomes NaN.
    """
    if n_thresholds < 2:
        raise ValueError(f"need at least 2 thresholds, got {n_thresholds}")
    if len(scaled) != len(annotations):
        raise ValueError("need one annotation map per error map")
    err = np.concatenate([np.asarray(e, dtype=float).ravel() for e in scaled])
    ann = np.concatenate([np.asarray(a).astype(bool).ravel() for a in annotations])
    if err.shape != ann.shape:
        raise ValueError("annotation dimensions do not match the error maps")
    total = err.size

    thresholds = np.linspace(0.0, 1.0, n_thresholds)
    if thresholds[0] != 0.0:
        thresholds = np.concatenate([[0.0], thresholds])

    fg = np.sort(err[ann])
    bg = np.sort(err[~ann])
    tp = fg.size - np.searchsorted(fg, thresholds, side="left")
    fp = bg.size - np.searchsorted(bg, thresholds, side="left")
    tpr = tp / total
    fpr = fp / total

    degenerate = fg.size == 0 or bg.size == 0
    if degenerate:
        warnings.warn(
            "ROC is degenerate: annotations contain only one class", stacklevel=2
        )

    # Descending threshold puts the curve in ascending-FPR order.
    auc_raw = _trapezoid(fpr[::-1], tpr[::-1])
    if degenerate:
        auc_normalized = float("nan")
    else:
        auc_normalized = _trapezoid(fpr[::-1] / fpr[0], tpr[::-1] / tpr[0])
    return RocCurve(thresholds, fpr, tpr, auc_raw, auc_normalized, degenerate)


def _trapezoid(x: np.ndarray, y: np.ndarray) -> float:
    dx = np.diff(x)
    return float(np.sum(dx * (y[1:] + y[:-1]) / 2.0))
