"""Robust trimmed moments of the aligned pixel stacks.

At every scene pixel, the values contributed by frames whose warped
mask is strictly positive form a stack. Sorting each stack and dropping
the lowest and highest floor(alpha * N) entries before averaging keeps
transient foreground values out of the panoramic mean and variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .warping import WarpedFrame

__all__ = ["PanoramicMoments", "trimmed_mean_var", "compute_moments"]


@dataclass
class PanoramicMoments:
    """Per-pixel trimmed mean/variance and the stack sizes behind them.

    Pixels never covered by any frame have count 0 and carry zeros in
    mean and var; count == 0 is the invalid-pixel flag.
    """

    mean: np.ndarray  # (C, H, W)
    var: np.ndarray  # (C, H, W), >= 0
    count: np.ndarray  # (H, W) int
    alpha: float


def _check_alpha(alpha: float) -> None:
    if not 0.0 <= alpha < 0.5:
        raise ValueError(f"alpha must be in [0, 0.5), got {alpha}")


def trimmed_mean_var(values, alpha: float) -> tuple[float, float]:
    """Mean and biased variance after trimming floor(alpha*N) per side.

    The variance divides by the kept count; with alpha < 0.5 at least
    one entry always survives the trimming.
    """
    _check_alpha(alpha)
    values = np.sort(np.asarray(values, dtype=float))
    n = values.size
    if n == 0:
        raise ValueError("trimmed_mean_var needs at least one value")
    k = int(np.floor(alpha * n))
    kept = values[k : n - k]
    mean = kept.mean()
    var = np.mean((kept - mean) ** 2)
    return float(mean), float(var)


def compute_moments(
    warps: list[WarpedFrame], alpha: float = 0.3, weight_by_mask: bool = False
) -> PanoramicMoments:
    """Trimmed moments over the stacks of a warped-frame collection.

    Stack membership requires a strictly positive mask. By default the
    kept entries are averaged unweighted; weight_by_mask switches to
    mask-weighted averaging of the kept entries instead.
    """
    _check_alpha(alpha)
    if not warps:
        raise ValueError("compute_moments needs at least one warped frame")
    shape = warps[0].mask.shape
    for wf in warps:
        if wf.mask.shape != shape:
            raise ValueError("warped frames disagree on scene dimensions")
    c = warps[0].image.shape[0]
    n = len(warps)
    p = shape[0] * shape[1]

    values = np.stack([wf.image.reshape(c, p) for wf in warps])  # (N, C, P)
    masks = np.stack([wf.mask.reshape(p) for wf in warps])  # (N, P)
    member = masks > 0
    count = member.sum(axis=0)  # (P,)

    # Sort each channel stack with excluded entries pushed to the top,
    # so the first count[p] rows are the order statistics of the stack.
    sortable = np.where(member[:, None, :], values, np.inf)
    sweights = None
    if weight_by_mask:
        order = np.argsort(sortable, axis=0, kind="stable")
        svals = np.take_along_axis(sortable, order, axis=0)
        sweights = np.take_along_axis(
            np.broadcast_to(masks[:, None, :], sortable.shape), order, axis=0
        )
    else:
        svals = np.sort(sortable, axis=0)

    mean = np.zeros((c, p))
    var = np.zeros((c, p))
    for n_val in np.unique(count):
        if n_val == 0:
            continue
        cols = count == n_val
        k = int(np.floor(alpha * n_val))
        kept = svals[k : n_val - k, :, cols]  # (kept, C, ncols)
        if weight_by_mask:
            kw = sweights[k : n_val - k, :, cols]
            tot = kw.sum(axis=0)
            m = (kw * kept).sum(axis=0) / tot
            v = (kw * (kept - m) ** 2).sum(axis=0) / tot
        else:
            m = kept.mean(axis=0)
            v = ((kept - m) ** 2).mean(axis=0)
        mean[:, cols] = m
        var[:, cols] = v

    hh, ww = shape
    return PanoramicMoments(
        mean.reshape(c, hh, ww), var.reshape(c, hh, ww), count.reshape(hh, ww), alpha
    )
