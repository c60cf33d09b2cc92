"""Per-frame backgrounds by unwarping the robust panoramic moments.

The background of frame n is the trimmed panoramic mean read back
through frame n's transform. Frames never seen by the fit can still be
handled: their transform is recovered by minimizing the single-frame
alignment term against the frozen robust mean, multi-started from a
coarse translation grid.
"""

from __future__ import annotations

import numpy as np

from .alignment import JaConfig, _adam_step, _frame_objective, AdamState
from .errors import NoOverlapError
from .moments import PanoramicMoments
from .transforms import TransformParams, identity_params, param_dim, realize
from .warping import SceneDomain, _as_chw, _corner_setup, _inb

__all__ = ["unwarp_moments", "estimate_background", "align_novel_frame"]


def unwarp_moments(
    moments: PanoramicMoments,
    params: TransformParams | np.ndarray,
    scene: SceneDomain,
    frame_size: tuple[int, int],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read the panoramic moments back into the frame domain.

    Samples mean and variance bilinearly at the transform image of each
    frame pixel. A pixel is flagged invalid when any contributing scene
    pixel (positive bilinear weight) lies outside the covered region,
    i.e. has stack count zero. Returns (mean, var, valid).
    """
    t = realize(params) if isinstance(params, TransformParams) else np.asarray(params, float)
    h, w = frame_size
    ox, oy = scene.offset
    ys, xs = np.mgrid[0:h, 0:w]
    xs = xs.ravel().astype(float)
    ys = ys.ravel().astype(float)
    hx = t[0, 0] * xs + t[0, 1] * ys + t[0, 2]
    hy = t[1, 0] * xs + t[1, 1] * ys + t[1, 2]
    hw = t[2, 0] * xs + t[2, 1] * ys + t[2, 2]
    finite = np.abs(hw) > 1e-12
    safe = np.where(finite, hw, 1.0)
    u = hx / safe + ox
    v = hy / safe + oy

    x0, y0, wx, wy = _corner_setup(u, v)
    sh, sw = scene.height, scene.width
    c = moments.mean.shape[0]
    mean = np.zeros((c, h * w))
    var = np.zeros((c, h * w))
    covered = np.ones(h * w, dtype=bool)
    corner_weights = (
        ((1 - wx) * (1 - wy), x0, y0),
        (wx * (1 - wy), x0 + 1, y0),
        ((1 - wx) * wy, x0, y0 + 1),
        (wx * wy, x0 + 1, y0 + 1),
    )
    for weight, cx, cy in corner_weights:
        inb = _inb(cx, cy, sh, sw)
        cxc = np.clip(cx, 0, sw - 1)
        cyc = np.clip(cy, 0, sh - 1)
        usable = inb & (moments.count[cyc, cxc] > 0)
        wgt = np.where(usable, weight, 0.0)
        mean += wgt * moments.mean[:, cyc, cxc]
        var += wgt * moments.var[:, cyc, cxc]
        # Any positively weighted corner without evidence invalidates the pixel.
        covered &= usable | (weight <= 0)
    covered &= finite
    mean[:, ~covered] = 0.0
    var[:, ~covered] = 0.0
    return mean.reshape(c, h, w), var.reshape(c, h, w), covered.reshape(h, w)


def estimate_background(
    frame: np.ndarray,
    params: TransformParams | np.ndarray,
    moments: PanoramicMoments,
    scene: SceneDomain,
) -> tuple[np.ndarray, np.ndarray]:
    """Background of one frame: the unwarped robust mean.

    Pixels without panoramic evidence pass the input frame through
    unchanged; the returned validity flags report which ones.
    """
    frame = _as_chw(frame)
    h, w = frame.shape[1:]
    mean, _, valid = unwarp_moments(moments, params, scene, (h, w))
    background = mean.copy()
    background[:, ~valid] = frame[:, ~valid]
    return background, valid


def _translation_starts(kind: str, h: int, w: int) -> list[np.ndarray]:
    """Identity plus a coarse grid: +-1/4 frame in 1/8-frame steps."""
    starts = []
    steps = np.array([-2, -1, 0, 1, 2], dtype=float)
    for ty in steps * (h / 8.0):
        for tx in steps * (w / 8.0):
            theta = np.zeros(param_dim(kind))
            theta[2] = tx
            theta[5] = ty
            starts.append(theta)
    return starts


def align_novel_frame(
    frame: np.ndarray,
    moments: PanoramicMoments,
    scene: SceneDomain,
    cfg: JaConfig | None = None,
) -> TransformParams:
    """Place a previously unseen frame against the frozen robust mean.

    Minimizes the single-frame alignment term (mask-weighted robust
    residual against the panoramic mean, restricted to covered pixels)
    over the transform parameters. Every start of the multi-start grid
    runs adaptive-moment descent and the best visited iterate wins, so
    the returned loss never exceeds the identity-start loss.
    """
    cfg = cfg or JaConfig()
    frame = _as_chw(frame)
    c, h, w = frame.shape
    floor_px = cfg.coverage_floor * h * w
    validity = (moments.count.reshape(-1) > 0).astype(float)
    mu_flat = moments.mean.reshape(c, -1)

    best_loss = np.inf
    best_params: TransformParams | None = None
    for theta0 in _translation_starts(cfg.kind, h, w):
        params = TransformParams(cfg.kind, theta0.copy())
        opt = AdamState.zeros(params.dim)
        for it in range(cfg.novel_steps + 1):
            loss, grad, _ = _frame_objective(
                frame, params, scene, mu_flat, cfg.beta, floor_px, validity=validity
            )
            if loss is None:
                break
            if loss < best_loss:
                best_loss = loss
                best_params = params
            if it == cfg.novel_steps:
                break
            phase_step = cfg.step_size * 0.5 ** min(
                2, (3 * it) // max(1, cfg.novel_steps)
            )
            theta = _adam_step(params.theta, grad, opt, phase_step)
            params = TransformParams(cfg.kind, theta, params.base)
    if best_params is None:
        raise NoOverlapError(
            "no start of the multi-start grid overlapped the covered panorama"
        )
    return best_params
