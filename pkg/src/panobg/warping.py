"""Bilinear warping between the frame domain and a fixed scene canvas.

Coordinate convention: pixel centers sit at integer coordinates, (0, 0)
is the top-left pixel, x runs along columns and y along rows. Scene
coordinates are frame coordinates plus the scene offset, so the
identity transform places a frame at the offset block of the canvas.
Everything outside the frame samples as zero, and the warped all-ones
mask records how much of each scene pixel's value is real evidence.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .transforms import TransformParams, d_realize, inverse, realize

__all__ = [
    "SceneDomain",
    "WarpedFrame",
    "WarpFields",
    "scene_bounds",
    "bilinear_sample",
    "warp_frame",
    "warp_fields",
    "param_flow",
    "warp_jacobian",
]

W_EPS = 1e-12


@dataclass(frozen=True)
class SceneDomain:
    """Fixed H x W canvas holding every warped frame footprint."""

    height: int
    width: int
    offset: tuple[int, int]  # (ox, oy), added to frame coords


@dataclass
class WarpedFrame:
    """A frame carried onto the scene canvas together with its mask."""

    image: np.ndarray  # (C, H, W)
    mask: np.ndarray  # (H, W), in [0, 1]


@dataclass
class WarpFields:
    """Flattened scene-grid samples of one warped frame."""

    values: np.ndarray  # (C, P)
    mask: np.ndarray  # (P,)
    u: np.ndarray  # (P,) pre-image x
    v: np.ndarray  # (P,) pre-image y
    w: np.ndarray  # (P,) homogeneous denominators
    valid: np.ndarray  # (P,) bool, horizon guard
    grad_x: np.ndarray | None = None  # (C, P) d(values)/du
    grad_y: np.ndarray | None = None
    mask_gx: np.ndarray | None = None  # (P,) d(mask)/du
    mask_gy: np.ndarray | None = None


def scene_bounds(frame_size: tuple[int, int], pad: float = 3.0) -> SceneDomain:
    """Canvas of pad times the frame size with the frame block centered."""
    if pad < 1:
        raise ValueError(f"pad must be >= 1, got {pad}")
    h, w = frame_size
    height = int(np.ceil(pad * h))
    width = int(np.ceil(pad * w))
    return SceneDomain(height, width, ((width - w) // 2, (height - h) // 2))


@lru_cache(maxsize=8)
def _frame_coords(scene: SceneDomain) -> tuple[np.ndarray, np.ndarray]:
    """Flattened frame-coordinate grid of every integral scene pixel."""
    ox, oy = scene.offset
    ys, xs = np.mgrid[0 : scene.height, 0 : scene.width]
    return (xs.ravel() - float(ox), ys.ravel() - float(oy))


@lru_cache(maxsize=8)
def _homog_coords(scene: SceneDomain) -> np.ndarray:
    """(3, P) homogeneous frame coordinates of the scene grid."""
    zx, zy = _frame_coords(scene)
    return np.stack([zx, zy, np.ones_like(zx)])


def _corner_setup(u: np.ndarray, v: np.ndarray):
    x0 = np.floor(u).astype(np.int64)
    y0 = np.floor(v).astype(np.int64)
    return x0, y0, u - x0, v - y0


def _inb(xx: np.ndarray, yy: np.ndarray, h: int, w: int) -> np.ndarray:
    return (xx >= 0) & (xx < w) & (yy >= 0) & (yy < h)


def _gather(frame: np.ndarray, xx: np.ndarray, yy: np.ndarray) -> np.ndarray:
    """Per-channel lookup with zero padding outside the frame."""
    _, h, w = frame.shape
    inb = _inb(xx, yy, h, w)
    vals = frame[:, np.clip(yy, 0, h - 1), np.clip(xx, 0, w - 1)]
    vals[:, ~inb] = 0.0
    return vals


def _as_chw(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame, dtype=float)
    if frame.ndim == 2:
        return frame[None]
    if frame.ndim != 3:
        raise ValueError(f"frame must be (C, h, w) or (h, w), got shape {frame.shape}")
    return frame


def bilinear_sample(frame: np.ndarray, channel: int, point) -> float:
    """Bilinear interpolation of one channel at a real-valued point.

    The four nearest integral locations contribute; any of them lying
    outside the frame contributes zero.
    """
    frame = _as_chw(frame)
    u = np.asarray([float(point[0])])
    v = np.asarray([float(point[1])])
    x0, y0, wx, wy = _corner_setup(u, v)
    plane = frame[channel : channel + 1]
    v00 = _gather(plane, x0, y0)
    v01 = _gather(plane, x0 + 1, y0)
    v10 = _gather(plane, x0, y0 + 1)
    v11 = _gather(plane, x0 + 1, y0 + 1)
    value = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11)
    return float(value[0, 0])


def warp_fields(
    frame: np.ndarray,
    t: np.ndarray,
    scene: SceneDomain,
    with_grads: bool = False,
) -> WarpFields:
    """Sample a frame over the whole scene grid through t inverse.

    Returns the warped image values and mask, and optionally their
    spatial derivatives with respect to the sample location, which the
    alignment gradient assembles with param_flow into parameter
    derivatives. Scene pixels whose pre-image sits at the projective
    horizon get zero value, zero mask, and zero derivatives.
    """
    frame = _as_chw(frame)
    _, h, w = frame.shape
    zx, zy = _frame_coords(scene)
    t_inv = inverse(t)
    hx = t_inv[0, 0] * zx + t_inv[0, 1] * zy + t_inv[0, 2]
    hy = t_inv[1, 0] * zx + t_inv[1, 1] * zy + t_inv[1, 2]
    hw = t_inv[2, 0] * zx + t_inv[2, 1] * zy + t_inv[2, 2]
    valid = np.abs(hw) > W_EPS
    safe = np.where(valid, hw, 1.0)
    u = np.where(valid, hx / safe, -1.0)
    v = np.where(valid, hy / safe, -1.0)

    x0, y0, wx, wy = _corner_setup(u, v)
    corner_vals = []
    corner_inb = []
    for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1)):
        xx, yy = x0 + dx, y0 + dy
        inb = _inb(xx, yy, h, w)
        vals = frame[:, np.where(inb, yy, 0), np.where(inb, xx, 0)]
        vals[:, ~inb] = 0.0
        corner_vals.append(vals)
        corner_inb.append(inb.astype(float))
    v00, v01, v10, v11 = corner_vals
    i00, i01, i10, i11 = corner_inb

    values = (1 - wy) * ((1 - wx) * v00 + wx * v01) + wy * ((1 - wx) * v10 + wx * v11)
    mask = (1 - wy) * ((1 - wx) * i00 + wx * i01) + wy * ((1 - wx) * i10 + wx * i11)
    invalid = ~valid
    values[:, invalid] = 0.0
    mask[invalid] = 0.0

    grad_x = grad_y = mask_gx = mask_gy = None
    if with_grads:
        grad_x = (1 - wy) * (v01 - v00) + wy * (v11 - v10)
        grad_y = (1 - wx) * (v10 - v00) + wx * (v11 - v01)
        mask_gx = (1 - wy) * (i01 - i00) + wy * (i11 - i10)
        mask_gy = (1 - wx) * (i10 - i00) + wx * (i11 - i01)
        grad_x[:, invalid] = 0.0
        grad_y[:, invalid] = 0.0
        mask_gx[invalid] = 0.0
        mask_gy[invalid] = 0.0

    return WarpFields(values, mask, u, v, hw, valid, grad_x, grad_y, mask_gx, mask_gy)


def warp_frame(frame: np.ndarray, t: np.ndarray, scene: SceneDomain) -> WarpedFrame:
    """Warp a frame and the all-ones mask onto the scene canvas."""
    fields = warp_fields(frame, t, scene)
    c = fields.values.shape[0]
    image = fields.values.reshape(c, scene.height, scene.width)
    mask = fields.mask.reshape(scene.height, scene.width)
    return WarpedFrame(image, mask)


def param_flow(
    params: TransformParams,
    scene: SceneDomain,
    fields: WarpFields,
    t_inv: np.ndarray,
) -> np.ndarray:
    """Derivative of each pre-image coordinate along each parameter.

    Returns (d, 2, P): how the pre-image (u, v) of every scene pixel
    moves per unit change of parameter k, using
    d(T^-1)/dk = -T^-1 (dT/dk) T^-1.
    """
    zx, zy = _frame_coords(scene)
    safe = np.where(fields.valid, fields.w, 1.0)
    invalid = ~fields.valid
    flow = np.empty((params.dim, 2, zx.size))
    for k in range(params.dim):
        dmat = -t_inv @ d_realize(params, k) @ t_inv
        dhx = dmat[0, 0] * zx + dmat[0, 1] * zy + dmat[0, 2]
        dhy = dmat[1, 0] * zx + dmat[1, 1] * zy + dmat[1, 2]
        dhw = dmat[2, 0] * zx + dmat[2, 1] * zy + dmat[2, 2]
        fx = (dhx - fields.u * dhw) / safe
        fy = (dhy - fields.v * dhw) / safe
        fx[invalid] = 0.0
        fy[invalid] = 0.0
        flow[k, 0] = fx
        flow[k, 1] = fy
    return flow


def warp_jacobian(
    frame: np.ndarray,
    params: TransformParams,
    scene: SceneDomain,
    pixel: tuple[int, int],
) -> np.ndarray:
    """Derivative of one warped pixel's channels along every parameter.

    pixel is an integral (x, y) scene location; the result has shape
    (dim, channels). Horizon-singular pixels return all zeros, matching
    their zero mask.
    """
    frame = _as_chw(frame)
    t = realize(params)
    fields = warp_fields(frame, t, scene, with_grads=True)
    idx = int(pixel[1]) * scene.width + int(pixel[0])
    if not fields.valid[idx]:
        return np.zeros((params.dim, frame.shape[0]))
    zx, zy = _frame_coords(scene)
    z = np.array([zx[idx], zy[idx], 1.0])
    t_inv = inverse(t)
    jac = np.empty((params.dim, frame.shape[0]))
    for k in range(params.dim):
        dh = -t_inv @ d_realize(params, k) @ t_inv @ z
        du = (dh[0] - fields.u[idx] * dh[2]) / fields.w[idx]
        dv = (dh[1] - fields.v[idx] * dh[2]) / fields.w[idx]
        jac[k] = fields.grad_x[:, idx] * du + fields.grad_y[:, idx] * dv
    return jac
