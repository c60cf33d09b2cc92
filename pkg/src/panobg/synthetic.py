"""Synthetic moving-window sequences with known ground-truth motion.

A textured panorama is sampled through a smooth random walk of affine
windows, optionally with a small bright square orbiting the panorama
center as a foreground object. The generator emits the frames, the
foreground-free renders of the same windows, exact per-pixel foreground
annotations, and the ground-truth transforms (relative to the canonical
center crop, so zero motion means identity).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import logm
from scipy.ndimage import gaussian_filter

from .transforms import TransformParams, inverse, matrix_exp, affine_generator
from .warping import SceneDomain, warp_frame

__all__ = [
    "MotionSpec",
    "ForegroundSpec",
    "SynthDataset",
    "textured_panorama",
    "make_sequence",
]


@dataclass
class MotionSpec:
    """Bounds of the smooth random window walk."""

    max_translation: float = 20.0  # px, each axis
    max_rotation_deg: float = 10.0
    max_log_scale: float = 0.0
    smoothing: int = 5  # moving-average width over the walk

    def bounded(self) -> bool:
        return (
            self.max_translation >= 0
            and self.max_rotation_deg >= 0
            and self.max_log_scale >= 0
        )


@dataclass
class ForegroundSpec:
    """A square of constant intensity orbiting the panorama center."""

    size: int = 10  # px, side length
    intensity: float = 0.95
    radius: float = 18.0  # orbit radius around the panorama center
    revolutions: float = 1.1


@dataclass
class SynthDataset:
    frames: np.ndarray  # (N, C, h, w)
    clean: np.ndarray  # (N, C, h, w), foreground-free renders
    annotations: np.ndarray  # (N, h, w) bool
    gt_params: list[TransformParams]  # frame -> canonical-crop coordinates
    panorama: np.ndarray  # (C, Hp, Wp)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def frame_size(self) -> tuple[int, int]:
        return self.frames.shape[2], self.frames.shape[3]


def textured_panorama(
    shape: tuple[int, int] = (256, 256), channels: int = 1, seed: int = 0
) -> np.ndarray:
    """Multi-scale noise texture: mostly dark with bright smooth blobs.

    Coarse structure dominates so photometric alignment has a wide
    basin of attraction, and the finer layers pin down sub-pixel
    accuracy. Values concentrate near the low end: warped frames fade
    to zero at footprint boundaries (zero-padded sampling), so a bright
    average level would turn every boundary band into a large spurious
    residual, biasing alignment in proportion to the mean brightness.
    """
    rng = np.random.default_rng(seed)
    h, w = shape
    out = np.zeros((channels, h, w))
    for c in range(channels):
        layers = [
            (16.0, 1.0),
            (6.0, 0.5),
            (2.0, 0.25),
        ]
        tex = np.zeros((h, w))
        for sigma, gain in layers:
            noise = rng.normal(size=(h, w))
            smooth = gaussian_filter(noise, sigma, mode="reflect")
            smooth /= np.abs(smooth).max()
            # keep only the bright lobes so the background stays dark
            tex += gain * np.maximum(smooth, 0.0)
        tex /= tex.max()
        out[c] = 0.02 + 0.93 * tex
    return out


def _smooth_walk(rng: np.random.Generator, n: int, bound: float, smoothing: int) -> np.ndarray:
    """Centered random walk rescaled to peak at exactly +-bound."""
    if bound == 0 or n == 1:
        return np.zeros(n)
    path = np.cumsum(rng.normal(size=n))
    if smoothing > 1:
        kernel = np.ones(smoothing) / smoothing
        path = np.convolve(np.pad(path, smoothing, mode="edge"), kernel, mode="same")[
            smoothing:-smoothing
        ]
    path -= path.mean()
    peak = np.abs(path).max()
    if peak == 0:
        return np.zeros(n)
    return path * (bound / peak)


def _window_transforms(
    rng: np.random.Generator,
    n_frames: int,
    frame_size: tuple[int, int],
    pano_shape: tuple[int, int],
    motion: MotionSpec,
) -> list[np.ndarray]:
    """Affine maps from frame coordinates to panorama coordinates."""
    h, w = frame_size
    ph, pw = pano_shape
    tx = _smooth_walk(rng, n_frames, motion.max_translation, motion.smoothing)
    ty = _smooth_walk(rng, n_frames, motion.max_translation, motion.smoothing)
    ang = np.deg2rad(_smooth_walk(rng, n_frames, motion.max_rotation_deg, motion.smoothing))
    logs = _smooth_walk(rng, n_frames, motion.max_log_scale, motion.smoothing)
    cx, cy = (pw - 1) / 2.0, (ph - 1) / 2.0
    fx, fy = (w - 1) / 2.0, (h - 1) / 2.0
    windows = []
    for i in range(n_frames):
        s = np.exp(logs[i])
        ca, sa = np.cos(ang[i]), np.sin(ang[i])
        linear = s * np.array([[ca, -sa], [sa, ca]])
        a = np.eye(3)
        a[:2, :2] = linear
        a[:2, 2] = (cx + tx[i], cy + ty[i]) - linear @ (fx, fy)
        windows.append(a)
    return windows


def _check_bounds(windows: list[np.ndarray], frame_size, pano_shape) -> None:
    h, w = frame_size
    ph, pw = pano_shape
    corners = np.array(
        [[0, 0, 1], [w - 1, 0, 1], [0, h - 1, 1], [w - 1, h - 1, 1]], dtype=float
    ).T
    for i, a in enumerate(windows):
        mapped = a @ corners
        xs, ys = mapped[0], mapped[1]
        if xs.min() < 0 or ys.min() < 0 or xs.max() > pw - 1 or ys.max() > ph - 1:
            raise ValueError(
                f"frame {i}: window walk leaves the panorama "
                f"(x in [{xs.min():.1f}, {xs.max():.1f}], y in [{ys.min():.1f}, {ys.max():.1f}])"
            )


def _theta_from_matrix(mat: np.ndarray) -> np.ndarray:
    """Generator coefficients whose exponential realizes an affine matrix."""
    gen = logm(mat)
    if np.abs(gen.imag).max() > 1e-9:
        raise ValueError("affine matrix has no real generator (rotation too large)")
    gen = gen.real
    theta = np.concatenate([gen[0], gen[1]])
    # Round-trip guard: the stored parameters must realize the matrix.
    if np.abs(matrix_exp(affine_generator(theta)) - mat).max() > 1e-8:
        raise ValueError("generator round trip failed for ground-truth matrix")
    return theta


def make_sequence(
    panorama: np.ndarray | None = None,
    n_frames: int = 40,
    frame_size: tuple[int, int] = (64, 64),
    motion: MotionSpec = None,
    foreground: ForegroundSpec | None = None,
    seed: int = 0,
    channels: int = 1,
) -> SynthDataset:
    """Render a window-walk sequence with exact ground truth.

    Ground-truth transforms map frame coordinates to the coordinates of
    the canonical center crop, so a zero-motion walk yields identity
    transforms and all comparisons against fitted transforms should go
    through relative (gauge-corrected) composition.
    """
    motion = motion or MotionSpec()
    if not motion.bounded():
        raise ValueError("motion bounds must be nonnegative")
    rng = np.random.default_rng(seed)
    if panorama is None:
        panorama = textured_panorama(channels=channels, seed=seed)
    panorama = np.asarray(panorama, dtype=float)
    if panorama.ndim == 2:
        panorama = panorama[None]
    c, ph, pw = panorama.shape
    h, w = frame_size

    windows = _window_transforms(rng, n_frames, frame_size, (ph, pw), motion)
    _check_bounds(windows, frame_size, (ph, pw))

    # Canonical crop: the zero-motion window; ground truth is relative to it.
    canonical = _window_transforms(
        np.random.default_rng(0), 1, frame_size, (ph, pw), MotionSpec(0, 0, 0)
    )[0]
    canonical_inv = inverse(canonical)

    frame_scene = SceneDomain(h, w, (0, 0))
    frames = np.empty((n_frames, c, h, w))
    clean = np.empty((n_frames, c, h, w))
    annotations = np.zeros((n_frames, h, w), dtype=bool)
    gt_params = []

    sq = None
    if foreground is not None:
        phase = rng.uniform(0, 2 * np.pi)
        angles = phase + 2 * np.pi * foreground.revolutions * np.arange(n_frames) / n_frames
        sq = np.stack(
            [
                (pw - 1) / 2.0 + foreground.radius * np.cos(angles),
                (ph - 1) / 2.0 + foreground.radius * np.sin(angles),
            ],
            axis=1,
        )

    ys, xs = np.mgrid[0:h, 0:w]
    for i, a in enumerate(windows):
        rendered = warp_frame(panorama, inverse(a), frame_scene).image
        clean[i] = rendered
        frames[i] = rendered
        if sq is not None:
            px = a[0, 0] * xs + a[0, 1] * ys + a[0, 2]
            py = a[1, 0] * xs + a[1, 1] * ys + a[1, 2]
            half = foreground.size / 2.0
            inside = (np.abs(px - sq[i, 0]) <= half) & (np.abs(py - sq[i, 1]) <= half)
            annotations[i] = inside
            frames[i][:, inside] = foreground.intensity
        gt_params.append(
            TransformParams("affine", _theta_from_matrix(canonical_inv @ a))
        )
    return SynthDataset(frames, clean, annotations, gt_params, panorama)
