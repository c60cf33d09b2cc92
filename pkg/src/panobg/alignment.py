"""Joint alignment by direct descent on per-frame transform parameters.

Each epoch shuffles the frames into batches. A batch is warped onto the
scene canvas, the alignment target is the mask-weighted mean of the
batch warps plus a pair of accumulators carrying every earlier warp,
each frame's parameters take one adaptive-moment step against that
frozen target, and the batch is folded into the accumulators. At epoch
end the accumulators are multiplied by a forgetting factor below one,
so the target drifts smoothly instead of jumping between batches, and
stale alignments fade away over tens of epochs. Because the very first
epoch's identity-stacked frames keep contributing to the target until
their weight decays, collapsing all frames to a point or pushing them
off the canvas raises the loss instead of zeroing it, and no
regularization or initialization scheme is needed.

Fitting runs an affine stage from identity, optionally followed by a
homography stage whose base matrices are frozen to the affine result.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateBatchError, DivergenceError
from .robust import smoothed_l1, smoothed_l1_deriv
from .transforms import (
    TransformParams,
    d_realize_stack,
    identity_params,
    inverse,
    param_dim,
    realize,
    transform_point,
)
from .warping import (
    SceneDomain,
    WarpedFrame,
    WarpFields,
    _homog_coords,
    scene_bounds,
    warp_fields,
    warp_frame,
)

__all__ = [
    "Accumulators",
    "JaConfig",
    "AdamState",
    "EpochStats",
    "AlignmentState",
    "target_mean",
    "batch_loss",
    "loss_gradient",
    "accumulate_batch",
    "epoch_decay",
    "fit",
    "relative_corner_error",
]


@dataclass
class Accumulators:
    """Decayed running sums of masked warped pixels and of masks."""

    value_sum: np.ndarray  # (C, H, W)
    weight_sum: np.ndarray  # (H, W)

    @classmethod
    def zeros(cls, channels: int, scene: SceneDomain) -> "Accumulators":
        return cls(
            np.zeros((channels, scene.height, scene.width)),
            np.zeros((scene.height, scene.width)),
        )


@dataclass
class JaConfig:
    """Knobs of the joint-alignment run."""

    kind: str = "affine"
    batch_size: int = 8
    epochs_affine: int = 200
    epochs_homography: int = 100
    step_size: float = 0.05
    beta: float = 0.35
    lam: float = 0.9  # per-epoch accumulator decay
    coverage_floor: float = 0.01  # fraction of h*w below which a frame is dropped
    pad: float = 3.0
    seed: int = 0
    accumulate: bool = True
    accumulate_post_step: bool = False  # re-warp after the step before accumulating
    novel_steps: int = 240  # descent steps per start when aligning unseen frames

    def __post_init__(self):
        param_dim(self.kind)
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs_affine < 0 or self.epochs_homography < 0:
            raise ValueError("epoch counts must be >= 0")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must be in [0, 1], got {self.lam}")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.coverage_floor < 0:
            raise ValueError(f"coverage_floor must be >= 0, got {self.coverage_floor}")


@dataclass
class AdamState:
    """Bias-corrected first/second moment state for one parameter vector."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros(cls, dim: int) -> "AdamState":
        return cls(np.zeros(dim), np.zeros(dim))


@dataclass
class EpochStats:
    epoch: int
    stage: str
    loss: float
    mean_coverage: float  # mean over frames of mask sum / (h*w)
    dropped: int  # frames below the coverage floor this epoch


@dataclass
class AlignmentState:
    """Everything the optimizer carries between epochs."""

    params: list[TransformParams]
    acc: Accumulators
    scene: SceneDomain
    lam: float = 0.9
    epoch: int = 0
    seed: int = 0
    opt: list[AdamState] = field(default_factory=list)
    history: list[EpochStats] = field(default_factory=list)

    @property
    def n_frames(self) -> int:
        return len(self.params)


def target_mean(
    acc: Accumulators, batch: list[WarpedFrame]
) -> tuple[np.ndarray, np.ndarray]:
    """Alignment target: accumulator-weighted mean including the batch.

    Returns (mu, weight); pixels with zero weight are unseen and carry
    mu = 0 (weight == 0 is the invalid-pixel flag).
    """
    if not batch:
        raise ValueError("target_mean needs a nonempty batch")
    weight = acc.weight_sum.copy()
    value = acc.value_sum.copy()
    for wf in batch:
        weight += wf.mask
        value += wf.mask * wf.image
    mu = np.zeros_like(value)
    np.divide(value, weight, out=mu, where=weight > 0)
    return mu, weight


def _adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    opt: AdamState,
    step,
    b1: float = 0.9,
    b2: float = 0.999,
    eps: float = 1e-8,
) -> np.ndarray:
    opt.t += 1
    opt.m = b1 * opt.m + (1 - b1) * grad
    opt.v = b2 * opt.v + (1 - b2) * grad * grad
    m_hat = opt.m / (1 - b1**opt.t)
    v_hat = opt.v / (1 - b2**opt.t)
    return theta - step * m_hat / (np.sqrt(v_hat) + eps)


def _param_scales(kind: str, frame_size: tuple[int, int]) -> np.ndarray:
    """Per-component step scales putting all parameters on one footing.

    Translation entries move pixels one-for-one while the linear-part
    entries act multiplicatively on coordinates of half-frame size (and
    the homography perspective entries act inversely), so steps are
    scaled by half the frame extent (respectively its reciprocal). This
    is the same normalization a transformer grid over [-1, 1]^2 gives
    for free.
    """
    h, w = frame_size
    sx, sy = w / 2.0, h / 2.0
    if kind == "affine":
        return np.array([1.0, 1.0, sx, 1.0, 1.0, sy])
    return np.array([1.0, 1.0, sx, 1.0, 1.0, sy, 1.0 / sx, 1.0 / sy])


def _objective(
    fields: WarpFields,
    params: TransformParams,
    scene: SceneDomain,
    t_inv: np.ndarray,
    mu_flat: np.ndarray,
    beta: float,
    floor_px: float,
    validity: np.ndarray | None = None,
    with_grad: bool = True,
):
    """One frame's term of the alignment loss and its parameter gradient.

    The term is mean over channels of sum(mask * rho(residual)) divided
    by sum(mask); the target mu is treated as a constant. Returns
    (loss, grad, coverage); loss is None when coverage fell below the
    floor (the frame is dropped and its gradient is zero).

    The gradient contracts 3x3 moment matrices of the pixel sums
    against the stacked matrix derivatives, so no per-parameter pixel
    array is ever formed: with z the homogeneous grid and
    dM_k = -T^-1 (dT/dk) T^-1, the chain rule gives
    du_k = (dM_k[0] - u dM_k[2]) z / w (likewise dv_k), and every sum
    over pixels of weight * du_k collapses to dM_k : (3x3 moments).
    """
    mask = fields.mask if validity is None else fields.mask * validity
    coverage = float(mask.sum())
    if coverage <= floor_px:
        return None, np.zeros(params.dim), coverage
    eps_res = fields.values - mu_flat
    rho = smoothed_l1(eps_res, beta)
    per_channel = (rho * mask).sum(axis=1)  # (C,)
    loss = float(per_channel.mean() / coverage)
    if not with_grad:
        return loss, None, coverage

    drho = smoothed_l1_deriv(eps_res, beta)
    z = _homog_coords(scene)  # (3, P)
    winv = np.where(fields.valid, 1.0 / np.where(fields.valid, fields.w, 1.0), 0.0)
    mgx = fields.mask_gx if validity is None else fields.mask_gx * validity
    mgy = fields.mask_gy if validity is None else fields.mask_gy * validity

    dmats = np.empty((params.dim, 3, 3))
    stack = d_realize_stack(params)
    for k in range(params.dim):
        dmats[k] = -t_inv @ stack[k] @ t_inv

    c = rho.shape[0]
    moments = np.empty((c + 1, 3, 3))
    weighted = mask * drho  # (C, P)
    for ci in range(c):
        px = (mgx * rho[ci] + weighted[ci] * fields.grad_x[ci]) * winv
        qx = (mgy * rho[ci] + weighted[ci] * fields.grad_y[ci]) * winv
        moments[ci, 0] = z @ px
        moments[ci, 1] = z @ qx
        moments[ci, 2] = -(z @ (fields.u * px + fields.v * qx))
    moments[c, 0] = z @ (mgx * winv)
    moments[c, 1] = z @ (mgy * winv)
    moments[c, 2] = -(z @ ((fields.u * mgx + fields.v * mgy) * winv))

    contracted = np.tensordot(dmats, moments, axes=([1, 2], [1, 2]))  # (d, C+1)
    d_num = contracted[:, :c]
    d_den = contracted[:, c]
    grad_dc = (d_num * coverage - np.outer(d_den, per_channel)) / (coverage * coverage)
    return loss, grad_dc.mean(axis=1), coverage


def _frame_objective(
    frame: np.ndarray,
    params: TransformParams,
    scene: SceneDomain,
    mu_flat: np.ndarray,
    beta: float,
    floor_px: float,
    validity: np.ndarray | None = None,
    with_grad: bool = True,
):
    t = realize(params)
    fields = warp_fields(frame, t, scene, with_grads=with_grad)
    return _objective(
        fields, params, scene, inverse(t), mu_flat, beta, floor_px, validity, with_grad
    )


def batch_loss(
    items: list[tuple[np.ndarray, TransformParams]],
    mu: np.ndarray,
    scene: SceneDomain,
    beta: float = 0.35,
    coverage_floor: float = 0.01,
) -> float:
    """Mean of per-frame alignment terms over a batch, mu held fixed.

    Frames whose warped mask sums to less than coverage_floor * h * w
    are excluded; if every frame is excluded the batch is degenerate.
    """
    if not items:
        raise ValueError("batch_loss needs a nonempty batch")
    mu_flat = mu.reshape(mu.shape[0], -1)
    losses = []
    for frame, params in items:
        h, w = frame.shape[-2:]
        loss, _, _ = _frame_objective(
            frame, params, scene, mu_flat, beta, coverage_floor * h * w, with_grad=False
        )
        if loss is not None:
            losses.append(loss)
    if not losses:
        raise DegenerateBatchError(
            f"all {len(items)} frames fell below the coverage floor"
        )
    return float(np.mean(losses))


def loss_gradient(
    frame: np.ndarray,
    params: TransformParams,
    mu: np.ndarray,
    scene: SceneDomain,
    beta: float = 0.35,
    coverage_floor: float = 0.01,
) -> np.ndarray:
    """Gradient of one frame's alignment term with respect to its theta.

    Includes the mask-derivative contributions of both the numerator
    and the denominator. Dropped frames get a zero vector.
    """
    h, w = frame.shape[-2:]
    mu_flat = mu.reshape(mu.shape[0], -1)
    _, grad, _ = _frame_objective(
        frame, params, scene, mu_flat, beta, coverage_floor * h * w
    )
    return grad


def accumulate_batch(state: AlignmentState, batch: list[WarpedFrame]) -> AlignmentState:
    """Fold a batch of warped frames into the running accumulators."""
    for wf in batch:
        state.acc.weight_sum += wf.mask
        state.acc.value_sum += wf.mask * wf.image
    return state


def epoch_decay(state: AlignmentState) -> AlignmentState:
    """Scale both accumulators by the forgetting factor; advance the epoch."""
    state.acc.value_sum *= state.lam
    state.acc.weight_sum *= state.lam
    state.epoch += 1
    return state


def _stage_step(cfg: JaConfig, epoch_in_stage: int, epochs: int) -> float:
    # Step size halves at each third of the stage.
    phase = min(2, (3 * epoch_in_stage) // max(1, epochs))
    return cfg.step_size * 0.5**phase


def _run_stage(
    state: AlignmentState,
    frames: np.ndarray,
    cfg: JaConfig,
    rng: np.random.Generator,
    stage: str,
    epochs: int,
) -> None:
    n, c, h, w = frames.shape
    floor_px = cfg.coverage_floor * h * w
    scales = _param_scales(stage, (h, w))
    for e in range(epochs):
        step = _stage_step(cfg, e, epochs) * scales
        order = rng.permutation(n)
        losses: list[float] = []
        coverage = np.zeros(n)
        dropped = 0
        dead_batches = 0
        n_batches = 0
        for lo in range(0, n, cfg.batch_size):
            batch = order[lo : lo + cfg.batch_size]
            n_batches += 1
            cached = []
            for i in batch:
                t = realize(state.params[i])
                f = warp_fields(frames[i], t, state.scene, with_grads=True)
                cached.append((int(i), f, inverse(t)))
            warped = [
                WarpedFrame(
                    f.values.reshape(c, state.scene.height, state.scene.width),
                    f.mask.reshape(state.scene.height, state.scene.width),
                )
                for _, f, _ in cached
            ]
            mu, _ = target_mean(state.acc, warped)
            mu_flat = mu.reshape(c, -1)
            live = 0
            for i, f, t_inv in cached:
                loss, grad, cov = _objective(
                    f, state.params[i], state.scene, t_inv, mu_flat, cfg.beta, floor_px
                )
                coverage[i] = cov / (h * w)
                if loss is None:
                    dropped += 1
                    continue
                live += 1
                losses.append(loss)
                theta = _adam_step(state.params[i].theta, grad, state.opt[i], step)
                state.params[i] = replace(state.params[i], theta=theta)
            if live == 0:
                dead_batches += 1
            if cfg.accumulate:
                if cfg.accumulate_post_step:
                    warped = [
                        warp_frame(frames[i], realize(state.params[i]), state.scene)
                        for i, _, _ in cached
                    ]
                accumulate_batch(state, warped)
        if n_batches and dead_batches == n_batches:
            raise DivergenceError(
                f"stage {stage}, epoch {state.epoch}: every batch fell below the "
                f"coverage floor (mean coverage {coverage.mean():.4f})"
            )
        stats = EpochStats(
            epoch=state.epoch,
            stage=stage,
            loss=float(np.mean(losses)) if losses else float("nan"),
            mean_coverage=float(coverage.mean()),
            dropped=dropped,
        )
        epoch_decay(state)
        state.history.append(stats)


def fit(frames: np.ndarray, cfg: JaConfig, scene: SceneDomain | None = None) -> AlignmentState:
    """Jointly align a frame stack; identity initialization throughout.

    frames is (N, C, h, w) or (N, h, w). Runs the affine stage for
    cfg.epochs_affine epochs and, when cfg.kind is 'homography', a
    second stage of cfg.epochs_homography epochs whose base matrices
    are frozen to the affine result and whose own parameters restart
    at zero. Per-epoch loss, coverage, and dropped-frame counts are
    recorded in the returned state's history.
    """
    frames = np.asarray(frames, dtype=float)
    if frames.ndim == 3:
        frames = frames[:, None]
    if frames.ndim != 4:
        raise ValueError(f"frames must be (N, C, h, w) or (N, h, w), got {frames.shape}")
    n, c, h, w = frames.shape
    if n < 2:
        raise ValueError(f"need at least 2 frames, got {n}")
    if scene is None:
        scene = scene_bounds((h, w), cfg.pad)
    rng = np.random.default_rng(cfg.seed)
    state = AlignmentState(
        params=[identity_params("affine") for _ in range(n)],
        acc=Accumulators.zeros(c, scene),
        scene=scene,
        lam=cfg.lam,
        seed=cfg.seed,
        opt=[AdamState.zeros(param_dim("affine")) for _ in range(n)],
    )
    _run_stage(state, frames, cfg, rng, "affine", cfg.epochs_affine)
    if cfg.kind == "homography":
        bases = [realize(p) for p in state.params]
        state.params = [
            TransformParams("homography", np.zeros(param_dim("homography")), b)
            for b in bases
        ]
        state.opt = [AdamState.zeros(param_dim("homography")) for _ in range(n)]
        _run_stage(state, frames, cfg, rng, "homography", cfg.epochs_homography)
    return state


def relative_corner_error(
    estimated,
    reference,
    frame_size: tuple[int, int],
    anchor: int = 0,
    reduce: str = "mean",
) -> float:
    """Corner displacement between two transform sets, gauge removed.

    Joint alignment determines the transforms only up to one global
    change of scene coordinates, T_n -> C o T_n; the relative maps
    T_anchor^-1 o T_n are invariant under that freedom, so the metric
    compares those at the four frame corners. Entries may be
    TransformParams or 3x3 matrices.
    """
    mats_e = [_as_matrix(p) for p in estimated]
    mats_r = [_as_matrix(p) for p in reference]
    if len(mats_e) != len(mats_r):
        raise ValueError("transform lists differ in length")
    h, w = frame_size
    corners = [(0.0, 0.0), (w - 1.0, 0.0), (0.0, h - 1.0), (w - 1.0, h - 1.0)]
    anchor_e = inverse(mats_e[anchor])
    anchor_r = inverse(mats_r[anchor])
    per_frame = []
    for me, mr in zip(mats_e, mats_r):
        rel_e = anchor_e @ me
        rel_r = anchor_r @ mr
        dists = [
            float(np.linalg.norm(transform_point(rel_e, c) - transform_point(rel_r, c)))
            for c in corners
        ]
        per_frame.append(max(dists) if reduce == "max" else float(np.mean(dists)))
    return float(max(per_frame) if reduce == "max" else np.mean(per_frame))


def _as_matrix(p) -> np.ndarray:
    if isinstance(p, TransformParams):
        return realize(p)
    return np.asarray(p, dtype=float)
