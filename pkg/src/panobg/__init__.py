"""Joint video-frame alignment and robust panoramic background estimation.

The library aligns the frames of a moving-camera video by direct
gradient descent on per-frame invertible transforms against a smoothly
drifting panoramic target, computes robust trimmed moments of the
aligned pixel stacks, estimates per-frame backgrounds by unwarping the
robust mean, and scores background quality with a pixel-level ROC/AUC
protocol.
"""

from .alignment import (
    Accumulators,
    AlignmentState,
    EpochStats,
    JaConfig,
    accumulate_batch,
    batch_loss,
    epoch_decay,
    fit,
    loss_gradient,
    relative_corner_error,
    target_mean,
)
from .background import align_novel_frame, estimate_background, unwarp_moments
from .errors import (
    ConstantFieldError,
    DegenerateBatchError,
    DivergenceError,
    HorizonError,
    NoOverlapError,
    NumericalError,
)
from .evaluation import RocCurve, pixel_error, roc, scale_errors
from .moments import PanoramicMoments, compute_moments, trimmed_mean_var
from .robust import (
    RobustConfig,
    geman_mcclure,
    geman_mcclure_deriv,
    smoothed_l1,
    smoothed_l1_deriv,
)
from .synthetic import ForegroundSpec, MotionSpec, SynthDataset, make_sequence, textured_panorama
from .transforms import (
    TransformParams,
    affine_generator,
    d_realize,
    homography_generator,
    identity_params,
    inverse,
    matrix_exp,
    realize,
    transform_point,
)
from .warping import (
    SceneDomain,
    WarpedFrame,
    bilinear_sample,
    scene_bounds,
    warp_frame,
    warp_jacobian,
)

__version__ = "0.1.0"
