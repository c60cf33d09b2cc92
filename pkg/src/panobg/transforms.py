"""Invertible 2D transforms parameterized through the matrix exponential.

An affine transform is exp(A) of a 3x3 generator A whose last row is
zero, built from an unconstrained 6-vector. Such exponentials always
have last row (0, 0, 1) and positive determinant, so every realized
transform is invertible no matter what the parameters are. Homographies
use an 8-vector filling a traceless generator (so exp has determinant
one), composed with a frozen base matrix; the base lets a homography
stage start from a previously fitted affine solution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import HorizonError

__all__ = [
    "AFFINE_DIM",
    "HOMOGRAPHY_DIM",
    "TransformParams",
    "affine_generator",
    "homography_generator",
    "matrix_exp",
    "realize",
    "transform_point",
    "inverse",
    "d_realize",
    "d_realize_stack",
    "identity_params",
    "param_dim",
]

AFFINE_DIM = 6
HOMOGRAPHY_DIM = 8

# Horizon guard: homogeneous scale below this is treated as at infinity.
W_EPS = 1e-12


def param_dim(kind: str) -> int:
    """Parameter count of a transform family ('affine' or 'homography')."""
    if kind == "affine":
        return AFFINE_DIM
    if kind == "homography":
        return HOMOGRAPHY_DIM
    raise ValueError(f"unknown transform kind {kind!r}")


@dataclass
class TransformParams:
    """Unconstrained parameters of one invertible transform.

    theta is the generator coefficient vector (length 6 for affine,
    8 for homography). base is a fixed 3x3 matrix composed on the left
    of the exponential; it is the identity except for homographies warm
    started from an affine fit. theta of all zeros realizes base.
    """

    kind: str
    theta: np.ndarray
    base: np.ndarray = field(default_factory=lambda: np.eye(3))

    def __post_init__(self):
        d = param_dim(self.kind)
        self.theta = np.asarray(self.theta, dtype=float)
        self.base = np.asarray(self.base, dtype=float)
        if self.theta.shape != (d,):
            raise ValueError(
                f"{self.kind} transform needs {d} parameters, got shape {self.theta.shape}"
            )
        if self.base.shape != (3, 3):
            raise ValueError(f"base must be 3x3, got shape {self.base.shape}")

    @property
    def dim(self) -> int:
        return self.theta.size


def identity_params(kind: str = "affine", base: np.ndarray | None = None) -> TransformParams:
    """Zero parameter vector, realizing base (the identity by default)."""
    theta = np.zeros(param_dim(kind))
    if base is None:
        return TransformParams(kind, theta)
    return TransformParams(kind, theta, np.array(base, dtype=float))


def affine_generator(theta6) -> np.ndarray:
    """Fill the top two rows of a 3x3 generator; the last row stays zero."""
    theta6 = np.asarray(theta6, dtype=float)
    if theta6.shape != (AFFINE_DIM,):
        raise ValueError(f"expected 6 parameters, got shape {theta6.shape}")
    gen = np.zeros((3, 3))
    gen[0] = theta6[0:3]
    gen[1] = theta6[3:6]
    return gen


def homography_generator(theta8) -> np.ndarray:
    """Fill a 3x3 generator row-major; entry (2, 2) closes the trace to zero."""
    theta8 = np.asarray(theta8, dtype=float)
    if theta8.shape != (HOMOGRAPHY_DIM,):
        raise ValueError(f"expected 8 parameters, got shape {theta8.shape}")
    gen = np.empty((3, 3))
    gen.flat[:8] = theta8
    gen[2, 2] = -(theta8[0] + theta8[4])
    return gen


_TAYLOR_TERMS = 18


def _exp_core(a: np.ndarray, norm1: float) -> np.ndarray:
    """Scaling-and-squaring exponential of a (possibly stacked) matrix."""
    n = a.shape[-1]
    squarings = int(np.ceil(np.log2(max(1.0, norm1)))) + 4
    scaled = a / (2.0**squarings)
    term = np.broadcast_to(np.eye(n), a.shape).copy()
    total = term.copy()
    for k in range(1, _TAYLOR_TERMS + 1):
        term = term @ scaled / k
        total = total + term
    for _ in range(squarings):
        total = total @ total
    return total


def matrix_exp(a) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a Taylor core.

    The input is scaled down by 2**s with s = ceil(log2(max(1, ||a||_1))) + 4,
    so the scaled matrix has 1-norm at most 1/16 and a short Taylor series
    is exact to double precision; the result is then squared s times.
    Zero rows of the input survive every product, which keeps the last
    row of an exponentiated affine generator at exactly (0, 0, 1).
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix exponential of non-finite matrix")
    norm1 = float(np.abs(a).sum(axis=0).max()) if a.shape[0] else 0.0
    return _exp_core(a, norm1)


def realize(p: TransformParams) -> np.ndarray:
    """Realized 3x3 matrix: base @ exp(generator(theta))."""
    if p.kind == "affine":
        gen = affine_generator(p.theta)
    else:
        gen = homography_generator(p.theta)
    return p.base @ matrix_exp(gen)


def transform_point(t: np.ndarray, x) -> np.ndarray:
    """Apply a 3x3 transform to a 2D point (projective division included)."""
    px, py = float(x[0]), float(x[1])
    w = t[2, 0] * px + t[2, 1] * py + t[2, 2]
    if abs(w) <= W_EPS:
        raise HorizonError(f"point {(px, py)} maps to the horizon (w={w:.3e})")
    return np.array(
        [
            (t[0, 0] * px + t[0, 1] * py + t[0, 2]) / w,
            (t[1, 0] * px + t[1, 1] * py + t[1, 2]) / w,
        ]
    )


def inverse(t: np.ndarray) -> np.ndarray:
    """Inverse of a 3x3 transform; realized transforms are always invertible."""
    t = np.asarray(t, dtype=float)
    if abs(np.linalg.det(t)) < 1e-12:
        raise ValueError("transform matrix is singular")
    return np.linalg.inv(t)


def d_realize(p: TransformParams, k: int) -> np.ndarray:
    """Derivative of realize(p) along parameter k.

    Uses the block identity exp([[A, E], [0, A]]) = [[exp A, D], [0, exp A]]
    where D is the directional derivative of exp at A along E, so the
    result is exact to machine precision (one 6x6 exponential per call).
    """
    if not 0 <= k < p.dim:
        raise ValueError(f"parameter index {k} out of range for dim {p.dim}")
    return d_realize_stack(p)[k]


def d_realize_stack(p: TransformParams) -> np.ndarray:
    """Derivatives of realize(p) along every parameter, stacked (dim, 3, 3).

    Shares one stacked block exponential across all parameters, which
    is considerably cheaper than dim separate 6x6 exponentials.
    """
    make = affine_generator if p.kind == "affine" else homography_generator
    gen = make(p.theta)
    blocks = np.zeros((p.dim, 6, 6))
    blocks[:, :3, :3] = gen
    blocks[:, 3:, 3:] = gen
    for k in range(p.dim):
        basis = np.zeros(p.dim)
        basis[k] = 1.0
        blocks[k, :3, 3:] = make(basis)
    norm1 = float(np.abs(blocks).sum(axis=1).max())
    return p.base @ _exp_core(blocks, norm1)[:, :3, 3:]
