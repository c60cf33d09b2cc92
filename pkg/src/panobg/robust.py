"""Robust penalties applied to per-pixel residuals.

smoothed_l1 is quadratic near zero and linear beyond the knee, so its
derivative is bounded by one; it drives the alignment. geman_mcclure
saturates at one and redescends, suppressing outliers harder; it scores
reconstruction residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "RobustConfig",
    "smoothed_l1",
    "smoothed_l1_deriv",
    "geman_mcclure",
    "geman_mcclure_deriv",
]


@dataclass
class RobustConfig:
    """Scales of the two penalties: quadratic knee and saturation scale."""

    beta: float = 0.35
    s: float = 0.05

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.s <= 0:
            raise ValueError(f"s must be positive, got {self.s}")


def smoothed_l1(eps, beta: float = 0.35):
    """0.5*eps^2/beta inside |eps| <= beta, |eps| - 0.5*beta outside."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    eps = np.asarray(eps, dtype=float)
    out = np.where(np.abs(eps) <= beta, 0.5 * eps * eps / beta, np.abs(eps) - 0.5 * beta)
    return out[()]


def smoothed_l1_deriv(eps, beta: float = 0.35):
    """eps/beta on the quadratic branch, sign(eps) on the linear branch."""
    if beta <= 0:
        raise ValueError(f"beta must be positive, got {beta}")
    eps = np.asarray(eps, dtype=float)
    out = np.where(np.abs(eps) <= beta, eps / beta, np.sign(eps))
    return out[()]


def geman_mcclure(eps, s: float = 0.05):
    """eps^2 / (eps^2 + s^2), in [0, 1)."""
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    eps = np.asarray(eps, dtype=float)
    sq = eps * eps
    out = sq / (sq + s * s)
    return out[()]


def geman_mcclure_deriv(eps, s: float = 0.05):
    """2*eps*s^2 / (eps^2 + s^2)^2."""
    if s <= 0:
        raise ValueError(f"s must be positive, got {s}")
    eps = np.asarray(eps, dtype=float)
    denom = eps * eps + s * s
    out = 2.0 * eps * s * s / (denom * denom)
    return out[()]
