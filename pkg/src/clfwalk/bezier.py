"""Degree-5 Bezier curves on a normalized phase s in [0, 1].

Control points are stored as an (m, 6) array, one row per output channel.
Outside [0, 1] the curve is extrapolated as a constant (endpoint value,
zero first and second derivative), which is what a post-impact transient
that briefly exits the nominal phase range should see.
"""

from __future__ import annotations

import numpy as np

from .errors import RankDeficientFit

DEGREE = 5
NUM_CTRL = DEGREE + 1

_BINOM = np.array([1.0, 5.0, 10.0, 10.0, 5.0, 1.0])


def bernstein_basis(s):
    """Row of the six degree-5 Bernstein polynomials at scalar phase s."""
    s = float(s)
    k = np.arange(NUM_CTRL)
    return _BINOM * s**k * (1.0 - s) ** (DEGREE - k)


def eval_bezier(ctrl: np.ndarray, s: float) -> np.ndarray:
    """Value of the curve at phase s (clamped to [0, 1])."""
    ctrl = np.atleast_2d(ctrl)
    sc = min(max(float(s), 0.0), 1.0)
    return ctrl @ bernstein_basis(sc)


def eval_bezier_deriv(ctrl: np.ndarray, s: float) -> np.ndarray:
    """d/ds of the curve; zero outside [0, 1] (constant extrapolation)."""
    ctrl = np.atleast_2d(ctrl)
    if s < 0.0 or s > 1.0:
        return np.zeros(ctrl.shape[0])
    diff = DEGREE * np.diff(ctrl, axis=1)
    k = np.arange(DEGREE)
    binom4 = np.array([1.0, 4.0, 6.0, 4.0, 1.0])
    basis = binom4 * s**k * (1.0 - s) ** (DEGREE - 1 - k)
    return diff @ basis


def eval_bezier_deriv2(ctrl: np.ndarray, s: float) -> np.ndarray:
    """d^2/ds^2 of the curve; zero outside [0, 1]."""
    ctrl = np.atleast_2d(ctrl)
    if s < 0.0 or s > 1.0:
        return np.zeros(ctrl.shape[0])
    diff2 = DEGREE * (DEGREE - 1) * np.diff(ctrl, n=2, axis=1)
    k = np.arange(DEGREE - 1)
    binom3 = np.array([1.0, 3.0, 3.0, 1.0])
    basis = binom3 * s**k * (1.0 - s) ** (DEGREE - 2 - k)
    return diff2 @ basis


def fit_bezier(s_samples: np.ndarray, values: np.ndarray, cond_limit: float = 1e10) -> np.ndarray:
    """Least-squares degree-5 fit.

    s_samples: (k,) phases in [0, 1]; values: (m, k) samples per channel.
    Returns (m, 6) control points minimizing the sum of squared residuals.
    Raises RankDeficientFit when the Bernstein design matrix is numerically
    rank deficient (e.g. fewer than six distinct phases, clustered samples).
    """
    s_samples = np.asarray(s_samples, dtype=float)
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if s_samples.ndim != 1 or s_samples.size < NUM_CTRL:
        raise RankDeficientFit(f"need at least {NUM_CTRL} samples, got {s_samples.size}")
    design = np.vstack([bernstein_basis(s) for s in s_samples])
    if np.linalg.cond(design) > cond_limit:
        raise RankDeficientFit("Bernstein design matrix condition exceeds limit")
    sol, *_ = np.linalg.lstsq(design, values.T, rcond=None)
    return sol.T
