"""Controlled Lagrangian mechanical systems with relative-degree-2 outputs.

Dynamics terms, output Lie derivatives, input-output linearization and the
transverse state eta = [y; ydot].  Everything here is a pure function of
its inputs; plants supply a `dynamics` callable returning (D, C*dq, G, B).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bezier
from .errors import NonFiniteDynamics, PhaseOutOfRange, SingularDecoupling, SingularInertia

DECOUPLING_COND_LIMIT = 1e8
PHASE_GUARD_FRACTION = 0.2


@dataclass(frozen=True)
class MechState:
    """Configuration q and velocity dq of a mechanical system."""

    q: np.ndarray
    dq: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.q, dtype=float)
        dq = np.asarray(self.dq, dtype=float)
        if q.shape != dq.shape or q.ndim != 1 or q.size < 2:
            raise ValueError("q and dq must be equal-length vectors with n >= 2")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(dq))):
            raise ValueError("state entries must be finite")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "dq", dq)

    @property
    def n(self) -> int:
        return self.q.size


@dataclass(frozen=True)
class DynamicsEval:
    D: np.ndarray      # n x n inertia
    Cdq: np.ndarray    # Coriolis term C(q,dq) dq
    Gvec: np.ndarray   # gravity term
    B: np.ndarray      # n x m input matrix


@dataclass(frozen=True)
class PlantModel:
    """Concrete plant: dimensions, parameters and a dynamics callable."""

    n: int
    m: int
    kind: str
    params: dict
    dynamics: Callable[[np.ndarray, np.ndarray], tuple] = field(compare=False)


@dataclass(frozen=True)
class OutputMap:
    """y(q) = H0 q - y_d(s(theta)), theta = c^T q, phase normalized over theta_range."""

    H0: np.ndarray            # m x n
    theta_coeffs: np.ndarray  # n
    yd: np.ndarray            # m x 6 Bezier control points
    theta_range: tuple        # (theta_minus, theta_plus)

    def __post_init__(self):
        lo, hi = self.theta_range
        if not lo < hi:
            raise ValueError("theta_range must satisfy theta_minus < theta_plus")

    @property
    def m(self) -> int:
        return self.H0.shape[0]

    @property
    def delta(self) -> float:
        return self.theta_range[1] - self.theta_range[0]


@dataclass(frozen=True)
class IOLinearization:
    Adec: np.ndarray   # m x m decoupling matrix Lg Lf y
    Lf2y: np.ndarray   # m
    ustar: np.ndarray  # feedforward torque keeping y'' = 0
    cond: float        # condition estimate of Adec


@dataclass(frozen=True)
class TransverseState:
    eta: np.ndarray  # [y; ydot], length 2m


def eval_dynamics(plant: PlantModel, x: MechState) -> DynamicsEval:
    """Evaluate D, C*dq, G, B at a state, with finiteness and PD checks."""
    if x.n != plant.n:
        raise ValueError(f"state dimension {x.n} != plant dimension {plant.n}")
    D, Cdq, Gvec, B = plant.dynamics(x.q, x.dq)
    D = np.asarray(D, dtype=float)
    Cdq = np.asarray(Cdq, dtype=float)
    Gvec = np.asarray(Gvec, dtype=float)
    B = np.asarray(B, dtype=float)
    for name, arr in (("D", D), ("Cdq", Cdq), ("G", Gvec), ("B", B)):
        if not np.all(np.isfinite(arr)):
            raise NonFiniteDynamics(f"non-finite entries in {name}")
    scale = max(np.abs(D).max(), 1e-300)
    if np.abs(D - D.T).max() > 1e-10 * scale:
        raise SingularInertia("inertia matrix not symmetric")
    try:
        np.linalg.cholesky(D)
    except np.linalg.LinAlgError:
        raise SingularInertia("inertia matrix not positive definite") from None
    return DynamicsEval(D=D, Cdq=Cdq, Gvec=Gvec, B=B)


def accel(plant: PlantModel, x: MechState, u: np.ndarray) -> np.ndarray:
    """qddot = D^{-1} (B u - C dq - G)."""
    dyn = eval_dynamics(plant, x)
    u = np.asarray(u, dtype=float)
    return np.linalg.solve(dyn.D, dyn.B @ u - dyn.Cdq - dyn.Gvec)


def _phase(outmap: OutputMap, x: MechState):
    theta = float(outmap.theta_coeffs @ x.q)
    thetadot = float(outmap.theta_coeffs @ x.dq)
    lo, hi = outmap.theta_range
    delta = hi - lo
    guard = PHASE_GUARD_FRACTION * delta
    if theta < lo - guard or theta > hi + guard:
        raise PhaseOutOfRange(f"theta={theta:.4f} outside guarded [{lo - guard:.4f}, {hi + guard:.4f}]")
    s = (theta - lo) / delta
    return theta, thetadot, s


def eval_outputs(outmap: OutputMap, x: MechState):
    """Return (y, ydot, theta, thetadot) at a state."""
    theta, thetadot, s = _phase(outmap, x)
    y = outmap.H0 @ x.q - bezier.eval_bezier(outmap.yd, s)
    ydot = outmap.H0 @ x.dq - bezier.eval_bezier_deriv(outmap.yd, s) * (thetadot / outmap.delta)
    return y, ydot, theta, thetadot


def io_linearize(plant: PlantModel, outmap: OutputMap, x: MechState) -> IOLinearization:
    """Decoupling matrix, drift of y'' and the feedforward torque u*."""
    dyn = eval_dynamics(plant, x)
    theta, thetadot, s = _phase(outmap, x)
    dyd = bezier.eval_bezier_deriv(outmap.yd, s)
    d2yd = bezier.eval_bezier_deriv2(outmap.yd, s)
    J = outmap.H0 - np.outer(dyd, outmap.theta_coeffs) / outmap.delta
    DinvB = np.linalg.solve(dyn.D, dyn.B)
    Dinv_drift = np.linalg.solve(dyn.D, -dyn.Cdq - dyn.Gvec)
    Adec = J @ DinvB
    Lf2y = J @ Dinv_drift - d2yd * (thetadot / outmap.delta) ** 2
    cond = float(np.linalg.cond(Adec))
    if not np.isfinite(cond) or cond >= DECOUPLING_COND_LIMIT:
        raise SingularDecoupling(f"decoupling matrix condition {cond:.3e} >= {DECOUPLING_COND_LIMIT:.0e}")
    ustar = -np.linalg.solve(Adec, Lf2y)
    return IOLinearization(Adec=Adec, Lf2y=Lf2y, ustar=ustar, cond=cond)


def transverse_state(outmap: OutputMap, x: MechState) -> TransverseState:
    """eta = [y; ydot]."""
    y, ydot, _, _ = eval_outputs(outmap, x)
    return TransverseState(eta=np.concatenate([y, ydot]))


def apply_precontrol(io: IOLinearization, mu: np.ndarray) -> np.ndarray:
    """u = u* + Adec^{-1} mu, which renders yddot = mu."""
    mu = np.asarray(mu, dtype=float)
    return io.ustar + np.linalg.solve(io.Adec, mu)
