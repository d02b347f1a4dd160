"""CLF controllers: closed-form pointwise min-norm, soft-saturation QP and
hard-saturation QP, plus dynamic torque bounds tracking a Bezier regression
of the feedforward torque along the nominal orbit.

All three controllers choose the auxiliary input mu; the applied torque is
u = u* + Adec^{-1} mu, so torque bounds constrain the total control input.
"""

from __future__ import annotations

import enum
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import bezier, mechsys, resclf
from .errors import PhaseOutOfRange
from .mechsys import IOLinearization, MechState, OutputMap, PlantModel
from .qpsolve import QPProblem, QPSolver, QPStatus
from .resclf import RESCLF, PsiPair

log = logging.getLogger(__name__)


class SaturationKind(enum.Enum):
    NONE = "none"
    CONSTANT = "constant"
    DYNAMIC = "dynamic"


class ControllerMode(enum.Enum):
    MIN_NORM = "min_norm"
    SOFT_QP = "soft_qp"
    HARD_QP = "hard_qp"


@dataclass(frozen=True)
class SaturationSpec:
    kind: SaturationKind
    umin: np.ndarray | None = None         # constant bounds
    umax: np.ndarray | None = None
    ustar_fit: np.ndarray | None = None    # m x 6 Bezier over normalized phase
    offsets_lo: np.ndarray | None = None   # dynamic: bounds = ustar_fit(s) + offsets
    offsets_hi: np.ndarray | None = None

    def __post_init__(self):
        if self.kind is SaturationKind.CONSTANT:
            if self.umin is None or self.umax is None:
                raise ValueError("constant saturation requires umin and umax")
            if not np.all(np.asarray(self.umin) < np.asarray(self.umax)):
                raise ValueError("umin must be componentwise below umax")
        if self.kind is SaturationKind.DYNAMIC:
            lo = np.asarray(self.offsets_lo)
            hi = np.asarray(self.offsets_hi)
            if self.ustar_fit is None:
                raise ValueError("dynamic saturation requires a ustar Bezier fit")
            if not np.all(lo < hi):
                raise ValueError("offsets_lo must be componentwise below offsets_hi")
            if not (np.all(lo <= 0.0) and np.all(hi >= 0.0)):
                raise ValueError("offsets must straddle zero so the nominal orbit is feasible")

    @staticmethod
    def none():
        return SaturationSpec(kind=SaturationKind.NONE)

    @staticmethod
    def constant(umin, umax):
        return SaturationSpec(kind=SaturationKind.CONSTANT,
                              umin=np.asarray(umin, dtype=float),
                              umax=np.asarray(umax, dtype=float))

    @staticmethod
    def dynamic(ustar_fit, offsets_lo, offsets_hi):
        return SaturationSpec(kind=SaturationKind.DYNAMIC,
                              ustar_fit=np.asarray(ustar_fit, dtype=float),
                              offsets_lo=np.asarray(offsets_lo, dtype=float),
                              offsets_hi=np.asarray(offsets_hi, dtype=float))


@dataclass(frozen=True)
class ControllerConfig:
    mode: ControllerMode
    clf: RESCLF
    sat: SaturationSpec = field(default_factory=SaturationSpec.none)
    p1: float = 50.0
    p2: float = 75.0
    qp_max_iter: int = 20
    qp_tol: float = 1e-7
    # reproduce the blind-clamp failure mode: clamp min-norm torque post hoc
    clamp_min_norm: bool = False

    def __post_init__(self):
        if self.mode is ControllerMode.SOFT_QP and not (self.p1 > 0 and self.p2 > 0):
            raise ValueError("soft QP requires p1 > 0 and p2 > 0")
        if self.mode is ControllerMode.HARD_QP and not self.p1 > 0:
            raise ValueError("hard QP requires p1 > 0")
        if self.mode is not ControllerMode.MIN_NORM and self.sat.kind is SaturationKind.NONE:
            raise ValueError("QP modes require a saturation specification")


@dataclass(frozen=True)
class ControlTickResult:
    u: np.ndarray
    mu: np.ndarray
    d1: float
    d2: np.ndarray
    d3: np.ndarray
    solver_status: str
    V: float
    Vdot_pred: float
    clamped: bool
    eta: np.ndarray
    ustar: np.ndarray
    umin: np.ndarray | None
    umax: np.ndarray | None
    solve_time_us: float
    qp_iterations: int


def min_norm_mu(psi: PsiPair) -> np.ndarray:
    """Closed-form pointwise min-norm input: smallest mu meeting the CLF bound."""
    psi1 = np.asarray(psi.psi1, dtype=float)
    if psi.psi0 <= 0.0:
        return np.zeros_like(psi1)
    denom = float(psi1 @ psi1)
    if denom < 1e-24:
        # theoretically excluded away from eta = 0; degrade to zero input.
        # at eta ~ 0 psi0 is roundoff-positive, which is not worth a warning
        if psi.psi0 > 1e-12:
            log.warning("degenerate CLF gradient: psi0=%.3e with ||psi1||~0", psi.psi0)
        return np.zeros_like(psi1)
    return -psi.psi0 * psi1 / denom


def resolve_bounds(sat: SaturationSpec, theta: float | None = None,
                   theta_range: tuple | None = None):
    """Concrete (umin, umax) for this tick, evaluating dynamic bounds at theta."""
    if sat.kind is SaturationKind.NONE:
        return None, None
    if sat.kind is SaturationKind.CONSTANT:
        return sat.umin, sat.umax
    if theta is None or theta_range is None:
        raise ValueError("dynamic bounds need the current phase")
    lo, hi = theta_range
    s = (theta - lo) / (hi - lo)
    base = bezier.eval_bezier(sat.ustar_fit, s)
    return base + sat.offsets_lo, base + sat.offsets_hi


def dynamic_bounds(sat: SaturationSpec, theta: float, theta_range: tuple):
    """(umin, umax) = ustar_fit(s(theta)) + (offsets_lo, offsets_hi)."""
    if sat.kind is not SaturationKind.DYNAMIC:
        raise ValueError("dynamic_bounds requires a Dynamic saturation spec")
    return resolve_bounds(sat, theta, theta_range)


def build_soft_qp(psi: PsiPair, io: IOLinearization, umin, umax,
                  p1: float, p2: float) -> QPProblem:
    """Eq-22-style QP: decision [mu(m); d1; d2(m); d3(m)], relaxable bounds."""
    m = io.Adec.shape[0]
    Ainv = np.linalg.inv(io.Adec)
    nv = 3 * m + 1
    H = np.zeros((nv, nv))
    H[:m, :m] = 2.0 * np.eye(m)
    H[m, m] = 2.0 * p1
    H[m + 1:2 * m + 1, m + 1:2 * m + 1] = 2.0 * p2 * np.eye(m)
    H[2 * m + 1:, 2 * m + 1:] = 2.0 * p2 * np.eye(m)
    f = np.zeros(nv)
    nc = 1 + 4 * m
    G = np.zeros((nc, nv))
    h = np.zeros(nc)
    # psi0 + psi1^T mu <= d1
    G[0, :m] = psi.psi1
    G[0, m] = -1.0
    h[0] = -psi.psi0
    # Ainv mu >= (umin - u*) - d2   =>  -Ainv mu - d2 <= -(umin - u*)
    G[1:m + 1, :m] = -Ainv
    G[1:m + 1, m + 1:2 * m + 1] = -np.eye(m)
    h[1:m + 1] = -(umin - io.ustar)
    # Ainv mu <= (umax - u*) + d3
    G[m + 1:2 * m + 1, :m] = Ainv
    G[m + 1:2 * m + 1, 2 * m + 1:] = -np.eye(m)
    h[m + 1:2 * m + 1] = umax - io.ustar
    # d2 >= 0, d3 >= 0
    G[2 * m + 1:3 * m + 1, m + 1:2 * m + 1] = -np.eye(m)
    G[3 * m + 1:, 2 * m + 1:] = -np.eye(m)
    return QPProblem(H=H, f=f, Gineq=G, h=h)


def build_hard_qp(psi: PsiPair, io: IOLinearization, umin, umax,
                  p1: float) -> QPProblem:
    """Eq-23-style QP: decision [mu(m); d1], torque bounds inviolable."""
    m = io.Adec.shape[0]
    Ainv = np.linalg.inv(io.Adec)
    nv = m + 1
    H = np.zeros((nv, nv))
    H[:m, :m] = 2.0 * np.eye(m)
    H[m, m] = 2.0 * p1
    f = np.zeros(nv)
    nc = 1 + 2 * m
    G = np.zeros((nc, nv))
    h = np.zeros(nc)
    G[0, :m] = psi.psi1
    G[0, m] = -1.0
    h[0] = -psi.psi0
    G[1:m + 1, :m] = -Ainv
    h[1:m + 1] = -(umin - io.ustar)
    G[m + 1:, :m] = Ainv
    h[m + 1:] = umax - io.ustar
    return QPProblem(H=H, f=f, Gineq=G, h=h)


def fit_bezier_ustar(theta_samples: np.ndarray, ustar_samples: np.ndarray,
                     theta_range: tuple) -> np.ndarray:
    """Least-squares degree-5 Bezier fit of u*(theta) over normalized phase."""
    theta_samples = np.asarray(theta_samples, dtype=float)
    diffs = np.diff(theta_samples)
    if theta_samples.size >= 2 and not (np.all(diffs > 0) or np.all(diffs < 0)):
        raise ValueError("theta samples must be strictly monotone")
    lo, hi = theta_range
    s = (theta_samples - lo) / (hi - lo)
    return bezier.fit_bezier(s, np.atleast_2d(ustar_samples))


def compute_control(cfg: ControllerConfig, plant: PlantModel, outmap: OutputMap,
                    x: MechState, solver: QPSolver | None = None) -> ControlTickResult:
    """One control tick: eta, V, psi, controller dispatch, diagnostics.

    On solver non-convergence the best iterate's mu is used; for the hard-QP
    mode the resulting torque is additionally clamped into the bounds and
    the tick flagged (isolated non-convergence is tolerated, not fatal).
    """
    io = mechsys.io_linearize(plant, outmap, x)
    y, ydot, theta, _ = mechsys.eval_outputs(outmap, x)
    eta = np.concatenate([y, ydot])
    clf = cfg.clf
    V = resclf.eval_V(clf, eta)
    psi = resclf.eval_psi(clf, eta)
    m = io.Adec.shape[0]
    umin, umax = resolve_bounds(cfg.sat, theta, outmap.theta_range)

    d1 = 0.0
    d2 = np.zeros(m)
    d3 = np.zeros(m)
    clamped = False
    status = "ClosedForm"
    iterations = 0
    t0 = time.perf_counter()

    if cfg.mode is ControllerMode.MIN_NORM:
        mu = min_norm_mu(psi)
        u = mechsys.apply_precontrol(io, mu)
        if cfg.clamp_min_norm and umin is not None:
            u_clamped = np.clip(u, umin, umax)
            if not np.array_equal(u_clamped, u):
                clamped = True
                u = u_clamped
                mu = io.Adec @ (u - io.ustar)
    else:
        if cfg.mode is ControllerMode.SOFT_QP:
            prob = build_soft_qp(psi, io, umin, umax, cfg.p1, cfg.p2)
        else:
            prob = build_hard_qp(psi, io, umin, umax, cfg.p1)
        if solver is None:
            solver = QPSolver()
        sol = solver.solve(prob, max_iter=cfg.qp_max_iter, tol=cfg.qp_tol)
        status = sol.status.value
        iterations = sol.iterations
        mu = sol.x[:m]
        d1 = float(sol.x[m])
        if cfg.mode is ControllerMode.SOFT_QP:
            d2 = sol.x[m + 1:2 * m + 1].copy()
            d3 = sol.x[2 * m + 1:].copy()
        u = mechsys.apply_precontrol(io, mu)
        if sol.status is not QPStatus.Optimal:
            clamped = True
            if cfg.mode is ControllerMode.HARD_QP:
                u = np.clip(u, umin, umax)
                mu = io.Adec @ (u - io.ustar)
        elif cfg.mode is ControllerMode.HARD_QP:
            # the box is inviolable; project away solver-tolerance dribble
            u = np.clip(u, umin, umax)

    solve_us = (time.perf_counter() - t0) * 1e6
    Vdot_pred = psi.psi0 - (clf.c3 / clf.eps) * V + float(psi.psi1 @ mu)
    return ControlTickResult(u=u, mu=mu, d1=d1, d2=d2, d3=d3, solver_status=status,
                             V=V, Vdot_pred=Vdot_pred, clamped=clamped, eta=eta,
                             ustar=io.ustar, umin=umin, umax=umax,
                             solve_time_us=solve_us, qp_iterations=iterations)
