"""Iteration-capped dense convex QP solver for small problems.

    minimize    0.5 x^T H x + f^T x
    subject to  Gineq x <= h

Sizes are bounded (nv <= 10, nc <= 25) and each solve must fit a
sub-millisecond budget, so the solver is a fixed-size Mehrotra
predictor-corrector interior point with a hard iteration cap.  On hitting
the cap it returns the best (least-merit) iterate with an explicit
MaxIterations status rather than raising: the controller layer has a
defined fallback and the event is logged.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

MAX_NV = 10
MAX_NC = 25
DEFAULT_TOL = 1e-7
DEFAULT_MAX_ITER = 20
REGULARIZATION = 1e-9  # Tikhonov delta on H; keeps rank-1 curvature solvable


class QPStatus(enum.Enum):
    Optimal = "Optimal"
    MaxIterations = "MaxIterations"
    Infeasible = "Infeasible"


@dataclass(frozen=True)
class QPProblem:
    H: np.ndarray
    f: np.ndarray
    Gineq: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        f = np.atleast_1d(np.asarray(self.f, dtype=float))
        Gineq = np.asarray(self.Gineq, dtype=float).reshape(-1, H.shape[0])
        h = np.atleast_1d(np.asarray(self.h, dtype=float))
        nv, nc = H.shape[0], Gineq.shape[0]
        if nv > MAX_NV or nc > MAX_NC:
            raise ValueError(f"problem size ({nv}, {nc}) exceeds fixed-size regime")
        scale = max(np.abs(H).max(), 1.0)
        if np.abs(H - H.T).max() > 1e-12 * scale:
            raise ValueError("H must be symmetric")
        if np.min(np.linalg.eigvalsh(0.5 * (H + H.T))) < -1e-10 * scale:
            raise ValueError("H must be positive semidefinite up to roundoff")
        if h.shape != (nc,):
            raise ValueError("h length must match constraint count")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "Gineq", Gineq)
        object.__setattr__(self, "h", h)

    @property
    def nv(self) -> int:
        return self.H.shape[0]

    @property
    def nc(self) -> int:
        return self.Gineq.shape[0]


@dataclass(frozen=True)
class QPSolution:
    x: np.ndarray
    status: QPStatus
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    z: np.ndarray  # inequality multipliers (>= 0)


def kkt_residual(prob: QPProblem, x: np.ndarray, lam: np.ndarray):
    """(primal, dual, complementarity) infinity-norm residuals at (x, lam)."""
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    slack = prob.Gineq @ x - prob.h if prob.nc else np.zeros(0)
    primal = float(np.max(np.maximum(slack, 0.0), initial=0.0))
    dual_vec = prob.H @ x + prob.f
    if prob.nc:
        dual_vec = dual_vec + prob.Gineq.T @ lam
    dual = float(np.abs(dual_vec).max())
    comp = float(np.max(np.abs(lam * slack), initial=0.0))
    return primal, dual, comp


class QPSolver:
    """Owns a mutable per-dimension workspace; single-threaded by contract."""

    def __init__(self):
        self._workspace = {}
        self.workspace_allocations = 0

    def _ws(self, nv, nc):
        key = (nv, nc)
        ws = self._workspace.get(key)
        if ws is None:
            ws = {
                "K": np.empty((nv, nv)),
                "W": np.empty(nc),
                "rhs": np.empty(nv),
            }
            self._workspace[key] = ws
            self.workspace_allocations += 1
        return ws

    def solve(self, prob: QPProblem, max_iter: int = DEFAULT_MAX_ITER,
              tol: float = DEFAULT_TOL, debug_csv=None) -> QPSolution:
        if max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if tol <= 0:
            raise ValueError("tol must be positive")
        nv, nc = prob.nv, prob.nc
        H = prob.H + REGULARIZATION * np.eye(nv)
        f, G, h = prob.f, prob.Gineq, prob.h

        if nc == 0:
            x = np.linalg.solve(H, -f)
            _, rd, _ = kkt_residual(prob, x, np.zeros(0))
            return QPSolution(x=x, status=QPStatus.Optimal, iterations=0,
                              primal_residual=0.0, dual_residual=rd, gap=0.0,
                              z=np.zeros(0))

        ws = self._ws(nv, nc)
        debug_rows = [] if debug_csv is not None else None
        GT = np.ascontiguousarray(G.T)

        x = np.linalg.solve(H, -f)
        s = np.maximum(h - G @ x, 1.0)
        z = np.ones(nc)

        best_x, best_z = x.copy(), z.copy()
        best_merit = np.inf
        best_res = (np.inf, np.inf, np.inf)
        status = QPStatus.MaxIterations
        iters_used = 0

        def residuals(x, s, z):
            rd = H @ x + f + GT @ z
            rp = G @ x + s - h
            gap = float(s @ z) / nc
            return rd, rp, gap

        for it in range(1, max_iter + 1):
            iters_used = it
            rd, rp, gap = residuals(x, s, z)
            viol = float(np.max(np.maximum(G @ x - h, 0.0), initial=0.0))
            rd_inf = float(np.abs(rd).max())
            merit = max(rd_inf, viol, gap)
            if debug_rows is not None:
                debug_rows.append((it, viol, rd_inf, gap, merit))
            if merit < best_merit:
                best_merit = merit
                best_x[:] = x
                best_z[:] = z
                best_res = (viol, rd_inf, gap)
            if viol <= tol and rd_inf <= tol and gap <= tol:
                status = QPStatus.Optimal
                break

            # Farkas infeasibility certificate: any z >= 0 with G^T z = 0 and
            # h^T z < 0 proves Gx <= h has no solution.  The blown-up
            # multipliers of an infeasible instance supply one; demand it at
            # tight tolerance so near-feasible problems cannot false-positive.
            znorm = float(np.abs(z).sum())
            if znorm > 1e4:
                zbar = z / znorm
                cert_tol = 1e-8 * max(1.0, float(np.abs(G).max()))
                if np.abs(GT @ zbar).max() < cert_tol and h @ zbar < -1e-6:
                    status = QPStatus.Infeasible
                    break

            W = ws["W"]
            np.divide(z, s, out=W)
            # cap the scaling weights: once a slack collapses to the floor the
            # ratio overflows and the normal equations stop being representable
            np.minimum(W, 1e14, out=W)
            K = ws["K"]
            np.dot(GT * W, G, out=K)
            K += H
            reg = 1e-10
            while True:
                try:
                    chol = cho_factor(K, lower=True, check_finite=False)
                    break
                except np.linalg.LinAlgError:
                    K += reg * np.abs(K).max() * np.eye(nv)
                    reg *= 100.0

            def kkt_solve(rd_, rp_, rc_):
                # eliminate ds and dz; rc_ is the target for S z perturbation
                tmp = (z * rp_ - rc_) / s
                dx = cho_solve(chol, -(rd_ + GT @ tmp), check_finite=False)
                ds = -rp_ - G @ dx
                dz = (-rc_ - z * ds) / s
                return dx, ds, dz

            mu = gap
            # predictor
            rc_aff = s * z
            dx_a, ds_a, dz_a = kkt_solve(rd, rp, rc_aff)
            alpha_p = _max_step(s, ds_a)
            alpha_d = _max_step(z, dz_a)
            alpha_aff = min(alpha_p, alpha_d)
            mu_aff = float((s + alpha_aff * ds_a) @ (z + alpha_aff * dz_a)) / nc
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
            # corrector
            rc = s * z + ds_a * dz_a - sigma * mu
            dx, ds, dz = kkt_solve(rd, rp, rc)
            # fraction-to-boundary step; merit may transiently rise while the
            # multipliers grow toward their optimal scale, so no backtracking —
            # the best-iterate bookkeeping above covers the iteration-cap exit
            alpha = min(0.99 * min(_max_step(s, ds), _max_step(z, dz)), 1.0)
            x = x + alpha * dx
            s = np.maximum(s + alpha * ds, 1e-300)
            z = np.maximum(z + alpha * dz, 1e-300)

        if status is QPStatus.Optimal:
            out_x, out_z = x, z
            viol = float(np.max(np.maximum(G @ out_x - h, 0.0), initial=0.0))
            rd, rp, gap = residuals(out_x, s, out_z)
            res = (viol, float(np.abs(rd).max()), gap)
        else:
            out_x, out_z = best_x, best_z
            res = best_res

        if debug_rows is not None:
            with open(debug_csv, "w") as fh:
                fh.write("iter,primal,dual,gap,merit\n")
                for row in debug_rows:
                    fh.write("%d,%.16e,%.16e,%.16e,%.16e\n" % row)

        return QPSolution(x=out_x.copy(), status=status, iterations=iters_used,
                          primal_residual=res[0], dual_residual=res[1], gap=res[2],
                          z=np.maximum(out_z, 0.0))


def _max_step(v, dv):
    """Largest alpha in (0, 1] with v + alpha dv >= 0."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


_default_solver = QPSolver()


def solve_qp(prob: QPProblem, max_iter: int = DEFAULT_MAX_ITER,
             tol: float = DEFAULT_TOL, debug_csv=None) -> QPSolution:
    """Solve with a module-level solver instance (single-threaded use)."""
    return _default_solver.solve(prob, max_iter=max_iter, tol=tol, debug_csv=debug_csv)
