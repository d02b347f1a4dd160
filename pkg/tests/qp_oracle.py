"""Brute-force QP oracle: enumerate every active set and solve its KKT system.

Exponential in the constraint count, so only usable for the small problem
sizes the library targets — which is exactly why it works as an
independent check of the interior-point solver.
"""

from itertools import combinations

import numpy as np

FEAS_TOL = 1e-9
DUAL_TOL = 1e-9


def solve_oracle(H, f, G, h):
    """Return (x, obj, active_set) of the global optimum, or None if infeasible.

    Minimizes 0.5 x^T H x + f^T x subject to G x <= h by checking the KKT
    conditions of every candidate active set.
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    f = np.atleast_1d(np.asarray(f, dtype=float))
    G = np.asarray(G, dtype=float).reshape(-1, H.shape[0])
    h = np.atleast_1d(np.asarray(h, dtype=float))
    nv, nc = H.shape[0], G.shape[0]

    best = None
    for k in range(min(nv, nc) + 1):
        for active in combinations(range(nc), k):
            A = G[list(active)]
            KKT = np.block([[H, A.T], [A, np.zeros((k, k))]])
            rhs = np.concatenate([-f, h[list(active)]])
            try:
                sol = np.linalg.solve(KKT, rhs)
            except np.linalg.LinAlgError:
                continue
            x, lam = sol[:nv], sol[nv:]
            if np.any(lam < -DUAL_TOL):
                continue
            if np.any(G @ x - h > FEAS_TOL * (1.0 + np.abs(h))):
                continue
            obj = float(0.5 * x @ H @ x + f @ x)
            if best is None or obj < best[1] - 1e-12:
                best = (x, obj, active)
    return best


def is_feasible(G, h, tol=1e-7):
    """Phase-1 LP via the oracle trick: minimize slack norm with an identity QP."""
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    nv = G.shape[1]
    res = solve_oracle(np.eye(nv), np.zeros(nv), G, h)
    if res is not None:
        return True
    # quadratic distance-to-feasibility in (x, slack) space
    nc = G.shape[0]
    H2 = np.zeros((nv + nc, nv + nc))
    H2[nv:, nv:] = np.eye(nc)
    G2 = np.hstack([G, -np.eye(nc)])
    res2 = solve_oracle(H2, np.zeros(nv + nc), G2, h)
    if res2 is None:
        return False
    return bool(np.linalg.norm(res2[0][nv:]) <= tol)
