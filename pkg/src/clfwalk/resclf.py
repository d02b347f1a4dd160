"""Rapidly exponentially stabilizing CLF built from a Lyapunov equation.

V_eps(eta) = eta^T P_eps eta with P_eps = diag(I/eps, I) P diag(I/eps, I),
where A^T P + P A = -Q for the Hurwitz matrix A = [[0, I], [-KP, -KD]].
The controller layer consumes psi0/psi1 so that the CLF decrease condition
is exactly psi0 + psi1^T mu <= 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadEpsilon, NotHurwitz, SolveFailed

HURWITZ_MARGIN = -1e-12
LYAP_REL_TOL = 1e-10


def transverse_FG(m: int):
    """The constant (F, G) of the transverse dynamics etadot = F eta + G mu."""
    F = np.zeros((2 * m, 2 * m))
    F[:m, m:] = np.eye(m)
    G = np.zeros((2 * m, m))
    G[m:, :] = np.eye(m)
    return F, G


@dataclass(frozen=True)
class RESCLF:
    P: np.ndarray
    Peps: np.ndarray
    eps: float
    c1: float  # lambda_min(P)
    c2: float  # lambda_max(P)
    c3: float  # lambda_min(Q) / lambda_max(P)
    Q: np.ndarray
    A: np.ndarray

    @property
    def m(self) -> int:
        return self.P.shape[0] // 2


@dataclass(frozen=True)
class PsiPair:
    psi0: float
    psi1: np.ndarray  # length m


def solve_lyapunov(A: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """Solve A^T P + P A = -Q for symmetric PD P.

    Uses the vectorized Kronecker-structured linear system; sizes here are
    at most 8x8 so a direct dense solve suffices.
    """
    A = np.asarray(A, dtype=float)
    Q = np.asarray(Q, dtype=float)
    n = A.shape[0]
    eigs = np.linalg.eigvals(A)
    if np.max(eigs.real) >= HURWITZ_MARGIN:
        raise NotHurwitz(f"max eigenvalue real part {np.max(eigs.real):.3e}")
    I = np.eye(n)
    M = np.kron(I, A.T) + np.kron(A.T, I)
    P = np.linalg.solve(M, -Q.reshape(-1)).reshape(n, n)
    P = 0.5 * (P + P.T)
    residual = np.abs(A.T @ P + P @ A + Q).max()
    if residual >= LYAP_REL_TOL * np.abs(Q).max():
        raise SolveFailed(f"Lyapunov residual {residual:.3e}")
    if np.min(np.linalg.eigvalsh(P)) <= 0:
        raise SolveFailed("Lyapunov solution not positive definite")
    return P


def build_resclf(KP: np.ndarray, KD: np.ndarray, Q: np.ndarray | None = None,
                 eps: float = 0.1) -> RESCLF:
    """Assemble the RES-CLF certificate from PD gains and a PD weight Q.

    Q defaults to the identity.  c1, c2 are the extreme eigenvalues of P;
    c3 = lambda_min(Q) / lambda_max(P), so the enforced decay rate is c3/eps.
    """
    if not 0.0 < eps < 1.0:
        raise BadEpsilon(f"eps={eps} outside (0, 1)")
    KP = np.atleast_2d(np.asarray(KP, dtype=float))
    KD = np.atleast_2d(np.asarray(KD, dtype=float))
    m = KP.shape[0]
    if Q is None:
        Q = np.eye(2 * m)
    Q = np.asarray(Q, dtype=float)
    A = np.zeros((2 * m, 2 * m))
    A[:m, m:] = np.eye(m)
    A[m:, :m] = -KP
    A[m:, m:] = -KD
    P = solve_lyapunov(A, Q)
    S = np.diag(np.concatenate([np.full(m, 1.0 / eps), np.ones(m)]))
    Peps = S @ P @ S
    Peps = 0.5 * (Peps + Peps.T)
    eigP = np.linalg.eigvalsh(P)
    c1, c2 = float(eigP[0]), float(eigP[-1])
    c3 = float(np.min(np.linalg.eigvalsh(Q)) / c2)
    return RESCLF(P=P, Peps=Peps, eps=eps, c1=c1, c2=c2, c3=c3, Q=Q, A=A)


def eval_V(clf: RESCLF, eta: np.ndarray) -> float:
    """V_eps(eta) = eta^T P_eps eta."""
    eta = np.asarray(eta, dtype=float)
    return float(eta @ clf.Peps @ eta)


def eval_psi(clf: RESCLF, eta: np.ndarray) -> PsiPair:
    """psi0 = LfV + (c3/eps) V and psi1 = (LgV)^T for the transverse dynamics."""
    eta = np.asarray(eta, dtype=float)
    m = clf.m
    F, G = transverse_FG(m)
    LfV = float(eta @ (F.T @ clf.Peps + clf.Peps @ F) @ eta)
    psi1 = 2.0 * (G.T @ clf.Peps @ eta)
    psi0 = LfV + (clf.c3 / clf.eps) * eval_V(clf, eta)
    return PsiPair(psi0=psi0, psi1=psi1)


def convergence_envelope(clf: RESCLF, t: float, eta0_norm: float) -> float:
    """Guaranteed bound on ||eta(t)|| for any controller meeting the CLF condition."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return (1.0 / clf.eps) * np.sqrt(clf.c2 / clf.c1) * np.exp(-clf.c3 * t / (2.0 * clf.eps)) * eta0_norm
