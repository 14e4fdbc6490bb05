"""Backward/forward Riccati recursion for the LQ optimal control problem.

Backward sweep, for k = N-1 down to 0 with P_N = Q_N, p_N = q_N:

    R_e = R_k + B'P_{k+1}B
    K_k = -R_e^{-1} (S_k + B'P_{k+1}A)
    P_k = Q_k + A'P_{k+1}A - K_k'R_e K_k
    k_k = -R_e^{-1} (r_k + B'(P_{k+1}b_k + p_{k+1}))
    p_k = q_k + A'(P_{k+1}b_k + p_{k+1}) - K_k'R_e k_k

followed by the forward rollout u_k = K_k x_k + k_k.  R_e is factorized once
per stage by Cholesky and reused for K_k and k_k.

The three quadratic forms (A'PA, B'PA, B'PB) are supplied by an injected
provider so the same recursion runs with dense matrices or with the
Brunovsky copy kernels.  The dense provider exploits symmetry of P: split
P = Pi + Pi' with Pi lower triangular, multiply with trmm, and complete the
symmetric part, which trims the leading cubic term versus plain products.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np
import scipy.linalg as la
from scipy.linalg import blas as _blas, lapack as _lapack

from .lqocp import LqOcpProblem, Trajectory

P_SYMMETRY_RTOL = 1e-10


class FactorizationError(RuntimeError):
    """Cholesky of R_e failed; positive-definiteness assumptions violated."""

    def __init__(self, stage: int, message: str | None = None):
        self.stage = stage
        super().__init__(message or f"R_e not positive definite at stage {stage}")


class QuadraticsProvider(Protocol):
    def quad(self, P: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (A'PA, B'PA, B'PB) for a symmetric P."""


class DenseQuadratics:
    """Symmetry-exploiting dense evaluation of (A'PA, B'PA, B'PB)."""

    def __init__(self, A, B):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self._diag = np.arange(self.A.shape[0])

    def quad(self, P: np.ndarray):
        A, B = self.A, self.B
        Pi = np.tril(P)
        Pi[self._diag, self._diag] *= 0.5
        W = _blas.dtrmm(1.0, Pi, A, lower=1)
        U = _blas.dtrmm(1.0, Pi, B, lower=1)
        M = A.T @ W
        AtPA = M + M.T
        BtPA = B.T @ W + U.T @ A
        V = B.T @ U
        BtPB = V + V.T
        return AtPA, BtPA, BtPB


@dataclass(frozen=True)
class RiccatiBackwardResult:
    """Gains and offsets of the backward sweep; cost-to-go kept on request."""

    K: np.ndarray                    # (N, n_u, n_x)
    k: np.ndarray                    # (N, n_u)
    P: np.ndarray | None = None      # (N+1, n_x, n_x) when stored
    p: np.ndarray | None = None      # (N+1, n_x)
    Re_chol: np.ndarray | None = None  # (N, n_u, n_u) lower Cholesky factors


def backward_pass(
    problem: LqOcpProblem,
    quad_kernel: QuadraticsProvider,
    store_cost_to_go: bool = False,
    keep_factors: bool = False,
) -> RiccatiBackwardResult:
    """Run the backward sweep with the given quadratics provider.

    Each P_k is re-symmetrized as (X + X')/2 after its update.  Raises
    :class:`FactorizationError` with the failing stage index if any R_e
    loses positive definiteness.  With ``keep_factors`` the cost-to-go
    matrices and the R_e Cholesky factors are retained so the offset terms
    can later be recomputed for new linear data (see :func:`offset_pass`).
    """
    A, B = problem.A, problem.B
    n, m, N = problem.n_x, problem.n_u, problem.N
    Q, R, S = problem.Q, problem.R, problem.S
    q, r, b = problem.q, problem.r, problem.b

    store_P = store_cost_to_go or keep_factors
    Ks = np.empty((N, m, n))
    ks = np.empty((N, m))
    Ps = np.empty((N + 1, n, n)) if store_P else None
    ps = np.empty((N + 1, n)) if store_cost_to_go else None
    chols = np.empty((N, m, m)) if keep_factors else None

    P = 0.5 * (problem.Q_N + problem.Q_N.T)
    p = problem.q_N.copy()
    if store_P:
        Ps[N] = P
    if store_cost_to_go:
        ps[N] = p
    for k in range(N - 1, -1, -1):
        AtPA, BtPA, BtPB = quad_kernel.quad(P)
        Re = R[k] + BtPB
        c, info = _lapack.dpotrf(Re, lower=1)
        if info != 0:
            raise FactorizationError(k)
        Gk = S[k] + BtPA
        K, info = _lapack.dpotrs(c, -Gk, lower=1)
        if info != 0:
            raise FactorizationError(k)
        Pb = P @ b[k] + p
        h = r[k] + B.T @ Pb
        kk, info = _lapack.dpotrs(c, -h, lower=1)
        if info != 0:
            raise FactorizationError(k)
        # K'R_e K = -G'K since R_e K = -G
        Pnew = Q[k] + AtPA
        Pnew += Gk.T @ K
        P = 0.5 * (Pnew + Pnew.T)
        p = q[k] + A.T @ Pb + Gk.T @ kk
        Ks[k] = K
        ks[k] = kk
        if store_P:
            Ps[k] = P
        if store_cost_to_go:
            ps[k] = p
        if keep_factors:
            chols[k] = c
    return RiccatiBackwardResult(K=Ks, k=ks, P=Ps, p=ps, Re_chol=chols)


def offset_pass(problem: LqOcpProblem, br: RiccatiBackwardResult) -> np.ndarray:
    """Recompute the feedforward offsets k_k for new linear data.

    The gains, cost-to-go matrices and R_e factorizations depend only on the
    quadratic data (Q, R, S, A, B), so when just q, r, b, q_N change the
    offsets follow from a single O(N n^2) sweep reusing ``br`` (which must
    have been produced with ``keep_factors=True``).
    """
    if br.P is None or br.Re_chol is None:
        raise ValueError("offset_pass needs a result built with keep_factors=True")
    A, B = problem.A, problem.B
    N, m = problem.N, problem.n_u
    ks = np.empty((N, m))
    p = problem.q_N.copy()
    for k in range(N - 1, -1, -1):
        Pb = br.P[k + 1] @ problem.b[k] + p
        h = problem.r[k] + B.T @ Pb
        kk, info = _lapack.dpotrs(br.Re_chol[k], -h, lower=1)
        if info != 0:
            raise FactorizationError(k)
        p = problem.q[k] + A.T @ Pb + br.K[k].T @ h
        ks[k] = kk
    return ks


def forward_pass(
    problem: LqOcpProblem,
    br: RiccatiBackwardResult,
    coordinates: str = "original",
) -> Trajectory:
    """Roll the closed loop u_k = K_k x_k + k_k forward from problem.x0."""
    A, B, b = problem.A, problem.B, problem.b
    N = problem.N
    xs = np.empty((N + 1, problem.n_x))
    us = np.empty((N, problem.n_u))
    xs[0] = problem.x0
    for k in range(N):
        us[k] = br.K[k] @ xs[k] + br.k[k]
        xs[k + 1] = A @ xs[k] + B @ us[k] + b[k]
    return Trajectory(states=xs, inputs=us, coordinates=coordinates)


def solve_classical(problem: LqOcpProblem, store_cost_to_go: bool = False) -> Trajectory:
    """Solve the problem with the dense-quadratics Riccati recursion."""
    br = backward_pass(problem, DenseQuadratics(problem.A, problem.B),
                       store_cost_to_go=store_cost_to_go)
    return forward_pass(problem, br)
