"""Kalman controllability decomposition via the staircase algorithm.

An orthogonal change of state coordinates T splits any LTI pair (A, B) into
a controllable leading block and an uncontrollable trailing block:

    T A T' = [[A_co, A_12],     T B = [[B_co],
              [0,    A_uc]]            [0   ]]

The construction works one block column at a time: an orthogonal transform
rotates the range of the current input block into the leading coordinates,
the achieved rank (decided from singular values) advances the frontier, and
the process repeats on the subdiagonal block it exposes.  The accumulated T
is a product of Householder reflectors and therefore orthogonal to machine
precision; the transformed [B_co, A_co] is block Hessenberg (staircase).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
from scipy.linalg import lapack as _lapack

DEFAULT_RANK_TOL = 1e-9


class ControllabilityError(RuntimeError):
    """The greedy index search could not reach the controllable dimension."""


@dataclass(frozen=True)
class KalmanDecomposition:
    """Orthogonal T_kd and the partitioned blocks it produces."""

    T_kd: np.ndarray          # (n_x, n_x), orthogonal
    A_co: np.ndarray          # (n_c, n_c)
    A_12: np.ndarray          # (n_c, n_uc)
    A_uc: np.ndarray          # (n_uc, n_uc)
    B_co: np.ndarray          # (n_c, n_u)
    n_controllable: int
    step_ranks: tuple[int, ...] = ()

    @property
    def n_uncontrollable(self) -> int:
        return self.A_uc.shape[0]


def _svd_rank_basis(M: np.ndarray, rank_tol: float):
    """Rank of M by singular values and an orthonormal basis of its range."""
    if M.size == 0:
        return 0, None
    U, s, _ = np.linalg.svd(M, full_matrices=False)
    if s.size == 0 or s[0] <= 0.0:
        return 0, None
    r = int(np.count_nonzero(s > rank_tol * s[0]))
    return r, np.array(U[:, :r], order="F")


def staircase_decompose(A, B, rank_tol: float = DEFAULT_RANK_TOL) -> KalmanDecomposition:
    """Orthogonal Kalman decomposition of (A, B).

    Rank decisions use singular values: rank = #{sigma_i > rank_tol * sigma_max}
    of the block under test.  B = 0 legitimately yields n_controllable = 0.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    n = A.shape[0]
    if B.ndim != 2 or B.shape[0] != n:
        raise ValueError(f"B must have {n} rows, got shape {B.shape}")

    # always copy: a (n, 1) input is both C- and F-contiguous and would
    # otherwise alias the caller's array, which the loop mutates
    Aw = np.array(A, dtype=float, order="F")
    Bw = np.array(B, dtype=float, order="F")
    Tw = np.asfortranarray(np.eye(n))
    rho = 0
    prev: slice | None = None
    ranks: list[int] = []
    while rho < n:
        M = Bw[rho:, :] if prev is None else Aw[rho:, prev]
        r, Ur = _svd_rank_basis(np.ascontiguousarray(M), rank_tol)
        if r == 0:
            break
        # orient each basis vector so its dominant entry is positive, then
        # reduce with Householder reflectors; the sign fix below keeps the
        # overall transform orientation-free (already-staircase inputs map
        # to T = I exactly)
        piv = np.argmax(np.abs(Ur), axis=0)
        flip = Ur[piv, np.arange(r)] < 0
        Ur[:, flip] = -Ur[:, flip]
        (qr, tau), _ = la.qr(Ur, mode="raw")
        dsign = np.sign(np.diagonal(qr)[:r])
        dsign[dsign == 0] = 1.0

        lwork = int(_lapack.dormqr("L", "T", qr, tau, np.asfortranarray(Aw[rho:, :]), -1)[1][0])
        Aw[rho:, :], _, info1 = _lapack.dormqr("L", "T", qr, tau, np.asfortranarray(Aw[rho:, :]), lwork)
        Bw[rho:, :], _, info2 = _lapack.dormqr("L", "T", qr, tau, np.asfortranarray(Bw[rho:, :]), lwork)
        Tw[rho:, :], _, info3 = _lapack.dormqr("L", "T", qr, tau, np.asfortranarray(Tw[rho:, :]), lwork)
        Aw[:, rho:], _, info4 = _lapack.dormqr("R", "N", qr, tau, np.asfortranarray(Aw[:, rho:]), lwork)
        if info1 or info2 or info3 or info4:
            raise RuntimeError("orthogonal update failed in staircase step")
        neg = np.nonzero(dsign < 0)[0] + rho
        if neg.size:
            Aw[neg, :] *= -1.0
            Bw[neg, :] *= -1.0
            Tw[neg, :] *= -1.0
            Aw[:, neg] *= -1.0
        prev = slice(rho, rho + r)
        ranks.append(r)
        rho += r

    nc = rho
    return KalmanDecomposition(
        T_kd=np.ascontiguousarray(Tw),
        A_co=np.ascontiguousarray(Aw[:nc, :nc]),
        A_12=np.ascontiguousarray(Aw[:nc, nc:]),
        A_uc=np.ascontiguousarray(Aw[nc:, nc:]),
        B_co=np.ascontiguousarray(Bw[:nc, :]),
        n_controllable=nc,
        step_ranks=tuple(ranks),
    )


def controllability_rank(A, B, rank_tol: float = DEFAULT_RANK_TOL) -> int:
    """Rank of [B, AB, ..., A^(n-1)B] by singular values."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    n = A.shape[0]
    if n == 0:
        return 0
    blocks = [B]
    cur = B
    for _ in range(n - 1):
        cur = A @ cur
        blocks.append(cur)
    K = np.hstack(blocks)
    s = np.linalg.svd(K, compute_uv=False)
    if s.size == 0 or s[0] <= 0.0:
        return 0
    return int(np.count_nonzero(s > rank_tol * s[0]))


def controllability_indices(A_co, B_co, rank_tol: float = DEFAULT_RANK_TOL) -> np.ndarray:
    """Per-input controllability indices of a controllable pair.

    Columns of the controllability matrix are scanned in degree-major order
    b_1..b_m, A b_1..A b_m, ...; a column is accepted when its residual
    against the span of previously accepted columns exceeds
    rank_tol * ||column||.  mu_i counts the accepted columns of input i.
    Once a column of an input is rejected, so are all its higher powers,
    and the input is retired.  Inputs whose very first column is rejected
    (linearly dependent columns of B) end with mu_i = 0; such pairs are
    rejected later by the Brunovsky construction.

    Raises :class:`ControllabilityError` if the scan cannot reach full rank,
    which signals an uncontrollable pair or an unsuitable tolerance.
    """
    A = np.asarray(A_co, dtype=float)
    B = np.asarray(B_co, dtype=float)
    n = A.shape[0]
    m = B.shape[1]
    mu = np.zeros(m, dtype=int)
    if n == 0:
        return mu
    basis = np.zeros((n, n))
    rank = 0
    active = np.ones(m, dtype=bool)
    cur = B.copy()
    for deg in range(n):
        if rank == n or not active.any():
            break
        if deg > 0:
            cur = A @ cur
        cols = np.nonzero(active)[0]
        C = cur[:, cols]
        if rank > 0:
            Qb = basis[:, :rank]
            C = C - Qb @ (Qb.T @ C)
            C = C - Qb @ (Qb.T @ C)
        r0 = rank
        for j, i in enumerate(cols):
            if rank == n:
                active[i] = False
                continue
            c = C[:, j]
            if rank > r0:
                # remove components along columns accepted earlier this degree
                Qnew = basis[:, r0:rank]
                c = c - Qnew @ (Qnew.T @ c)
                c = c - Qnew @ (Qnew.T @ c)
            scale = np.linalg.norm(cur[:, i])
            nrm = np.linalg.norm(c)
            if scale > 0.0 and nrm > rank_tol * scale:
                basis[:, rank] = c / nrm
                rank += 1
                mu[i] += 1
            else:
                active[i] = False
    if rank < n:
        raise ControllabilityError(
            f"greedy column search reached rank {rank} < {n}; the pair is "
            f"uncontrollable under rank_tol={rank_tol:g}"
        )
    return mu
