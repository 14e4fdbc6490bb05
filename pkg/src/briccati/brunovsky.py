"""Feedback equivalence of controllable pairs to Brunovsky normal form.

Brunovsky form is the block-diagonal chain-of-integrators pair

    A_b = blkdiag(J_1, ..., J_m)      J_i = shift matrix of size mu_i
    B_b = blkdiag(e_1, ..., e_m)      e_i = last unit vector of size mu_i

parameterized only by the controllability indices mu.  Any controllable
(A_co, B_co) reaches it through a state similarity T, a state feedback F and
an input map G:

    A_b = T (A_co + B_co F) T^{-1}        B_b = T B_co G

The construction here goes through the multi-input controllable canonical
(companion) form: select n independent Krylov columns A^k b_i grouped by
input, build T_ca from the dual basis rows, then cancel the free companion
rows with u = F x + G v.  A deadbeat-first route (pick F nilpotent-izing
A_co + B_co F, then read T off the Jordan structure) does not in general
admit a valid G, so it is not used; the deadbeat property of F is still a
consequence and is checked in the tests.

Because A_b and B_b contain only exact zeros and ones, the quadratic forms
appearing in a Riccati recursion reduce to index-shifted copies of the
cost-to-go matrix P: A_b' P A_b shifts P down/right by one within each chain
pair, B_b' P A_b selects chain-last rows, and B_b' P B_b selects chain-last
rows and columns.  :func:`structured_quadratics` realizes all three with
pure memory copies, no floating-point arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .staircase import DEFAULT_RANK_TOL, controllability_indices

PATTERN_RTOL = 1e-9
INVERSE_RTOL = 1e-10


class RedundantInputError(ValueError):
    """Some controllability index is zero (linearly dependent B columns)."""


class PatternError(RuntimeError):
    """A computed matrix violates its required canonical sparsity pattern."""


@dataclass(frozen=True)
class BrunovskyTransform:
    """The triple (T_jo, F_db, G) of a feedback equivalence, with inverses."""

    mu: tuple[int, ...]
    T_jo: np.ndarray          # (n_c, n_c)
    T_jo_inv: np.ndarray      # explicit inverse
    F_db: np.ndarray          # (n_u, n_c) deadbeat gain
    G: np.ndarray             # (n_u, n_u)
    G_inv: np.ndarray

    @property
    def n(self) -> int:
        return self.T_jo.shape[0]

    @property
    def n_u(self) -> int:
        return len(self.mu)


@dataclass(frozen=True)
class StructuredQuadratics:
    """The triple (A'PA, B'PA, B'PB) assembled by copy kernels."""

    AtPA: np.ndarray
    BtPA: np.ndarray
    BtPB: np.ndarray


def _check_mu(mu) -> np.ndarray:
    mu = np.asarray(mu, dtype=int)
    if mu.ndim != 1 or mu.size == 0:
        raise ValueError("mu must be a non-empty 1-D list of indices")
    if (mu <= 0).any():
        raise RedundantInputError(
            f"all controllability indices must be >= 1, got {mu.tolist()}"
        )
    return mu


def brunovsky_pair(mu) -> tuple[np.ndarray, np.ndarray]:
    """Exact (A_b, B_b) for the given chain lengths; entries are 0 or 1."""
    mu = _check_mu(mu)
    n = int(mu.sum())
    m = mu.size
    A_b = np.zeros((n, n))
    B_b = np.zeros((n, m))
    off = 0
    for i, mi in enumerate(mu):
        for k in range(mi - 1):
            A_b[off + k, off + k + 1] = 1.0
        B_b[off + mi - 1, i] = 1.0
        off += mi
    return A_b, B_b


def _chain_offsets(mu: np.ndarray):
    offs = np.concatenate(([0], np.cumsum(mu)))
    last = offs[1:] - 1       # global index of each chain's last state
    return offs, last


def _krylov_selection(A, B, mu):
    """Columns [b_1, Ab_1, .., A^(mu_1-1)b_1 | b_2, ..] as one n x n matrix."""
    n = A.shape[0]
    m = B.shape[1]
    mu_max = int(mu.max())
    Msel = np.empty((n, n))
    offs, _ = _chain_offsets(mu)
    cur = B.copy()
    for deg in range(mu_max):
        if deg > 0:
            cur = A @ cur
        take = np.nonzero(mu > deg)[0]
        Msel[:, offs[take] + deg] = cur[:, take]
    return Msel


def to_controllable_canonical(A_co, B_co, mu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Transform a controllable pair to companion (controllable canonical) form.

    Returns (T_ca, A_ca, B_ca) with A_ca = T_ca A_co T_ca^{-1} and
    B_ca = T_ca B_co.  Structural zeros and ones of the companion pattern are
    verified to within PATTERN_RTOL * scale and then snapped exactly, so the
    only free entries left are the chain-last rows.
    """
    A = np.asarray(A_co, dtype=float)
    B = np.asarray(B_co, dtype=float)
    mu = _check_mu(mu)
    n = A.shape[0]
    m = B.shape[1]
    if int(mu.sum()) != n or mu.size != m:
        raise ValueError(f"indices {mu.tolist()} inconsistent with shapes ({n}, {m})")

    Msel = _krylov_selection(A, B, mu)
    try:
        lu_piv = la.lu_factor(Msel, check_finite=False)
    except la.LinAlgError as e:
        raise PatternError(f"singular Krylov selection matrix: {e}") from e
    offs, last = _chain_offsets(mu)
    E = np.zeros((n, m))
    E[last, np.arange(m)] = 1.0
    # rows q_i of Msel^{-1} at the chain-last positions
    Qrows = la.lu_solve(lu_piv, E, trans=1, check_finite=False).T

    # T_ca stacks q_i A^k for k = 0..mu_i-1, built degree by degree
    T_ca = np.empty((n, n))
    cur = Qrows.copy()
    mu_max = int(mu.max())
    for deg in range(mu_max):
        if deg > 0:
            cur = cur @ A
        put = np.nonzero(mu > deg)[0]
        T_ca[offs[put] + deg, :] = cur[put, :]

    try:
        luT = la.lu_factor(T_ca, check_finite=False)
    except la.LinAlgError as e:
        raise PatternError(f"singular T_ca: {e}") from e
    A_ca = la.lu_solve(luT, (T_ca @ A).T, trans=1, check_finite=False).T
    B_ca = T_ca @ B

    # verify the fixed zero/one pattern, then snap it exact
    scale_A = PATTERN_RTOL * (1.0 + np.linalg.norm(A_ca))
    scale_B = PATTERN_RTOL * (1.0 + np.linalg.norm(B_ca))
    fixed = np.ones(n, dtype=bool)
    fixed[last] = False       # chain-last rows are free
    idx_fixed = np.nonzero(fixed)[0]
    expected = np.zeros((idx_fixed.size, n))
    expected[np.arange(idx_fixed.size), idx_fixed + 1] = 1.0
    err_A = np.abs(A_ca[idx_fixed, :] - expected).max() if idx_fixed.size else 0.0
    err_B = np.abs(B_ca[idx_fixed, :]).max() if idx_fixed.size else 0.0
    V = B_ca[last, :]
    err_V = max(np.abs(np.diag(V) - 1.0).max(), np.abs(np.tril(V, -1)).max())
    if err_A > scale_A or err_B > scale_B or err_V > scale_B:
        cond = float(np.linalg.cond(T_ca))
        raise PatternError(
            f"companion pattern violated (errors A={err_A:.2e}, B={err_B:.2e}, "
            f"V={err_V:.2e}); T_ca condition estimate {cond:.2e}"
        )
    A_ca[idx_fixed, :] = expected
    B_ca[idx_fixed, :] = 0.0
    B_ca[last, np.arange(m)] = 1.0
    tri = np.tril_indices(m, -1)
    B_ca[last[tri[0]], tri[1]] = 0.0
    return T_ca, A_ca, B_ca


def canonical_to_brunovsky(A_ca, B_ca, mu) -> tuple[np.ndarray, np.ndarray]:
    """Feedback (F_ca, G) that cancels the free companion rows.

    With V the unit upper-triangular matrix of chain-last rows of B_ca and W
    the chain-last rows of A_ca:  G = V^{-1}, F_ca = -V^{-1} W, so that
    A_ca + B_ca F_ca = A_b(mu) and B_ca G = B_b(mu).
    """
    A_ca = np.asarray(A_ca, dtype=float)
    B_ca = np.asarray(B_ca, dtype=float)
    mu = _check_mu(mu)
    m = mu.size
    _, last = _chain_offsets(mu)
    V = B_ca[last, :]
    scale = PATTERN_RTOL * (1.0 + np.linalg.norm(B_ca))
    if np.abs(np.diag(V) - 1.0).max() > scale or np.abs(np.tril(V, -1)).max() > scale:
        raise PatternError("chain-last rows of B_ca are not unit upper triangular")
    V = np.triu(V)
    np.fill_diagonal(V, 1.0)
    W = A_ca[last, :]
    G = la.solve_triangular(V, np.eye(m), check_finite=False)
    F_ca = -G @ W
    return F_ca, G


def brunovsky_transform(A_co, B_co, rank_tol: float = DEFAULT_RANK_TOL) -> BrunovskyTransform:
    """Compute the full feedback equivalence of a controllable pair.

    Composes the companion construction: T_jo = T_ca, F_db = F_ca T_ca,
    and G from the row cancellation.  Raises :class:`RedundantInputError`
    when B_co has linearly dependent columns (some mu_i = 0) and
    :class:`PatternError` when ill-conditioning destroys the construction.
    """
    A = np.asarray(A_co, dtype=float)
    B = np.asarray(B_co, dtype=float)
    mu = controllability_indices(A, B, rank_tol)
    if (mu == 0).any():
        bad = np.nonzero(mu == 0)[0].tolist()
        raise RedundantInputError(
            f"inputs {bad} are redundant (controllability index 0); "
            f"the Brunovsky construction needs all indices >= 1"
        )
    T_ca, A_ca, B_ca = to_controllable_canonical(A, B, mu)
    F_ca, G = canonical_to_brunovsky(A_ca, B_ca, mu)
    F_db = F_ca @ T_ca
    luT = la.lu_factor(T_ca, check_finite=False)
    n = T_ca.shape[0]
    T_inv = la.lu_solve(luT, np.eye(n), check_finite=False)
    res = np.linalg.norm(T_ca @ T_inv - np.eye(n))
    if res > INVERSE_RTOL * n:
        cond = float(np.linalg.cond(T_ca))
        raise PatternError(
            f"T_jo too ill-conditioned to invert reliably "
            f"(||T T^-1 - I||_F = {res:.2e}, condition estimate {cond:.2e})"
        )
    V = np.triu(B_ca[np.cumsum(mu) - 1, :])
    np.fill_diagonal(V, 1.0)
    return BrunovskyTransform(
        mu=tuple(int(v) for v in mu),
        T_jo=T_ca, T_jo_inv=T_inv, F_db=F_db, G=G, G_inv=V,
    )


class CopyQuadratics:
    """Quadratics provider realizing A_b'PA_b, B_b'PA_b, B_b'PB_b as copies.

    Output entries are gathered straight from P (no arithmetic), so they are
    bit-identical to the corresponding entries of dense products with the
    exact zero/one pair.  Output blocks over chain pairs are disjoint, so the
    assembly is order-free.
    """

    def __init__(self, mu):
        mu = _check_mu(mu)
        self.mu = mu
        self.n = int(mu.sum())
        self.m = mu.size
        offs, last = _chain_offsets(mu)
        self.starts = offs[:-1]
        self.last = last
        self._last_grid = np.ix_(last, last)

    def quad(self, P: np.ndarray):
        n, m = self.n, self.m
        AtPA = np.zeros((n, n))
        if n > 1:
            AtPA[1:, 1:] = P[:-1, :-1]
        AtPA[self.starts, :] = 0.0
        AtPA[:, self.starts] = 0.0
        BtPA = np.zeros((m, n))
        if n > 1:
            BtPA[:, 1:] = P[self.last, :-1]
        BtPA[:, self.starts] = 0.0
        BtPB = P[self._last_grid].copy()
        return AtPA, BtPA, BtPB


def structured_quadratics(P, mu) -> StructuredQuadratics:
    """Copy-kernel evaluation of (A_b'PA_b, B_b'PA_b, B_b'PB_b) for given mu."""
    P = np.asarray(P, dtype=float)
    kernel = CopyQuadratics(mu)
    if P.shape != (kernel.n, kernel.n):
        raise ValueError(f"P has shape {P.shape}, expected ({kernel.n}, {kernel.n})")
    AtPA, BtPA, BtPB = kernel.quad(P)
    return StructuredQuadratics(AtPA=AtPA, BtPA=BtPA, BtPB=BtPB)
