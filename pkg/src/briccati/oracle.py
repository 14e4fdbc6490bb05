"""Dense KKT ground truth for small problem instances.

Stacks the trajectory into one vector z = (x_0, u_0, ..., x_{N-1}, u_{N-1},
x_N), assembles the equality-constrained QP

    min 1/2 z'Hz + g'z   s.t.  E z = f

(the constraints fix x_0 and encode the dynamics), and solves the saddle
point system [[H, E'], [E, 0]] by dense LU with partial pivoting.  Intended
as an independent oracle for the recursive solvers, not as a fast path.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .lqocp import LqOcpProblem, Trajectory

DEFAULT_SIZE_CAP = 5000


class SingularKktError(RuntimeError):
    """The KKT matrix is singular (degenerate problem)."""


@dataclass(frozen=True)
class KktSystem:
    H: np.ndarray      # (n_z, n_z) block-diagonal by stage
    g: np.ndarray      # (n_z,)
    E_e: np.ndarray    # (n_e, n_z)
    f_e: np.ndarray    # (n_e,)

    @property
    def n_variables(self) -> int:
        return self.g.shape[0]


def variable_count(problem: LqOcpProblem) -> int:
    return problem.n_x * (problem.N + 1) + problem.n_u * problem.N


def stack_trajectory(traj: Trajectory) -> np.ndarray:
    """Stack a trajectory in the oracle's variable order."""
    xs, us = traj.states, traj.inputs
    N = traj.N
    parts = []
    for k in range(N):
        parts.append(xs[k])
        parts.append(us[k])
    parts.append(xs[N])
    return np.concatenate(parts)


def unstack_trajectory(problem: LqOcpProblem, z: np.ndarray) -> Trajectory:
    n, m, N = problem.n_x, problem.n_u, problem.N
    xs = np.empty((N + 1, n))
    us = np.empty((N, m))
    for k in range(N):
        o = k * (n + m)
        xs[k] = z[o:o + n]
        us[k] = z[o + n:o + n + m]
    xs[N] = z[N * (n + m):N * (n + m) + n]
    return Trajectory(states=xs, inputs=us)


def assemble_kkt(problem: LqOcpProblem) -> KktSystem:
    """Build H, g, E_e, f_e for the stacked equality-constrained QP."""
    n, m, N = problem.n_x, problem.n_u, problem.N
    nz = variable_count(problem)
    ne = n * (N + 1)
    H = np.zeros((nz, nz))
    g = np.zeros(nz)
    E = np.zeros((ne, nz))
    f = np.zeros(ne)
    for k in range(N):
        o = k * (n + m)
        H[o:o + n, o:o + n] = problem.Q[k]
        H[o + n:o + n + m, o + n:o + n + m] = problem.R[k]
        H[o + n:o + n + m, o:o + n] = problem.S[k]
        H[o:o + n, o + n:o + n + m] = problem.S[k].T
        g[o:o + n] = problem.q[k]
        g[o + n:o + n + m] = problem.r[k]
    o = N * (n + m)
    H[o:o + n, o:o + n] = problem.Q_N
    g[o:o + n] = problem.q_N

    E[0:n, 0:n] = np.eye(n)
    f[0:n] = problem.x0
    for k in range(N):
        ro = n * (k + 1)
        co = k * (n + m)
        E[ro:ro + n, co:co + n] = -problem.A
        E[ro:ro + n, co + n:co + n + m] = -problem.B
        E[ro:ro + n, co + n + m:co + 2 * n + m] = np.eye(n)
        f[ro:ro + n] = problem.b[k]
    return KktSystem(H=H, g=g, E_e=E, f_e=f)


def kkt_solve(problem: LqOcpProblem, size_cap: int = DEFAULT_SIZE_CAP) -> Trajectory:
    """Solve the problem through the dense KKT system.

    Raises ValueError beyond ``size_cap`` stacked variables and
    :class:`SingularKktError` when the saddle-point matrix is singular.
    """
    nz = variable_count(problem)
    if nz > size_cap:
        raise ValueError(f"{nz} stacked variables exceed the size cap {size_cap}")
    sys_ = assemble_kkt(problem)
    ne = sys_.f_e.shape[0]
    KKT = np.zeros((nz + ne, nz + ne))
    KKT[:nz, :nz] = sys_.H
    KKT[:nz, nz:] = sys_.E_e.T
    KKT[nz:, :nz] = sys_.E_e
    rhs = np.concatenate([-sys_.g, sys_.f_e])
    try:
        sol = la.solve(KKT, rhs)
    except la.LinAlgError as e:
        raise SingularKktError(f"KKT matrix is singular: {e}") from e
    if not np.all(np.isfinite(sol)):
        raise SingularKktError("KKT solve produced non-finite values")
    residual = np.abs(KKT @ sol - rhs).max()
    tol = 1e-9 * (1.0 + np.abs(sys_.g).max(initial=0.0) + np.abs(sys_.f_e).max(initial=0.0))
    if residual > tol:
        raise SingularKktError(
            f"KKT residual {residual:.2e} exceeds {tol:.2e}; system is degenerate"
        )
    return unstack_trajectory(problem, sol[:nz])
