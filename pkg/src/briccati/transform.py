"""Stage-parallel transformations between problem coordinate systems.

The solution chain runs original -> controllable -> Brunovsky coordinates:

1. :func:`reduce_to_controllable` drops the uncontrollable states.  Their
   trajectory evolves on its own and is simulated once; it feeds the reduced
   problem only through the stage offsets and through the linear cost terms
   (the cost coupling between controllable and uncontrollable states turns
   into a known linear term once the uncontrollable trajectory is fixed).
2. :func:`to_brunovsky_ocp` rewrites the reduced problem in the coordinates
   z = T_jo x^c, v = G^{-1}(u - F_db x^c), where the dynamics become the
   exact zero/one Brunovsky pair.
3. :func:`recover_solution` maps a Brunovsky-coordinate solution back.

Every per-stage computation reads only constant matrices and stage-k data
and writes only stage-k output slots, so stages run concurrently; a thread
budget caps the concurrency, and results are bitwise independent of it.
:func:`brunovsky_ocp_direct` composes steps 1 and 2 into a single substitution
per stage (identical output data, fewer passes); the one-call solver uses it.
"""

from __future__ import annotations

import threading
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .brunovsky import BrunovskyTransform, brunovsky_pair
from .lqocp import Inequality, LqOcpProblem, Trajectory
from .staircase import KalmanDecomposition

UNCONTROLLABLE_NORM_WARN = 1e12

_executors: dict[int, ThreadPoolExecutor] = {}
_executors_lock = threading.Lock()


def _get_executor(workers: int) -> ThreadPoolExecutor:
    with _executors_lock:
        ex = _executors.get(workers)
        if ex is None:
            ex = ThreadPoolExecutor(max_workers=workers)
            _executors[workers] = ex
        return ex


def stage_chunks(n_items: int, thread_budget: int) -> list[tuple[int, int]]:
    """Static partition of range(n_items) into ceil(n/budget)-sized chunks."""
    if n_items <= 0:
        return []
    chunk = -(-n_items // max(1, thread_budget))
    return [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]


def run_stage_parallel(worker, n_items: int, thread_budget: int) -> None:
    """Run worker(lo, hi) over a static chunking of range(n_items)."""
    ranges = stage_chunks(n_items, thread_budget)
    if len(ranges) <= 1:
        for lo, hi in ranges:
            worker(lo, hi)
        return
    ex = _get_executor(len(ranges))
    futures = [ex.submit(worker, lo, hi) for lo, hi in ranges]
    for fut in futures:
        fut.result()


@dataclass(frozen=True)
class StageInequalities:
    """Linear inequalities with a stage-varying right-hand side.

    Row k of ``d`` bounds stage k:  C x_k + D u_k <= d[k].
    """

    C: np.ndarray          # (n_i, dim_x)
    D: np.ndarray          # (n_i, n_u)
    d: np.ndarray          # (N, n_i)


@dataclass(frozen=True)
class ControllableReduction:
    """Kalman decomposition plus the reduced problem it induces."""

    kd: KalmanDecomposition
    x_uc: np.ndarray                       # (N+1, n_uc) uncontrollable rollout
    problem: LqOcpProblem                  # reduced data, controllable coordinates
    ineq: StageInequalities | None = None


@dataclass(frozen=True)
class BrunovskyOcp:
    """The problem rewritten in Brunovsky coordinates."""

    bt: BrunovskyTransform
    problem: LqOcpProblem                  # A = A_b, B = B_b, transformed costs
    ineq: StageInequalities | None = None


def uncontrollable_rollout(problem: LqOcpProblem, kd: KalmanDecomposition) -> np.ndarray:
    """Simulate x^uc_{k+1} = A_uc x^uc_k + b^uc_k from the split initial state."""
    nc = kd.n_controllable
    Tuc = kd.T_kd[nc:, :]
    N = problem.N
    x_uc = np.empty((N + 1, kd.n_uncontrollable))
    if kd.n_uncontrollable == 0:
        return x_uc
    b_uc = problem.b @ Tuc.T
    x_uc[0] = Tuc @ problem.x0
    A_uc = kd.A_uc
    for k in range(N):
        x_uc[k + 1] = A_uc @ x_uc[k] + b_uc[k]
    peak = np.abs(x_uc).max(initial=0.0)
    if peak > UNCONTROLLABLE_NORM_WARN:
        warnings.warn(
            f"uncontrollable trajectory reaches magnitude {peak:.2e}; "
            f"results may lose precision (unstable A_uc over a long horizon)",
            RuntimeWarning,
            stacklevel=2,
        )
    return x_uc


def _reduced_inequalities(problem, kd, x_uc) -> StageInequalities | None:
    if problem.ineq is None:
        return None
    nc = kd.n_controllable
    Tc = kd.T_kd[:nc, :]
    Tuc = kd.T_kd[nc:, :]
    C, D, d = problem.ineq.C, problem.ineq.D, problem.ineq.d
    C_c = C @ Tc.T
    C_uc = C @ Tuc.T
    d_stage = d[None, :] - x_uc[: problem.N] @ C_uc.T
    return StageInequalities(C=C_c, D=D, d=d_stage)


def reduce_to_controllable(
    problem: LqOcpProblem,
    kd: KalmanDecomposition,
    thread_budget: int = 1,
) -> ControllableReduction:
    """Project the problem onto the controllable subsystem.

    Stage costs become Q^c = T_c Q T_c', S^c = S T_c', and the offsets pick
    up the uncontrollable contribution b^co_k = T_c b_k + A_12 x^uc_k.  The
    linear terms absorb the cost coupling with the known uncontrollable
    trajectory: q^c_k = T_c (q_k + Q_k w_k) and r^c_k = r_k + S_k w_k with
    w_k = T_uc' x^uc_k; the terminal term is handled the same way.  Dropping
    that coupling would change the minimizer whenever Q_k mixes controllable
    and uncontrollable directions.
    """
    nc = kd.n_controllable
    n, m, N = problem.n_x, problem.n_u, problem.N
    Tc = kd.T_kd[:nc, :]
    Tuc = kd.T_kd[nc:, :]
    x_uc = uncontrollable_rollout(problem, kd)
    has_uc = kd.n_uncontrollable > 0

    Qc = np.empty((N, nc, nc)); Rc = np.empty((N, m, m)); Sc = np.empty((N, m, nc))
    qc = np.empty((N, nc)); rc = np.empty((N, m)); bco = np.empty((N, nc))

    def worker(lo, hi):
        sl = slice(lo, hi)
        tmp = np.matmul(problem.Q[sl], Tc.T)
        X = np.matmul(Tc, tmp)
        Qc[sl] = 0.5 * (X + X.transpose(0, 2, 1))
        Sc[sl] = np.matmul(problem.S[sl], Tc.T)
        Rc[sl] = problem.R[sl]
        if has_uc:
            w = x_uc[lo:hi] @ Tuc
            Qw = np.matmul(problem.Q[sl], w[:, :, None])[:, :, 0]
            Sw = np.matmul(problem.S[sl], w[:, :, None])[:, :, 0]
            qc[sl] = (problem.q[sl] + Qw) @ Tc.T
            rc[sl] = problem.r[sl] + Sw
            bco[sl] = problem.b[sl] @ Tc.T + x_uc[lo:hi] @ kd.A_12.T
        else:
            qc[sl] = problem.q[sl] @ Tc.T
            rc[sl] = problem.r[sl]
            bco[sl] = problem.b[sl] @ Tc.T

    run_stage_parallel(worker, N, thread_budget)

    QNc = Tc @ problem.Q_N @ Tc.T
    QNc = 0.5 * (QNc + QNc.T)
    if has_uc:
        qNc = Tc @ (problem.q_N + problem.Q_N @ (Tuc.T @ x_uc[N]))
    else:
        qNc = Tc @ problem.q_N
    reduced = LqOcpProblem(
        A=kd.A_co, B=kd.B_co, Q=Qc, R=Rc, S=Sc, q=qc, r=rc, b=bco,
        Q_N=QNc, q_N=qNc, x0=Tc @ problem.x0,
    )
    return ControllableReduction(
        kd=kd, x_uc=x_uc, problem=reduced,
        ineq=_reduced_inequalities(problem, kd, x_uc),
    )


def to_brunovsky_ocp(
    red: ControllableReduction,
    bt: BrunovskyTransform,
    thread_budget: int = 1,
) -> BrunovskyOcp:
    """Rewrite the reduced problem in Brunovsky coordinates.

    Substituting x^c = T_jo^{-1} z and u = F_db x^c + G v gives

        Q~ = T^{-T} (Q^c + S^c'F + F'S^c + F'RF) T^{-1}
        R~ = G'RG            r~ = G'r
        S~ = G'(S^c + RF) T^{-1}
        q~ = T^{-T} (q^c + F'r)
        b~ = T_jo b^co       z_0 = T_jo x^c_0

    The S^c'F + F'S^c part of Q~ is required for exact equivalence whenever
    the reduced problem carries a state-input cross cost.
    """
    rp = red.problem
    nc, m, N = rp.n_x, rp.n_u, rp.N
    if nc != bt.n:
        raise ValueError(f"transform dimension {bt.n} does not match reduced state {nc}")
    T, Tinv, F, G = bt.T_jo, bt.T_jo_inv, bt.F_db, bt.G

    Qt = np.empty((N, nc, nc)); Rt = np.empty((N, m, m)); St = np.empty((N, m, nc))
    qt = np.empty((N, nc)); rt = np.empty((N, m)); btk = np.empty((N, nc))

    def worker(lo, hi):
        sl = slice(lo, hi)
        RF = np.matmul(rp.R[sl], F)
        SF = np.matmul(rp.S[sl].transpose(0, 2, 1), F)
        X = rp.Q[sl] + SF + SF.transpose(0, 2, 1) + np.matmul(F.T, RF)
        tmp = np.matmul(X, Tinv)
        Y = np.matmul(Tinv.T, tmp)
        Qt[sl] = 0.5 * (Y + Y.transpose(0, 2, 1))
        St[sl] = np.matmul(np.matmul(G.T, rp.S[sl] + RF), Tinv)
        Rt[sl] = np.matmul(G.T, np.matmul(rp.R[sl], G))
        qt[sl] = (rp.q[sl] + rp.r[sl] @ F) @ Tinv
        rt[sl] = rp.r[sl] @ G
        btk[sl] = rp.b[sl] @ T.T

    run_stage_parallel(worker, N, thread_budget)

    QtN = Tinv.T @ rp.Q_N @ Tinv
    QtN = 0.5 * (QtN + QtN.T)
    A_b, B_b = brunovsky_pair(bt.mu)
    bproblem = LqOcpProblem(
        A=A_b, B=B_b, Q=Qt, R=Rt, S=St, q=qt, r=rt, b=btk,
        Q_N=QtN, q_N=rp.q_N @ Tinv, x0=T @ rp.x0,
    )
    ineq = transform_inequalities(red, bt) if red.ineq is not None else None
    return BrunovskyOcp(bt=bt, problem=bproblem, ineq=ineq)


def transform_inequalities(red: ControllableReduction, bt: BrunovskyTransform) -> StageInequalities:
    """Map the reduced inequalities into Brunovsky coordinates.

    The coefficients (C^c + D F_db) T_jo^{-1} and D G are stage constant;
    the right-hand side d - C^uc x^uc_k varies per stage and is inherited
    from the reduction.
    """
    if red.ineq is None:
        raise ValueError("the reduction carries no inequality data")
    C_c, D, d_stage = red.ineq.C, red.ineq.D, red.ineq.d
    Cz = (C_c + D @ bt.F_db) @ bt.T_jo_inv
    Dz = D @ bt.G
    return StageInequalities(C=Cz, D=Dz, d=d_stage)


def recover_solution(
    z_traj: Trajectory,
    bt: BrunovskyTransform,
    red: ControllableReduction,
    thread_budget: int = 1,
) -> Trajectory:
    """Map a Brunovsky-coordinate solution back to original coordinates:
    x^c = T_jo^{-1} z, u = F_db x^c + G v, then x = T_kd' [x^c; x^uc]."""
    return recover_from_parts(z_traj, bt, red.kd, red.x_uc, thread_budget)


def recover_from_parts(
    z_traj: Trajectory,
    bt: BrunovskyTransform,
    kd: KalmanDecomposition,
    x_uc: np.ndarray,
    thread_budget: int = 1,
) -> Trajectory:
    """Recovery from the decomposition and rollout alone (no reduced problem)."""
    zs, vs = z_traj.states, z_traj.inputs
    N = z_traj.N
    nc = kd.n_controllable
    Tc = kd.T_kd[:nc, :]
    Tuc = kd.T_kd[nc:, :]
    n = kd.T_kd.shape[0]
    xs = np.empty((N + 1, n))
    us = np.empty((N, vs.shape[1]))
    has_uc = kd.n_uncontrollable > 0

    def worker(lo, hi):
        xc = zs[lo:hi] @ bt.T_jo_inv.T
        xs[lo:hi] = xc @ Tc
        if has_uc:
            xs[lo:hi] += x_uc[lo:hi] @ Tuc
        hi_u = min(hi, N)
        if lo < hi_u:
            us[lo:hi_u] = xc[: hi_u - lo] @ bt.F_db.T + vs[lo:hi_u] @ bt.G.T

    run_stage_parallel(worker, N + 1, thread_budget)
    return Trajectory(states=xs, inputs=us, coordinates="original")


def transform_linear_terms(
    problem: LqOcpProblem,
    kd: KalmanDecomposition,
    bt: BrunovskyTransform,
    x_uc: np.ndarray,
    thread_budget: int = 1,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Map only the linear data (q, r, b, q_N, x0) to Brunovsky coordinates.

    Used when the quadratic data of an already-transformed problem is reused
    with fresh linear terms, e.g. for iterative refinement.  Returns
    (q~, r~, b~, q~_N, z_0).
    """
    nc = kd.n_controllable
    N = problem.N
    Tc = kd.T_kd[:nc, :]
    Tuc = kd.T_kd[nc:, :]
    has_uc = kd.n_uncontrollable > 0
    Mmap = Tc.T @ bt.T_jo_inv
    Nmap = bt.F_db @ bt.T_jo_inv
    TTkd = bt.T_jo @ Tc
    TA12 = bt.T_jo @ kd.A_12 if has_uc else None
    qt = np.empty((N, nc)); rt = np.empty((N, problem.n_u)); btk = np.empty((N, nc))

    def worker(lo, hi):
        sl = slice(lo, hi)
        if has_uc:
            w = x_uc[lo:hi] @ Tuc
            gv = problem.q[sl] + np.matmul(problem.Q[sl], w[:, :, None])[:, :, 0]
            hv = problem.r[sl] + np.matmul(problem.S[sl], w[:, :, None])[:, :, 0]
            btk[sl] = problem.b[sl] @ TTkd.T + x_uc[lo:hi] @ TA12.T
        else:
            gv = problem.q[sl]
            hv = problem.r[sl]
            btk[sl] = problem.b[sl] @ TTkd.T
        qt[sl] = gv @ Mmap + hv @ Nmap
        rt[sl] = hv @ bt.G

    run_stage_parallel(worker, N, thread_budget)
    gN = problem.q_N + problem.Q_N @ (Tuc.T @ x_uc[N]) if has_uc else problem.q_N
    return qt, rt, btk, gN @ Mmap, TTkd @ problem.x0


def brunovsky_ocp_direct(
    problem: LqOcpProblem,
    kd: KalmanDecomposition,
    bt: BrunovskyTransform,
    thread_budget: int = 1,
) -> tuple[BrunovskyOcp, np.ndarray]:
    """Fused original -> Brunovsky transformation (one substitution per stage).

    Composing the reduction and the Brunovsky rewrite gives the direct
    substitution x = Mz + T_uc'x^uc, u = Nz + Gv with M = T_c' T_jo^{-1} and
    N = F_db T_jo^{-1}; each stage then needs a single congruence with M
    instead of one per step.  Produces the same data as
    ``to_brunovsky_ocp(reduce_to_controllable(...))`` up to rounding.
    Returns the Brunovsky problem together with the uncontrollable rollout.
    """
    nc = kd.n_controllable
    n, m, N = problem.n_x, problem.n_u, problem.N
    Tc = kd.T_kd[:nc, :]
    Tuc = kd.T_kd[nc:, :]
    x_uc = uncontrollable_rollout(problem, kd)
    has_uc = kd.n_uncontrollable > 0

    Mmap = Tc.T @ bt.T_jo_inv          # (n, nc)
    Nmap = bt.F_db @ bt.T_jo_inv       # (m, nc)
    G = bt.G
    TTkd = bt.T_jo @ Tc                # (nc, n)
    TA12 = bt.T_jo @ kd.A_12 if has_uc else None

    Qt = np.empty((N, nc, nc)); Rt = np.empty((N, m, m)); St = np.empty((N, m, nc))
    qt = np.empty((N, nc)); rt = np.empty((N, m)); btk = np.empty((N, nc))

    def worker(lo, hi):
        sl = slice(lo, hi)
        QM = np.matmul(problem.Q[sl], Mmap)
        Y = np.matmul(Mmap.T, QM)
        SM = np.matmul(problem.S[sl], Mmap)
        RN = np.matmul(problem.R[sl], Nmap)
        X2 = np.matmul(Nmap.T, SM + 0.5 * RN)
        Z = 0.5 * Y + X2
        Qt[sl] = Z + Z.transpose(0, 2, 1)
        St[sl] = np.matmul(G.T, SM + RN)
        Rt[sl] = np.matmul(G.T, np.matmul(problem.R[sl], G))
        if has_uc:
            w = x_uc[lo:hi] @ Tuc
            gv = problem.q[sl] + np.matmul(problem.Q[sl], w[:, :, None])[:, :, 0]
            hv = problem.r[sl] + np.matmul(problem.S[sl], w[:, :, None])[:, :, 0]
            btk[sl] = problem.b[sl] @ TTkd.T + x_uc[lo:hi] @ TA12.T
        else:
            gv = problem.q[sl]
            hv = problem.r[sl]
            btk[sl] = problem.b[sl] @ TTkd.T
        qt[sl] = gv @ Mmap + hv @ Nmap
        rt[sl] = hv @ G

    run_stage_parallel(worker, N, thread_budget)

    wN = Tuc.T @ x_uc[N] if has_uc else None
    gN = problem.q_N + problem.Q_N @ wN if has_uc else problem.q_N
    QtN = Mmap.T @ (problem.Q_N @ Mmap)
    QtN = 0.5 * (QtN + QtN.T)
    A_b, B_b = brunovsky_pair(bt.mu)
    bproblem = LqOcpProblem(
        A=A_b, B=B_b, Q=Qt, R=Rt, S=St, q=qt, r=rt, b=btk,
        Q_N=QtN, q_N=gN @ Mmap, x0=TTkd @ problem.x0,
    )
    ineq = None
    if problem.ineq is not None:
        rineq = _reduced_inequalities(problem, kd, x_uc)
        Cz = (rineq.C + rineq.D @ bt.F_db) @ bt.T_jo_inv
        ineq = StageInequalities(C=Cz, D=rineq.D @ bt.G, d=rineq.d)
    return BrunovskyOcp(bt=bt, problem=bproblem, ineq=ineq), x_uc
