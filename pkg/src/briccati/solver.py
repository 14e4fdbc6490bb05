"""One-call solvers for LQ optimal control problems.

Two methods share the same backward/forward Riccati recursion and differ in
the coordinates the recursion runs in:

* ``classical`` runs it directly on (A, B) with dense quadratics.
* ``brunovsky`` decomposes (A, B) once, rewrites the stage data in Brunovsky
  coordinates (stage-parallel), runs the recursion there with copy-kernel
  quadratics, and maps the solution back (stage-parallel).

Phase wall times are collected per solve so benchmark harnesses can report
the breakdown.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass

import numpy as np

from . import riccati
from .brunovsky import CopyQuadratics, brunovsky_transform
from .lqocp import LqOcpProblem, Trajectory
from .staircase import DEFAULT_RANK_TOL, staircase_decompose
from .transform import (
    brunovsky_ocp_direct,
    recover_from_parts,
    transform_linear_terms,
    uncontrollable_rollout,
)

METHODS = ("classical", "brunovsky")


class SolveError(RuntimeError):
    """A pipeline phase failed; the message names the phase."""

    def __init__(self, phase: str, cause: Exception):
        self.phase = phase
        self.cause = cause
        super().__init__(f"{phase}: {cause}")


@dataclass(frozen=True)
class SolveOptions:
    method: str = "brunovsky"
    thread_budget: int = 1
    rank_tol: float = DEFAULT_RANK_TOL
    collect_timings: bool = True
    refinement_passes: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.thread_budget < 1:
            raise ValueError("thread_budget must be >= 1")
        if self.refinement_passes < 0:
            raise ValueError("refinement_passes must be >= 0")


@dataclass(frozen=True)
class SolveReport:
    trajectory: Trajectory
    timings: dict[str, float]          # seconds per phase
    n_x: int
    n_controllable: int | None
    n_u: int
    N: int
    mu: tuple[int, ...] | None = None
    method: str = "brunovsky"

    @property
    def total_time(self) -> float:
        return sum(self.timings.values())


def _check_dimensions(problem: LqOcpProblem) -> None:
    n, m, N = problem.n_x, problem.n_u, problem.N
    if problem.A.shape != (n, n) or problem.B.shape != (n, m):
        raise ValueError("A/B dimensions inconsistent")
    if N < 1:
        raise ValueError("N must be >= 1")
    expected = {
        "Q": (N, n, n), "R": (N, m, m), "S": (N, m, n),
        "q": (N, n), "r": (N, m), "b": (N, n),
        "Q_N": (n, n), "q_N": (n,), "x0": (n,),
    }
    for name, shape in expected.items():
        arr = getattr(problem, name)
        if arr.shape != shape:
            raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")


def solve(problem: LqOcpProblem, opts: SolveOptions | None = None) -> SolveReport:
    """Solve the problem with the selected method.

    Well-posedness (symmetric costs, positive definite R_k) is the caller's
    responsibility; run :func:`briccati.lqocp.validate` beforehand when the
    data is untrusted.  Dimension mismatches raise immediately.  Any phase
    failure is re-raised as :class:`SolveError` naming the phase.
    """
    if opts is None:
        opts = SolveOptions()
    _check_dimensions(problem)
    if opts.method == "classical":
        return _solve_classical(problem, opts)
    return _solve_brunovsky(problem, opts)


def _solve_classical(problem: LqOcpProblem, opts: SolveOptions) -> SolveReport:
    t0 = time.perf_counter()
    try:
        kernel = riccati.DenseQuadratics(problem.A, problem.B)
        br = riccati.backward_pass(problem, kernel)
        traj = riccati.forward_pass(problem, br)
    except Exception as e:
        raise SolveError("riccati", e) from e
    t1 = time.perf_counter()
    timings = {"decompose": 0.0, "transform": 0.0, "riccati": t1 - t0, "recover": 0.0}
    return SolveReport(
        trajectory=traj, timings=timings,
        n_x=problem.n_x, n_controllable=None, n_u=problem.n_u, N=problem.N,
        mu=None, method="classical",
    )


def _correction_problem(problem: LqOcpProblem, traj: Trajectory) -> LqOcpProblem:
    """The residual problem around an approximate solution.

    Substituting z = z_hat + delta into the stacked QP leaves the quadratic
    data untouched and moves the current gradient and dynamics defect into
    the linear terms, so one extra solve of this problem is a full Newton
    correction.
    """
    xs, us = traj.states, traj.inputs
    N = problem.N
    xN = xs[N]
    q_c = (np.matmul(problem.Q, xs[:N, :, None])[:, :, 0]
           + np.matmul(problem.S.transpose(0, 2, 1), us[:, :, None])[:, :, 0]
           + problem.q)
    r_c = (np.matmul(problem.S, xs[:N, :, None])[:, :, 0]
           + np.matmul(problem.R, us[:, :, None])[:, :, 0]
           + problem.r)
    b_c = xs[:N] @ problem.A.T + us @ problem.B.T + problem.b - xs[1:]
    return dataclasses.replace(
        problem,
        q=q_c, r=r_c, b=b_c,
        q_N=problem.Q_N @ xN + problem.q_N,
        x0=problem.x0 - xs[0],
        ineq=None,
    )


def _solve_brunovsky(problem: LqOcpProblem, opts: SolveOptions) -> SolveReport:
    budget = opts.thread_budget
    t0 = time.perf_counter()
    try:
        kd = staircase_decompose(problem.A, problem.B, opts.rank_tol)
        bt = brunovsky_transform(kd.A_co, kd.B_co, opts.rank_tol)
    except Exception as e:
        raise SolveError("decompose", e) from e
    t1 = time.perf_counter()
    try:
        bocp, x_uc = brunovsky_ocp_direct(problem, kd, bt, thread_budget=budget)
    except Exception as e:
        raise SolveError("transform", e) from e
    t2 = time.perf_counter()
    try:
        kernel = CopyQuadratics(bt.mu)
        keep = opts.refinement_passes > 0
        br = riccati.backward_pass(bocp.problem, kernel, keep_factors=keep)
        z_traj = riccati.forward_pass(bocp.problem, br, coordinates="brunovsky")
    except Exception as e:
        raise SolveError("riccati", e) from e
    t3 = time.perf_counter()
    try:
        traj = recover_from_parts(z_traj, bt, kd, x_uc, thread_budget=budget)
    except Exception as e:
        raise SolveError("recover", e) from e
    t4 = time.perf_counter()
    t_transform = t2 - t1
    t_riccati = t3 - t2
    t_recover = t4 - t3

    # Newton-style refinement: the quadratic data, gains and factorizations
    # are exact for the correction problem, so each pass costs only linear
    # sweeps and removes the rounding amplification of ill-conditioned T_jo.
    for _ in range(opts.refinement_passes):
        try:
            ta = time.perf_counter()
            corr = _correction_problem(problem, traj)
            d_uc = uncontrollable_rollout(corr, kd)
            qz, rz, bz, qNz, z0 = transform_linear_terms(corr, kd, bt, d_uc, budget)
            zc = dataclasses.replace(bocp.problem, q=qz, r=rz, b=bz, q_N=qNz, x0=z0)
            tb = time.perf_counter()
            ks = riccati.offset_pass(zc, br)
            dz = riccati.forward_pass(
                zc, riccati.RiccatiBackwardResult(K=br.K, k=ks), coordinates="brunovsky"
            )
            tc = time.perf_counter()
            delta = recover_from_parts(dz, bt, kd, d_uc, thread_budget=budget)
            traj = Trajectory(
                states=traj.states + delta.states,
                inputs=traj.inputs + delta.inputs,
                coordinates="original",
            )
            td = time.perf_counter()
            t_transform += tb - ta
            t_riccati += tc - tb
            t_recover += td - tc
        except Exception as e:
            raise SolveError("refine", e) from e

    timings = {
        "decompose": t1 - t0,
        "transform": t_transform,
        "riccati": t_riccati,
        "recover": t_recover,
    }
    return SolveReport(
        trajectory=traj, timings=timings,
        n_x=problem.n_x, n_controllable=kd.n_controllable,
        n_u=problem.n_u, N=problem.N, mu=bt.mu, method="brunovsky",
    )
