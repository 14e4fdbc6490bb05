"""Problem data model for finite-horizon LQ optimal control of LTI systems.

The problem solved throughout this package is

    min  sum_k  1/2 [x_k; u_k]' [[Q_k, S_k'], [S_k, R_k]] [x_k; u_k]
                + q_k' x_k + r_k' u_k
         + 1/2 x_N' Q_N x_N + q_N' x_N
    s.t. x_{k+1} = A x_k + B u_k + b_k,   x_0 given,
         C x_k + D u_k <= d               (optional)

with a fixed pair (A, B) across all stages.  Stage data is stored stacked
along the horizon axis (Q has shape (N, n_x, n_x) and so on), which is the
layout the solvers iterate over.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class ProblemSchemaError(ValueError):
    """A problem file violates the on-disk schema."""


class GenerationError(RuntimeError):
    """Random problem generation failed to produce a controllable pair."""


def _as_float_array(value):
    return np.asarray(value, dtype=float)


@dataclass(frozen=True)
class StageCost:
    """Cost and dynamics-offset data of a single stage (a read view)."""

    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray
    q: np.ndarray
    r: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class Inequality:
    """Stage-wise linear inequality C x_k + D u_k <= d."""

    C: np.ndarray
    D: np.ndarray
    d: np.ndarray

    def __post_init__(self):
        for name in ("C", "D", "d"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name)))

    @property
    def n_constraints(self) -> int:
        return self.d.shape[0]


@dataclass(frozen=True)
class LqOcpProblem:
    """Full data of one LQ optimal control problem.

    Arrays are stacked over the horizon: ``Q[k]`` is the state cost of stage
    ``k`` for ``k = 0..N-1``; ``Q_N``/``q_N`` hold the terminal term.  All
    arrays are treated as immutable after construction; do not write to them.
    """

    A: np.ndarray            # (n_x, n_x)
    B: np.ndarray            # (n_x, n_u)
    Q: np.ndarray            # (N, n_x, n_x)
    R: np.ndarray            # (N, n_u, n_u)
    S: np.ndarray            # (N, n_u, n_x)
    q: np.ndarray            # (N, n_x)
    r: np.ndarray            # (N, n_u)
    b: np.ndarray            # (N, n_x)
    Q_N: np.ndarray          # (n_x, n_x)
    q_N: np.ndarray          # (n_x,)
    x0: np.ndarray           # (n_x,)
    ineq: Inequality | None = None

    def __post_init__(self):
        for name in ("A", "B", "Q", "R", "S", "q", "r", "b", "Q_N", "q_N", "x0"):
            object.__setattr__(self, name, _as_float_array(getattr(self, name)))

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1] if self.B.ndim == 2 else 0

    @property
    def N(self) -> int:
        return self.Q.shape[0]

    def stage(self, k: int) -> StageCost:
        return StageCost(self.Q[k], self.R[k], self.S[k], self.q[k], self.r[k], self.b[k])

    @property
    def stages(self) -> tuple[StageCost, ...]:
        return tuple(self.stage(k) for k in range(self.N))

    @classmethod
    def from_stages(cls, A, B, stages, Q_N, q_N, x0, ineq=None) -> "LqOcpProblem":
        """Build a problem from a list of per-stage ``StageCost`` records."""
        return cls(
            A=A, B=B,
            Q=np.stack([_as_float_array(s.Q) for s in stages]),
            R=np.stack([_as_float_array(s.R) for s in stages]),
            S=np.stack([_as_float_array(s.S) for s in stages]),
            q=np.stack([_as_float_array(s.q) for s in stages]),
            r=np.stack([_as_float_array(s.r) for s in stages]),
            b=np.stack([_as_float_array(s.b) for s in stages]),
            Q_N=Q_N, q_N=q_N, x0=x0, ineq=ineq,
        )


@dataclass(frozen=True)
class Trajectory:
    """State/input sequences in some coordinate system.

    ``states`` has one row per time point (N+1 rows), ``inputs`` one row per
    stage (N rows).  ``coordinates`` records which state coordinates the rows
    live in: "original", "controllable" or "brunovsky".
    """

    states: np.ndarray       # (N+1, dim)
    inputs: np.ndarray       # (N, n_u)
    coordinates: str = "original"

    def __post_init__(self):
        object.__setattr__(self, "states", _as_float_array(self.states))
        object.__setattr__(self, "inputs", _as_float_array(self.inputs))
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise ValueError(
                f"need exactly one more state than inputs, got "
                f"{self.states.shape[0]} states and {self.inputs.shape[0]} inputs"
            )
        if self.coordinates not in ("original", "controllable", "brunovsky"):
            raise ValueError(f"unknown coordinate tag {self.coordinates!r}")

    @property
    def N(self) -> int:
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

SYMMETRY_RTOL = 1e-12


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`; empty iff the problem is well posed."""

    messages: tuple[str, ...] = field(default=())

    @property
    def ok(self) -> bool:
        return not self.messages

    def __bool__(self) -> bool:  # truthiness == "has findings"
        return bool(self.messages)


def _check_shape(messages, name, arr, expected):
    if arr.shape != expected:
        messages.append(f"{name} has shape {arr.shape}, expected {expected}")
        return False
    return True


def _is_symmetric(M) -> bool:
    return np.linalg.norm(M - M.T) <= SYMMETRY_RTOL * np.linalg.norm(M)


def _is_pd(M) -> bool:
    try:
        np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        return False
    return True


def validate(problem: LqOcpProblem) -> ValidationReport:
    """Check a problem against the well-posedness assumptions of the solvers.

    Every violation is reported as one message; nothing raises.  An empty
    report means the Riccati recursion assumptions hold: consistent
    dimensions, symmetric Q_k/Q_N/R_k, and R_k positive definite.
    """
    msgs: list[str] = []
    A = problem.A
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        msgs.append(f"A must be square, got shape {A.shape}")
        return ValidationReport(tuple(msgs))
    n = A.shape[0]
    if n < 1:
        msgs.append("state dimension must be >= 1")
    if problem.B.ndim != 2 or problem.B.shape[0] != n:
        msgs.append(f"B has shape {problem.B.shape}, expected ({n}, n_u)")
        return ValidationReport(tuple(msgs))
    m = problem.B.shape[1]
    if m < 1:
        msgs.append("input dimension must be >= 1")

    N = problem.Q.shape[0] if problem.Q.ndim == 3 else -1
    if N < 1:
        msgs.append("N must be >= 1")
        return ValidationReport(tuple(msgs))
    for name, arr, expected in (
        ("Q", problem.Q, (N, n, n)),
        ("R", problem.R, (N, m, m)),
        ("S", problem.S, (N, m, n)),
        ("q", problem.q, (N, n)),
        ("r", problem.r, (N, m)),
        ("b", problem.b, (N, n)),
    ):
        if arr.shape != expected:
            # report against stage 0 so the message names a concrete block
            msgs.append(f"{name}_0 has shape {arr.shape[1:] if arr.ndim >= 1 else arr.shape}, "
                        f"stacked {arr.shape}, expected {expected}")
    _check_shape(msgs, "Q_N", problem.Q_N, (n, n))
    _check_shape(msgs, "q_N", problem.q_N, (n,))
    _check_shape(msgs, "x0", problem.x0, (n,))
    if msgs:
        return ValidationReport(tuple(msgs))

    for k in range(N):
        if not _is_symmetric(problem.Q[k]):
            msgs.append(f"Q_{k} not symmetric")
        if not _is_symmetric(problem.R[k]):
            msgs.append(f"R_{k} not symmetric")
        if not _is_pd(problem.R[k]):
            msgs.append(f"R_{k} not positive definite")
    if not _is_symmetric(problem.Q_N):
        msgs.append("Q_N not symmetric")

    if problem.ineq is not None:
        ineq = problem.ineq
        ni = ineq.d.shape[0] if ineq.d.ndim == 1 else -1
        if ni < 0:
            msgs.append(f"ineq.d must be a vector, got shape {ineq.d.shape}")
        else:
            _check_shape(msgs, "ineq.C", ineq.C, (ni, n))
            _check_shape(msgs, "ineq.D", ineq.D, (ni, m))
    return ValidationReport(tuple(msgs))


# ---------------------------------------------------------------------------
# objective
# ---------------------------------------------------------------------------

def objective_value(problem: LqOcpProblem, traj: Trajectory) -> float:
    """Evaluate the quadratic objective along a trajectory (any feasibility)."""
    xs, us = traj.states, traj.inputs
    total = 0.0
    for k in range(problem.N):
        x, u = xs[k], us[k]
        total += 0.5 * (x @ problem.Q[k] @ x) + u @ problem.S[k] @ x
        total += 0.5 * (u @ problem.R[k] @ u)
        total += problem.q[k] @ x + problem.r[k] @ u
    xN = xs[problem.N]
    total += 0.5 * (xN @ problem.Q_N @ xN) + problem.q_N @ xN
    return float(total)


def rollout(problem: LqOcpProblem, inputs: np.ndarray) -> Trajectory:
    """Simulate the dynamics from problem.x0 under the given input sequence."""
    inputs = _as_float_array(inputs)
    N = inputs.shape[0]
    xs = np.empty((N + 1, problem.n_x))
    xs[0] = problem.x0
    for k in range(N):
        xs[k + 1] = problem.A @ xs[k] + problem.B @ inputs[k] + problem.b[k]
    return Trajectory(states=xs, inputs=inputs)


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

FILE_VERSION = "lqocp-1"


def _flat(a: np.ndarray) -> list[float]:
    return [float(v) for v in np.asarray(a, dtype=float).ravel(order="C")]


def save_problem(problem: LqOcpProblem, path) -> None:
    """Write a problem as JSON (row-major flat arrays, exact doubles)."""
    n, m, N = problem.n_x, problem.n_u, problem.N
    doc = {
        "version": FILE_VERSION,
        "nx": n,
        "nu": m,
        "N": N,
        "A": _flat(problem.A),
        "B": _flat(problem.B),
        "stages": [
            {
                "Q": _flat(problem.Q[k]),
                "R": _flat(problem.R[k]),
                "S": _flat(problem.S[k]),
                "q": _flat(problem.q[k]),
                "r": _flat(problem.r[k]),
                "b": _flat(problem.b[k]),
            }
            for k in range(N)
        ],
        "terminal": {"Q": _flat(problem.Q_N), "q": _flat(problem.q_N)},
        "x0": _flat(problem.x0),
    }
    if problem.ineq is not None:
        doc["ineq"] = {
            "C": _flat(problem.ineq.C),
            "D": _flat(problem.ineq.D),
            "d": _flat(problem.ineq.d),
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def _take(doc: dict, field_name: str, context: str = ""):
    if field_name not in doc:
        where = f" in {context}" if context else ""
        raise ProblemSchemaError(f"missing field '{field_name}'{where}")
    return doc[field_name]


def _mat(doc, field_name, rows, cols, context=""):
    raw = _take(doc, field_name, context)
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 1 or arr.size != rows * cols:
        where = f" in {context}" if context else ""
        raise ProblemSchemaError(
            f"field '{field_name}'{where} must be a flat array of {rows * cols} "
            f"numbers, got {arr.size}"
        )
    return arr.reshape(rows, cols)


def _vec(doc, field_name, length, context=""):
    return _mat(doc, field_name, length, 1, context).ravel()


def load_problem(path) -> LqOcpProblem:
    """Read a problem written by :func:`save_problem`.

    Raises :class:`ProblemSchemaError` naming the offending field for any
    schema violation, with parse position for malformed JSON.
    """
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise ProblemSchemaError(
                f"parse error at line {e.lineno}, column {e.colno}: {e.msg}"
            ) from e
    if not isinstance(doc, dict):
        raise ProblemSchemaError("top-level document must be an object")
    version = _take(doc, "version")
    if version != FILE_VERSION:
        raise ProblemSchemaError(f"field 'version' must be '{FILE_VERSION}', got {version!r}")
    n = _take(doc, "nx")
    m = _take(doc, "nu")
    N = _take(doc, "N")
    for name, value in (("nx", n), ("nu", m)):
        if not isinstance(value, int) or value < 1:
            raise ProblemSchemaError(f"{name} must be >= 1")
    if not isinstance(N, int) or N < 1:
        raise ProblemSchemaError("N must be >= 1")

    A = _mat(doc, "A", n, n)
    B = _mat(doc, "B", n, m)
    stages_raw = _take(doc, "stages")
    if not isinstance(stages_raw, list) or len(stages_raw) != N:
        raise ProblemSchemaError(f"field 'stages' must be an array of {N} objects")
    Q = np.empty((N, n, n)); R = np.empty((N, m, m)); S = np.empty((N, m, n))
    q = np.empty((N, n)); r = np.empty((N, m)); b = np.empty((N, n))
    for k, st in enumerate(stages_raw):
        ctx = f"stages[{k}]"
        if not isinstance(st, dict):
            raise ProblemSchemaError(f"{ctx} must be an object")
        Q[k] = _mat(st, "Q", n, n, ctx)
        R[k] = _mat(st, "R", m, m, ctx)
        S[k] = _mat(st, "S", m, n, ctx)
        q[k] = _vec(st, "q", n, ctx)
        r[k] = _vec(st, "r", m, ctx)
        b[k] = _vec(st, "b", n, ctx)
    term = _take(doc, "terminal")
    Q_N = _mat(term, "Q", n, n, "terminal")
    q_N = _vec(term, "q", n, "terminal")
    x0 = _vec(doc, "x0", n)
    ineq = None
    if "ineq" in doc:
        iq = doc["ineq"]
        d_raw = np.asarray(_take(iq, "d", "ineq"), dtype=float)
        if d_raw.ndim != 1:
            raise ProblemSchemaError("field 'd' in ineq must be a flat array")
        ni = d_raw.size
        ineq = Inequality(
            C=_mat(iq, "C", ni, n, "ineq"),
            D=_mat(iq, "D", ni, m, "ineq"),
            d=d_raw,
        )
    return LqOcpProblem(A=A, B=B, Q=Q, R=R, S=S, q=q, r=r, b=b,
                        Q_N=Q_N, q_N=q_N, x0=x0, ineq=ineq)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

def random_problem(n_x: int, n_u: int, N: int, seed: int) -> LqOcpProblem:
    """Generate a random well-posed problem with a controllable (A, B).

    A is drawn i.i.d. normal and scaled by 1/sqrt(n_x) so its spectral radius
    stays near 1 for all sizes; without the scaling the cost-to-go recursion
    overflows double precision for n_x beyond a few dozen.  Costs are
    Q_k = M'M (PSD) and R_k = M'M + 1e-3 I (PD).  S_k, q_k, r_k, b_k are zero;
    x0 is standard normal.  Deterministic for a fixed seed.
    """
    if not (n_x >= n_u >= 1):
        raise ValueError(f"need n_x >= n_u >= 1, got n_x={n_x}, n_u={n_u}")
    if N < 1:
        raise ValueError(f"need N >= 1, got {N}")
    from .staircase import controllability_rank

    rng = np.random.default_rng(seed)
    for _ in range(100):
        A = rng.standard_normal((n_x, n_x)) / np.sqrt(n_x)
        B = rng.standard_normal((n_x, n_u))
        if controllability_rank(A, B) == n_x:
            break
    else:
        raise GenerationError(
            f"no controllable pair found in 100 draws for n_x={n_x}, n_u={n_u}"
        )
    Q = np.empty((N, n_x, n_x)); R = np.empty((N, n_u, n_u))
    for k in range(N):
        M = rng.standard_normal((n_x, n_x))
        Q[k] = M.T @ M
        M = rng.standard_normal((n_u, n_u))
        R[k] = M.T @ M + 1e-3 * np.eye(n_u)
    M = rng.standard_normal((n_x, n_x))
    Q_N = M.T @ M
    return LqOcpProblem(
        A=A, B=B, Q=Q, R=R,
        S=np.zeros((N, n_u, n_x)), q=np.zeros((N, n_x)),
        r=np.zeros((N, n_u)), b=np.zeros((N, n_x)),
        Q_N=Q_N, q_N=np.zeros(n_x),
        x0=rng.standard_normal(n_x),
    )
