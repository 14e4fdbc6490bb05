"""Riccati solvers for LTI linear-quadratic optimal control.

The package solves finite-horizon LQ problems two ways: the classical dense
backward/forward Riccati recursion, and a pipeline that transforms the
system to Brunovsky normal form first, where the recursion's matrix products
degenerate into index-shifted memory copies and the per-stage data
transformations parallelize across the horizon.
"""

from .lqocp import (
    GenerationError,
    Inequality,
    LqOcpProblem,
    ProblemSchemaError,
    StageCost,
    Trajectory,
    ValidationReport,
    load_problem,
    objective_value,
    random_problem,
    rollout,
    save_problem,
    validate,
)
from .staircase import (
    ControllabilityError,
    KalmanDecomposition,
    controllability_indices,
    controllability_rank,
    staircase_decompose,
)
from .brunovsky import (
    BrunovskyTransform,
    CopyQuadratics,
    PatternError,
    RedundantInputError,
    StructuredQuadratics,
    brunovsky_pair,
    brunovsky_transform,
    canonical_to_brunovsky,
    structured_quadratics,
    to_controllable_canonical,
)
from .riccati import (
    DenseQuadratics,
    FactorizationError,
    RiccatiBackwardResult,
    backward_pass,
    forward_pass,
    solve_classical,
)
from .transform import (
    BrunovskyOcp,
    ControllableReduction,
    StageInequalities,
    brunovsky_ocp_direct,
    recover_solution,
    reduce_to_controllable,
    to_brunovsky_ocp,
    transform_inequalities,
    uncontrollable_rollout,
)
from .oracle import (
    KktSystem,
    SingularKktError,
    assemble_kkt,
    kkt_solve,
    stack_trajectory,
)
from .solver import SolveError, SolveOptions, SolveReport, solve

__version__ = "0.1.0"

__all__ = [
    "BrunovskyOcp",
    "BrunovskyTransform",
    "ControllabilityError",
    "ControllableReduction",
    "CopyQuadratics",
    "DenseQuadratics",
    "FactorizationError",
    "GenerationError",
    "Inequality",
    "KalmanDecomposition",
    "KktSystem",
    "LqOcpProblem",
    "PatternError",
    "ProblemSchemaError",
    "RedundantInputError",
    "RiccatiBackwardResult",
    "SingularKktError",
    "SolveError",
    "SolveOptions",
    "SolveReport",
    "StageCost",
    "StageInequalities",
    "StructuredQuadratics",
    "Trajectory",
    "ValidationReport",
    "assemble_kkt",
    "backward_pass",
    "brunovsky_ocp_direct",
    "brunovsky_pair",
    "brunovsky_transform",
    "canonical_to_brunovsky",
    "controllability_indices",
    "controllability_rank",
    "forward_pass",
    "kkt_solve",
    "load_problem",
    "objective_value",
    "random_problem",
    "recover_solution",
    "reduce_to_controllable",
    "rollout",
    "save_problem",
    "solve",
    "solve_classical",
    "stack_trajectory",
    "staircase_decompose",
    "structured_quadratics",
    "to_brunovsky_ocp",
    "to_controllable_canonical",
    "transform_inequalities",
    "uncontrollable_rollout",
    "validate",
]
