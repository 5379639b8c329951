"""Convex relaxation hierarchies for polynomial optimization.

Builds LP, fixed-block SOS, Putinar, and 0/1 lift-and-project relaxations of
polynomial problems over one unified conic form, solves them with a
reference interior-point method, verifies the resulting positivity
certificates coefficient-wise, and estimates Lagrangian dual bounds of the
lifted problems at desk scale.
"""

from .polycore import (
    GramBasis,
    Monomial,
    Polynomial,
    constraint_product,
    gram_basis,
    mono_count,
    mono_index_set,
)
from .problem import (
    NormalizationError,
    ParseError,
    ProblemError,
    ProblemInstance,
    ProductConstraintSet,
    VarKind,
    lift_products,
    normalize,
    parse_problem,
    serialize_problem,
)
from .conic import Certificate, ConicProgram, dump_text
from .relax import (
    build_bsos,
    build_bsos01,
    build_lp,
    build_putinar,
    build_rlt01,
    certificate_from_result,
    sos_bound_program,
)
from .solver import SolveResult, SolverConfig, Status, solve
from .simplex import solve_lp_reference

__all__ = [
    "Certificate",
    "ConicProgram",
    "GramBasis",
    "Monomial",
    "NormalizationError",
    "ParseError",
    "Polynomial",
    "ProblemError",
    "ProblemInstance",
    "ProductConstraintSet",
    "SolveResult",
    "SolverConfig",
    "Status",
    "VarKind",
    "build_bsos",
    "build_bsos01",
    "build_lp",
    "build_putinar",
    "build_rlt01",
    "certificate_from_result",
    "constraint_product",
    "dump_text",
    "gram_basis",
    "lift_products",
    "mono_count",
    "mono_index_set",
    "normalize",
    "parse_problem",
    "serialize_problem",
    "solve",
    "solve_lp_reference",
    "sos_bound_program",
]

__version__ = "0.1.0"
