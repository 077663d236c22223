"""Nodal counts, magnetic fluxes and secular functions on discrete and metric graphs."""

from .graph import (
    CombinatorialGraph,
    GraphValidationError,
    betti_number,
    cycle_basis,
    girth_oracle,
    subdivide,
    validate,
)
from .discrete import (
    DiscreteOperator,
    NonGenericError,
    apply_flux,
    build_generalized,
    build_normalized,
    eigensystem,
    is_tree_nodal_count,
    nodal_report,
    spectrum,
)
from .magnetic import (
    forbidden_surplus_check,
    girth_from_traces,
    hessian_fd,
    hessian_perturbative,
    trace_identities,
    verify_surplus_equals_morse,
)
from .metric import (
    MetricGraph,
    count_edge_zeros,
    eigenfunction,
    equilateral,
    k_hessian_fd,
    k_spectrum,
    metric_nodal_report,
    secular_value,
)
from .torus import (
    F_on_torus,
    LengthDecomposition,
    decompose_lengths,
    surplus_statistics,
    torus_hessian,
)
from .discretizer import (
    arccos_branches,
    directional_derivative_sign_check,
    enumerate_discretizations,
    transition_matrix,
    verify_equilateral_connection,
    verify_surplus_transfer,
)

__version__ = "0.1.0"
