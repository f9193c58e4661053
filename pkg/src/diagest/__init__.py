"""Matrix-free stochastic diagonal estimation.

Rademacher and Gaussian diagonal estimators, sufficient query bounds, PSD
diagnostics and the Diag++ algorithm, all driven through counted
matrix-vector product oracles.
"""

from diagest.bounds import (
    BoundKind,
    EpsDelta,
    MatrixConstants,
    QueryBoundResult,
    bound_eigenvector,
    bound_full_diagonal,
    bound_kappa,
    bound_relative_element,
    bound_row_dependent,
    check_psd_row_bound,
    diagpp_query_bound,
    matrix_constants,
)
from diagest.diagpp import DiagppConfig, DiagppResult, diagpp, projected_diagonal, projection_only, range_finder
from diagest.estimators import (
    DiagonalAccumulator,
    DiagonalEstimate,
    estimate_diagonal,
    hutchinson_trace_from_estimate,
    reference_variances,
)
from diagest.oracle import (
    EigenFactorization,
    LinearOperator,
    PowerLawSpectrumSpec,
    ResidualOperator,
    generate_power_law_psd,
    load_matrix_market,
    make_dense_operator,
    make_diagonal_operator,
    make_residual_operator,
)
from diagest.probes import GAUSSIAN, RADEMACHER, ProbeDistribution, ProbeStream

__version__ = "0.1.0"

__all__ = [
    "BoundKind",
    "DiagonalAccumulator",
    "DiagonalEstimate",
    "DiagppConfig",
    "DiagppResult",
    "EigenFactorization",
    "EpsDelta",
    "GAUSSIAN",
    "LinearOperator",
    "MatrixConstants",
    "PowerLawSpectrumSpec",
    "ProbeDistribution",
    "ProbeStream",
    "QueryBoundResult",
    "RADEMACHER",
    "ResidualOperator",
    "bound_eigenvector",
    "bound_full_diagonal",
    "bound_kappa",
    "bound_relative_element",
    "bound_row_dependent",
    "check_psd_row_bound",
    "diagpp",
    "diagpp_query_bound",
    "estimate_diagonal",
    "generate_power_law_psd",
    "hutchinson_trace_from_estimate",
    "load_matrix_market",
    "make_dense_operator",
    "make_diagonal_operator",
    "make_residual_operator",
    "matrix_constants",
    "projected_diagonal",
    "projection_only",
    "range_finder",
    "reference_variances",
]
