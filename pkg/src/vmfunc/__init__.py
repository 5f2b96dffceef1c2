"""Differential calculus of statistical functionals on k-dimensional collectives.

The pieces fit together in layers: ``collectives`` supplies repartitions
and distribution models, ``functionals`` the statistical functionals and
their influence derivatives, ``vmcalc`` the directional-derivative oracle
and Taylor decomposition, ``asymptotics`` the normality experiments and
bound checkers, and ``cli`` a reproducible experiment runner.
"""

__version__ = "0.1.0"

from .asymptotics import (
    AsymptoticNormalizer,
    AsymptoticReport,
    BoundMargin,
    GridSpec,
    clt_experiment,
    default_u_grid,
    enumerate_arithmetic,
    frequency_bounds_check,
    gauss_phi,
    ibp_bound_2d,
    law_sup_distance,
    normalizer,
    weighted_deviation_check,
)
from .collectives import (
    CellPartition,
    CollectiveSequence,
    DiscreteCells,
    Exponential,
    FgmCopula2D,
    Gaussian,
    IndependentProduct,
    Mixture,
    Repartition,
    StudentT,
    Uniform,
    discretize,
    draw_experiment,
    repartition_eval,
)
from .errors import (
    ConfigError,
    DegenerateVariance,
    DimensionMismatch,
    EnumerationGuard,
    MomentUnavailable,
    NoAnalyticDerivative,
    SimplexViolation,
    VmfuncError,
)
from .functionals import (
    CentralMoment,
    CompositeMoments,
    Correlation,
    DoubleIntegral,
    Functional,
    Linear,
    MomentOracle,
    PairPolynomial,
    RawMoment,
    eval_on_model,
    eval_on_repartition,
    influence_at,
    linear_arithmetic,
    quadratic_arithmetic,
)
from .polynomials import Polynomial, constant, coordinate, monomial
from .streams import StreamId
from .vmcalc import (
    DirectionalPath,
    TaylorDecomposition,
    consistency_catalog,
    derivative_consistency,
    directional_derivative_numeric,
    influence_first,
    influence_second,
    taylor_decompose,
)
