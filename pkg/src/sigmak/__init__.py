"""Curvature operators sigma_k + alpha sigma_{k-1} - sum alpha_l sigma_l on Garding cones."""
from .errors import (
    ConditionViolatedError,
    ConfigError,
    DiscretizationError,
    DomainError,
    InadmissibleError,
    NoSubsolutionError,
    NumericError,
    PreconditionError,
    RootNotFoundError,
    SigmaKError,
    SingularDenominatorError,
    SolverStalled,
)
from .newton import SolveReport, SolverConfig
from .operator import (
    CoefficientSet,
    CubicReduction,
    OperatorSpec,
    concavity_probe,
    cubic_reduce,
    eval_F,
    eval_G,
    eval_Gt,
    linearize,
    sum_Gii,
)
from .spectral import EigenPair, dsigma_dA, eigen_sym
from .symfun import (
    Spectrum,
    cone_contains,
    deleted_symmetric,
    elementary_symmetric,
    newton_maclaurin_bound,
    newton_maclaurin_ratio,
    shift_expansion,
)

__version__ = "0.1.0"
