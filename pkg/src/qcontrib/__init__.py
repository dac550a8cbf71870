"""Quantile contributions: finite-sample, exact and asymptotic laws."""

from .dists import DistributionSpec, PAPER_SPECS
from .errors import (
    CapacityError,
    ContractError,
    DegenerateError,
    DomainError,
    QCError,
    UnsupportedCaseError,
    UsageError,
)
from .qc import as_limit, asymptotic_params, lambda_hat
from .streams import RandomStream

__version__ = "0.1.0"
