from .base import BaseScenario
from .catalog import (
    BlockwiseAggregation,
    CoverageStudy,
    GaussianConstants,
    MarginalAggregation,
    registry,
)

__all__ = [
    "BaseScenario",
    "BlockwiseAggregation",
    "CoverageStudy",
    "GaussianConstants",
    "MarginalAggregation",
    "registry",
]


def __dir__():
    return __all__
