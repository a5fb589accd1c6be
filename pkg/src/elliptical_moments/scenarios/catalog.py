"""Desk-scale versions of the published simulation designs

The published grids go up to ``p = 1000`` and ``n = 300``; the presets here
keep the designs but shrink the dimension (noted per class) so each finishes
in minutes on one machine.
"""

from __future__ import annotations

import typing as tp

from elliptical_moments.scenarios.base import BaseScenario


class MarginalAggregation(BaseScenario):
    """Ideal, Marginal and Marginal Aggregation estimators on a banded
    covariance with ``n`` varying

    Dimension reduced from 500 to 100.
    """

    name: tp.ClassVar[str] = "marginal_aggregation"
    defaults: tp.ClassVar[dict[str, tp.Any]] = {
        "cov_kind": "banded",
        "cov_param": ("0.5",),
        "n_grid": (50, 100, 200),
        "p_grid": (100,),
        "m": 2,
        "estimators": ("ie", "marginal", "mae", "mae_hat"),
        "replicates": 200,
    }


class CoverageStudy(BaseScenario):
    """Coverage of the 95% marginal interval, studentized by the true and by
    the sample location and scale

    Same dimension as published (250), 400 replicates per cell.
    """

    name: tp.ClassVar[str] = "coverage"
    defaults: tp.ClassVar[dict[str, tp.Any]] = {
        "cov_kind": "identity",
        "n_grid": (50, 100, 200),
        "p_grid": (250,),
        "m": 2,
        "estimators": ("marginal", "marginal_hat"),
        "replicates": 400,
        "ci_alpha": 0.05,
    }


class BlockwiseAggregation(BaseScenario):
    """Marginal versus Blockwise Aggregation on strongly correlated pairs

    Dimension reduced from 1000 to 100; blocks are the aligned pairs of the
    block-diagonal covariance.
    """

    name: tp.ClassVar[str] = "blockwise_aggregation"
    defaults: tp.ClassVar[dict[str, tp.Any]] = {
        "cov_kind": "block_diag",
        "cov_param": ("2", "0.8"),
        "n_grid": (50, 100, 200),
        "p_grid": (100,),
        "m": 2,
        "estimators": ("mae", "bae", "mae_hat", "bae_hat"),
        "replicates": 200,
        "blocks_method": "aligned",
        "blocks_param": "2",
    }


class GaussianConstants(BaseScenario):
    """Identity covariance at one ``(n, p)`` cell with many replicates, for the
    leading constants of the ``n p`` scaled risk"""

    name: tp.ClassVar[str] = "gaussian_constants"
    defaults: tp.ClassVar[dict[str, tp.Any]] = {
        "cov_kind": "identity",
        "n_grid": (50,),
        "p_grid": (100,),
        "m": 2,
        "estimators": ("ie", "mae", "bae"),
        "replicates": 5000,
        "blocks_method": "aligned",
        "blocks_param": "2",
    }


registry: dict[str, type[BaseScenario]] = {
    cls.name: cls
    for cls in (MarginalAggregation, CoverageStudy, BlockwiseAggregation, GaussianConstants)
}
