"""Point estimators of the scaled even moments ``theta_m``

All five estimators are studentized: they take the location and scale they
standardize with as explicit arguments, either the true parameters or
estimates (`sample_location_scale`, `elliptical_moments.robust`).
"""

from __future__ import annotations

import dataclasses
import math
import typing as tp
import warnings

import numpy as np
import scipy.linalg

from elliptical_moments.blocks import as_block_collection
from elliptical_moments.errors import DomainError
from elliptical_moments.kernels import column_power_sums
from elliptical_moments.model import SampleMatrix, radial_reconstruction
from elliptical_moments.special_functions import (
    _check_order,
    block_constant,
    marginal_constant,
    normal_quantile,
)

METHODS = ("ideal", "marginal", "mae", "blockwise", "bae")

# blocks whose condition number exceeds this are treated as singular
MAX_CONDITION = 1e12


@dataclasses.dataclass(frozen=True)
class ConfidenceInterval:
    """Asymptotic interval around a Marginal Estimator

    ``clamped`` is set when the plug-in variance came out negative and was
    replaced by zero.
    """

    lower: float
    upper: float
    level: float
    center: float
    clamped: bool = False

    warn_on_flags: tp.ClassVar[bool] = True

    def __contains__(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def as_tuple(self) -> tuple[float, float]:
        return (self.lower, self.upper)


@dataclasses.dataclass(frozen=True)
class MomentEstimate:
    """An estimate of ``theta_m``

    ``coordinates`` holds ``(j,)`` for the Marginal Estimator and the block
    ``J`` for the Blockwise Estimator (0-based), ``None`` otherwise.
    """

    m: int
    value: float
    method: str
    n_used: int
    coordinates: tuple[int, ...] | None = None
    ci: ConfidenceInterval | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            msg = f"unknown method {self.method!r}, expected one of {METHODS}"
            raise ValueError(msg)
        if not math.isfinite(self.value):
            msg = f"{self.method} estimate is not finite: {self.value}"
            raise ValueError(msg)
        if self.ci is not None and (
            self.method != "marginal" or self.ci.center != self.value
        ):
            msg = "a confidence interval must be centered at its Marginal Estimator"
            raise ValueError(msg)

    def __float__(self):
        return self.value

    @property
    def label(self) -> str:
        """``Marginal(j)`` / ``Blockwise(J)`` with 1-based coordinates"""
        names = {"ideal": "Ideal", "marginal": "Marginal", "mae": "MAE", "blockwise": "Blockwise", "bae": "BAE"}
        if self.coordinates is None:
            return names[self.method]
        inner = ",".join(str(j + 1) for j in self.coordinates)
        return f"{names[self.method]}({inner})"


def block_key(J) -> tuple[int, ...]:
    return tuple(int(j) for j in J)


@dataclasses.dataclass(frozen=True)
class LocationScale:
    """Location and scale plugged into the studentized estimators

    ``sigma_blocks_hat`` maps a block (tuple of 0-based coordinates) to its
    ``Sigma_JJ`` estimate; every submatrix must be symmetric positive
    definite. ``flags`` lists repairs applied while estimating (variance
    floors, diagonal loading).
    """

    mu_hat: np.ndarray
    sigma_diag_hat: np.ndarray
    sigma_blocks_hat: dict[tuple[int, ...], np.ndarray] | None = None
    omega_hat: np.ndarray | None = None
    flags: tuple[str, ...] = ()

    warn_on_flags: tp.ClassVar[bool] = True

    def __post_init__(self):
        mu = np.asarray(self.mu_hat, dtype=np.float64)
        diag = np.asarray(self.sigma_diag_hat, dtype=np.float64)
        if mu.ndim != 1 or diag.shape != mu.shape:
            msg = f"mu_hat and sigma_diag_hat must be vectors of one length, got {mu.shape} and {diag.shape}"
            raise DomainError(msg)
        if not np.all(diag > 0):
            msg = f"sigma_diag_hat must be strictly positive (coordinate {int(np.argmin(diag))} is {diag.min():.3g})"
            raise DomainError(msg)
        object.__setattr__(self, "mu_hat", mu)
        object.__setattr__(self, "sigma_diag_hat", diag)
        if self.sigma_blocks_hat is not None:
            blocks = {}
            for J, matrix in self.sigma_blocks_hat.items():
                key = block_key(J)
                matrix = np.asarray(matrix, dtype=np.float64)
                if matrix.shape != (len(key), len(key)):
                    msg = f"block {key} has a {matrix.shape} submatrix"
                    raise DomainError(msg)
                if not np.allclose(matrix, matrix.T, rtol=0, atol=1e-10 * max(1.0, np.abs(matrix).max())):
                    msg = f"block {key} submatrix is not symmetric"
                    raise DomainError(msg)
                smallest = scipy.linalg.eigvalsh(matrix)[0]
                if not smallest > 0:
                    msg = f"block {key} submatrix is not positive definite (minimum eigenvalue {smallest:.3g})"
                    raise DomainError(msg)
                blocks[key] = matrix
            object.__setattr__(self, "sigma_blocks_hat", blocks)

    @property
    def p(self) -> int:
        return len(self.mu_hat)

    def block(self, J) -> np.ndarray:
        """``Sigma_JJ`` estimate; singletons fall back to the diagonal"""
        key = block_key(J)
        if self.sigma_blocks_hat is not None and key in self.sigma_blocks_hat:
            return self.sigma_blocks_hat[key]
        if len(key) == 1:
            return self.sigma_diag_hat[list(key)].reshape(1, 1)
        msg = f"no submatrix for block {[j + 1 for j in key]} (1-based)"
        raise DomainError(msg)

    @classmethod
    def from_truth(cls, mu, sigma, blocks=None, with_omega: bool = False) -> LocationScale:
        """Exact location and scale of a known distribution"""
        sigma = np.asarray(sigma, dtype=np.float64)
        mu = np.zeros(sigma.shape[0]) if mu is None else np.asarray(mu, dtype=np.float64)
        sub = None
        if blocks is not None:
            sub = {block_key(J): sigma[np.ix_(J, J)] for J in as_block_collection(blocks, len(mu))}
        omega = None
        if with_omega:
            omega = scipy.linalg.cho_solve(scipy.linalg.cho_factor(sigma), np.eye(len(mu)))
        return cls(mu, np.diag(sigma).copy(), sub, omega)


def as_data_matrix(samples) -> np.ndarray:
    return samples.data if isinstance(samples, SampleMatrix) else np.atleast_2d(np.asarray(samples, dtype=np.float64))


def _check_j(j: int, p: int) -> int:
    if not 0 <= j < p:
        msg = f"coordinate {j} out of range for p={p}"
        raise DomainError(msg)
    return int(j)


def ideal_estimator(samples, mu, omega, m: int) -> MomentEstimate:
    """``(1 / (n p^m)) sum_i [(Y_i - mu)' Omega (Y_i - mu)]^m``"""
    m = _check_order("m", m)
    data = as_data_matrix(samples)
    n, p = data.shape
    mu = np.asarray(mu, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    if mu.shape != (p,) or omega.shape != (p, p):
        msg = f"dimension mismatch: data has p={p}, mu {mu.shape}, omega {omega.shape}"
        raise DomainError(msg)
    if not np.allclose(omega, omega.T, rtol=0, atol=1e-10 * max(1.0, np.abs(omega).max())):
        msg = "omega is not symmetric"
        raise DomainError(msg)
    scaled = radial_reconstruction(data, mu, omega) / p
    return MomentEstimate(m, float(np.mean(scaled**m)), "ideal", n)


def marginal_estimator(samples, j: int, mu_j: float, sigma_jj: float, m: int) -> MomentEstimate:
    """``(1 / (n c_m sigma_jj^m)) sum_i (Y_ij - mu_j)^(2m)``

    ``c_m`` is taken at the full data dimension ``p``, not at 1.
    """
    data = as_data_matrix(samples)
    n, p = data.shape
    j = _check_j(j, p)
    if not sigma_jj > 0:
        msg = f"sigma_jj must be positive, got {sigma_jj}"
        raise DomainError(msg)
    total = column_power_sums(data[:, j : j + 1], np.array([mu_j]), np.array([sigma_jj]), m)[0]
    return MomentEstimate(m, total / (n * marginal_constant(p, m)), "marginal", n, (j,))


def mae(samples, loc: LocationScale, m: int) -> MomentEstimate:
    """Marginal Aggregation Estimator, the average of the Marginal Estimators
    over all coordinates"""
    data = as_data_matrix(samples)
    n, p = data.shape
    if loc.p != p:
        msg = f"location/scale has p={loc.p}, data has p={p}"
        raise DomainError(msg)
    sums = column_power_sums(data, loc.mu_hat, loc.sigma_diag_hat, m)
    return MomentEstimate(m, math.fsum(sums) / (marginal_constant(p, m) * n * p), "mae", n)


def _quadratic_forms(centered: np.ndarray, sigma_JJ: np.ndarray) -> np.ndarray:
    try:
        lower = scipy.linalg.cholesky(sigma_JJ, lower=True)
    except np.linalg.LinAlgError as err:
        msg = f"block covariance is not positive definite (condition number {np.linalg.cond(sigma_JJ):.3g})"
        raise ValueError(msg) from err
    condition = np.linalg.cond(sigma_JJ)
    if condition > MAX_CONDITION:
        msg = f"block covariance is numerically singular (condition number {condition:.3g})"
        raise ValueError(msg)
    solved = scipy.linalg.solve_triangular(lower, centered.T, lower=True)
    return np.sum(solved * solved, axis=0)


def blockwise_estimator(samples, J, mu_J, sigma_JJ, m: int) -> MomentEstimate:
    """``(1 / (n c*_{m,|J|})) sum_i [(Y_iJ - mu_J)' Sigma_JJ^(-1) (Y_iJ - mu_J)]^m``

    The quadratic forms come from a triangular solve against the Cholesky
    factor of ``Sigma_JJ``.
    """
    data = as_data_matrix(samples)
    n, p = data.shape
    J = np.asarray(J, dtype=np.int64)
    if J.ndim != 1 or len(J) == 0 or len(J) > p or J.min() < 0 or J.max() >= p:
        msg = f"block {J.tolist()} is not a valid coordinate set for p={p}"
        raise DomainError(msg)
    sigma_JJ = np.atleast_2d(np.asarray(sigma_JJ, dtype=np.float64))
    mu_J = np.atleast_1d(np.asarray(mu_J, dtype=np.float64))
    if sigma_JJ.shape != (len(J), len(J)) or mu_J.shape != (len(J),):
        msg = f"block of size {len(J)} got mu_J {mu_J.shape} and sigma_JJ {sigma_JJ.shape}"
        raise DomainError(msg)
    forms = _quadratic_forms(data[:, J] - mu_J, sigma_JJ)
    value = float(np.sum(forms**m)) / (n * block_constant(p, len(J), m))
    return MomentEstimate(m, value, "blockwise", n, block_key(J))


def bae(samples, blocks, loc: LocationScale, m: int) -> MomentEstimate:
    """Blockwise Aggregation Estimator, the unweighted average of the
    Blockwise Estimators over ``blocks`` (which may overlap)"""
    data = as_data_matrix(samples)
    n, p = data.shape
    blocks = as_block_collection(blocks, p)
    if len(blocks) == 0:
        msg = "block collection is empty"
        raise DomainError(msg)
    values = [
        blockwise_estimator(data, J, loc.mu_hat[J], loc.block(J), m).value for J in blocks
    ]
    return MomentEstimate(m, math.fsum(values) / len(values), "bae", n)


def confidence_interval(
    samples,
    j: int,
    loc: LocationScale,
    m: int,
    theta_hat_m: float,
    theta_hat_2m: float,
    alpha: float,
) -> ConfidenceInterval:
    """Asymptotic ``1 - alpha`` interval for ``theta_m`` around the Marginal
    Estimator of coordinate ``j``

    The half-width is ``q_{1-alpha/2} / sqrt(n) sqrt(c_2m / c_m^2 theta_2m - theta_m^2)``
    with consistent plug-ins for ``theta_m`` and ``theta_2m``. ``alpha = 1``
    gives a zero-width interval.
    """
    if not 0 < alpha <= 1:
        msg = f"alpha must lie in (0, 1], got {alpha}"
        raise DomainError(msg)
    if not theta_hat_2m >= 0:
        msg = f"theta_hat_2m must be nonnegative, got {theta_hat_2m}"
        raise DomainError(msg)
    data = as_data_matrix(samples)
    n, p = data.shape
    j = _check_j(j, p)
    center = marginal_estimator(data, j, loc.mu_hat[j], loc.sigma_diag_hat[j], m).value
    radicand = marginal_constant(p, 2 * m) / marginal_constant(p, m) ** 2 * theta_hat_2m - theta_hat_m**2
    clamped = radicand < 0
    if clamped:
        if ConfidenceInterval.warn_on_flags:
            warnings.warn(
                f"negative plug-in variance {radicand:.3g} clamped to 0, the interval is degenerate",
                RuntimeWarning,
                stacklevel=2,
            )
        radicand = 0.0
    half = normal_quantile(1 - alpha / 2) / math.sqrt(n) * math.sqrt(radicand)
    return ConfidenceInterval(center - half, center + half, 1 - alpha, center, clamped)


def marginal_with_ci(
    samples,
    j: int,
    loc: LocationScale,
    m: int,
    alpha: float,
    theta_hat_m: float | None = None,
    theta_hat_2m: float | None = None,
) -> MomentEstimate:
    """Marginal Estimator of coordinate ``j`` carrying its confidence interval

    Missing plug-ins default to the MAE at orders ``m`` and ``2m`` computed
    with ``loc``.
    """
    if theta_hat_m is None:
        theta_hat_m = mae(samples, loc, m).value
    if theta_hat_2m is None:
        theta_hat_2m = mae(samples, loc, 2 * m).value
    ci = confidence_interval(samples, j, loc, m, theta_hat_m, theta_hat_2m, alpha)
    return MomentEstimate(m, ci.center, "marginal", as_data_matrix(samples).shape[0], (int(j),), ci)


def sample_location_scale(samples, blocks=None) -> LocationScale:
    """Sample mean with ``1/n`` normalized variances and block submatrices"""
    data = as_data_matrix(samples)
    n, p = data.shape
    mu = data.mean(axis=0)
    centered = data - mu
    diag = np.einsum("ij,ij->j", centered, centered) / n
    sub = None
    if blocks is not None:
        sub = {}
        for J in as_block_collection(blocks, p):
            part = centered[:, J]
            sub[block_key(J)] = part.T @ part / n
    return LocationScale(mu, diag, sub)


__all__ = [
    "ConfidenceInterval",
    "LocationScale",
    "MomentEstimate",
    "bae",
    "blockwise_estimator",
    "confidence_interval",
    "ideal_estimator",
    "mae",
    "marginal_estimator",
    "marginal_with_ci",
    "sample_location_scale",
]
