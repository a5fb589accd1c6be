"""Exact combinatorial constants and theoretical variance oracles

Every Gamma ratio here is evaluated as a telescoping product, so the
constants stay finite and accurate for dimensions far beyond where
``Gamma(p / 2)`` overflows.
"""

from __future__ import annotations

import dataclasses
import math
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.special

from elliptical_moments.blocks import as_block_collection, validate_blocks
from elliptical_moments.errors import DomainError
from elliptical_moments.radial import CustomRadial, Gaussian, RadialFamily, StudentT

# beyond this many factors the products are accumulated in log space
_LOG_SPACE_ORDER = 20


def _check_order(name: str, value: int, minimum: int = 1) -> int:
    if int(value) != value or value < minimum:
        msg = f"{name} must be an integer >= {minimum}, got {value!r}"
        raise DomainError(msg)
    return int(value)


def gaussian_even_moment(k: int) -> float:
    """``E N(0,1)^(2k) = (2k - 1)!!``"""
    k = _check_order("k", k)
    out = 1.0
    for j in range(1, 2 * k, 2):
        out *= j
    return out


def chi_square_even_moment(p: int, m: int, log: bool = False) -> float:
    """``E (chi^2_p)^m = prod_{j<m} (p + 2j)``

    With ``log=True`` the natural logarithm is returned instead, which stays
    finite when the moment itself would overflow.
    """
    p = _check_order("p", p)
    m = _check_order("m", m)
    if log or m > _LOG_SPACE_ORDER:
        value = math.fsum(math.log(p + 2 * j) for j in range(m))
        return value if log else math.exp(value)
    out = 1.0
    for j in range(m):
        out *= p + 2 * j
    return out


def marginal_constant(p: int, m: int) -> float:
    """``c_m = (2m-1)!! (p/2)^m Gamma(p/2) / Gamma(p/2 + m)``

    Relates the ``2m``-th moment of one standardized coordinate to
    ``theta_m``: ``E (Y_j - mu_j)^(2m) = c_m sigma_jj^m theta_m``.
    """
    p = _check_order("p", p)
    m = _check_order("m", m)
    out = 1.0
    half = p / 2
    for j in range(m):
        out *= (2 * j + 1) * half / (half + j)
    return out


def block_constant(p: int, K: int, m: int) -> float:
    """``c*_{m,K}``, the block analogue of `marginal_constant`

    Evaluated by the recurrence ``c*_{1,K} = K`` and
    ``c*_{m,K} = p (K + 2m - 2) / (p + 2m - 2) c*_{m-1,K}``.
    """
    p = _check_order("p", p)
    K = _check_order("K", K)
    m = _check_order("m", m)
    if K > p:
        msg = f"block size K={K} exceeds the dimension p={p}"
        raise DomainError(msg)
    out = float(K)
    for order in range(2, m + 1):
        out *= p * (K + 2 * order - 2) / (p + 2 * order - 2)
    return out


def radial_moment_ratio(family: RadialFamily, p: int, k: int) -> float:
    """``r_k = E xi^(2k) / E chi_p^(2k)``

    For ``StudentT(nu)`` this is ``(nu - 2)^k / prod_{j=1..k} (nu - 2j)``,
    from ``E (chi^2_nu)^(-k) = 1 / prod_{j=1..k} (nu - 2j)``.
    """
    p = _check_order("p", p)
    k = _check_order("k", k)
    family.check_moment(k)
    if isinstance(family, Gaussian):
        return 1.0
    if isinstance(family, StudentT):
        out = 1.0
        for j in range(1, k + 1):
            out *= (family.nu - 2) / (family.nu - 2 * j)
        return out
    if isinstance(family, CustomRadial) and family.even_moment is not None:
        return family.even_moment(p, k) / chi_square_even_moment(p, k)
    msg = f"the moments of {family} are not known in closed form"
    raise DomainError(msg)


def h_factor(k: int, m: int) -> float:
    """``h_m(k) = k var(chi_k^(2m)) / (E chi_k^(2m))^2``

    The ratio of consecutive chi-square moments is accumulated in exact
    rational arithmetic, so ``h_factor(1, 2) == 32 / 3`` holds bit for bit.
    """
    k = _check_order("k", k)
    m = _check_order("m", m)
    ratio = Fraction(1)
    for j in range(m):
        ratio *= Fraction(k + 2 * m + 2 * j, k + 2 * j)
    return float(k * (ratio - 1))


def block_division_factor(blocks, p: int, m: int) -> float:
    """``(p / |A|^2) sum_{J in A} h_m(|J|) / |J|``

    ``blocks`` is a `BlockCollection` or any sequence of index lists.
    """
    p = _check_order("p", p)
    m = _check_order("m", m)
    blocks = as_block_collection(blocks, p)
    if len(blocks) == 0:
        msg = "block collection is empty"
        raise DomainError(msg)
    # cache per distinct size, block collections usually repeat a few sizes
    sizes, multiplicity = np.unique(blocks.sizes, return_counts=True)
    total = math.fsum(
        int(count) * h_factor(int(size), m) / int(size)
        for size, count in zip(sizes, multiplicity)
    )
    return p * total / len(blocks) ** 2


def _bivariate_terms(m: int, s: int) -> float:
    eta = [1.0] + [gaussian_even_moment(j) for j in range(1, 2 * m + 1)]
    out = 0.0
    for k1 in range(max(1, s - m), min(m, s - 1) + 1):
        k2 = s - k1
        out += (
            math.comb(2 * m, 2 * k1)
            * math.comb(2 * m, 2 * k2)
            * eta[m - k1]
            * eta[m - k2]
            * (eta[s] - eta[k1] * eta[k2])
        )
    return out


def bivariate_normal_power_cov(rho: float, m: int, exact: bool = False) -> float:
    """Covariance of ``X1^(2m)`` and ``X2^(2m)`` for a unit-variance normal pair

    Writing ``X_i = sqrt(1 - |rho|) W_i + sqrt(|rho|) V`` with independent
    standard normals gives ``sum_s B_m(s) (1 - |rho|)^(2m - s) |rho|^s`` with

        B_m(s) = sum_{k1 + k2 = s, 1 <= k_i <= m}
                 C(2m, 2k1) C(2m, 2k2) eta_{m-k1} eta_{m-k2} (eta_s - eta_k1 eta_k2)

    By default the truncated sum over ``s = 2..m`` with weights
    ``(1 - |rho|)^(m - s) |rho|^s`` is returned, which is exactly ``72 rho^2``
    at ``m = 2``. With ``exact=True`` the full expansion over ``s = 2..2m`` is
    evaluated, which is the true covariance (``72 rho^2 + 24 rho^4`` at
    ``m = 2``).
    """
    m = _check_order("m", m, minimum=2)
    if not abs(rho) < 1:
        msg = f"|rho| must be < 1, got {rho}"
        raise DomainError(msg)
    r = abs(rho)
    top, exponent = (2 * m, 2 * m) if exact else (m, m)
    return math.fsum(
        _bivariate_terms(m, s) * (1 - r) ** (exponent - s) * r**s
        for s in range(2, top + 1)
    )


@dataclasses.dataclass(frozen=True)
class VarianceDecomposition:
    """Three-term decomposition of a relative variance ``var(theta_hat) / theta_m^2``"""

    dominating: float
    second_order: float
    correlation_term: float = 0.0
    total: float = dataclasses.field(init=False)

    def __post_init__(self):
        for name in ("dominating", "second_order", "correlation_term"):
            value = getattr(self, name)
            # r_2m - r_m^2 can round to a tiny negative value
            if -1e-15 < value < 0:
                object.__setattr__(self, name, 0.0)
            elif not value >= 0:
                msg = f"variance component {name} must be nonnegative, got {value}"
                raise ValueError(msg)
        object.__setattr__(
            self,
            "total",
            math.fsum((self.dominating, self.second_order, self.correlation_term)),
        )


def _ratio_terms(family, p, m):
    r_m = radial_moment_ratio(family, p, m)
    r_2m = radial_moment_ratio(family, p, 2 * m)
    return r_2m / r_m**2


def _dominating(family, p, n, m):
    return (_ratio_terms(family, p, m) - 1) / n


def variance_oracle_ie(family: RadialFamily, p: int, n: int, m: int) -> VarianceDecomposition:
    """Relative variance of the Ideal Estimator

    ``(r_2m - r_m^2) / (n r_m^2)`` plus ``(r_2m / r_m^2) h_m(p) / (n p)``;
    the sum is exact, not a bound.
    """
    n = _check_order("n", n)
    return VarianceDecomposition(
        dominating=_dominating(family, p, n, m),
        second_order=_ratio_terms(family, p, m) * h_factor(p, m) / (n * p),
    )


def variance_oracle_marginal(family: RadialFamily, p: int, n: int, m: int) -> float:
    """Exact relative variance of a single Marginal Estimator,
    ``(c_2m theta_2m / (c_m^2 theta_m^2) - 1) / n``"""
    n = _check_order("n", n)
    theta_ratio = _ratio_terms(family, p, m) * math.exp(
        chi_square_even_moment(p, 2 * m, log=True)
        - 2 * chi_square_even_moment(p, m, log=True)
    )
    constants = marginal_constant(p, 2 * m) / marginal_constant(p, m) ** 2
    return (constants * theta_ratio - 1) / n


def variance_oracle_mae(
    family: RadialFamily,
    correlation_frobenius_offdiag_sq: float,
    p: int,
    n: int,
    m: int,
    C_m: float | None = None,
) -> VarianceDecomposition:
    """Relative variance of the Marginal Aggregation Estimator

    Parameters
    ----------
        correlation_frobenius_offdiag_sq: ``||Lambda - I||_F^2``, see
            `correlation_offdiag_frobenius_sq`
        C_m: constant of the correlation term; defaults to 72 for ``m = 2``,
            the only order where it is known, and must be supplied otherwise
    """
    n = _check_order("n", n)
    m = _check_order("m", m)
    if C_m is None:
        if m != 2:
            msg = f"C_m is only known for m=2; supply it explicitly for m={m}"
            raise DomainError(msg)
        C_m = 72.0
    ratio = _ratio_terms(family, p, m)
    eta = gaussian_even_moment(m)
    return VarianceDecomposition(
        dominating=_dominating(family, p, n, m),
        second_order=ratio * h_factor(1, m) / (n * p),
        correlation_term=(C_m / n)
        * (ratio / eta**2)
        * correlation_frobenius_offdiag_sq
        / p**2,
    )


def variance_oracle_bae(
    family: RadialFamily,
    blocks,
    cross_block_operator_norms_sq,
    p: int,
    n: int,
    m: int,
    C_tilde: float | None = None,
) -> VarianceDecomposition:
    """Relative variance bound of the Blockwise Aggregation Estimator

    The blocks must not overlap. ``C_tilde`` multiplies the sum of the
    cross-block norms (see `cross_block_operator_norms_sq`); it has no known
    value and is only optional when every norm is zero.
    """
    n = _check_order("n", n)
    blocks = as_block_collection(blocks, p)
    validate_blocks(blocks, p, require_disjoint=True)
    norms = np.asarray(cross_block_operator_norms_sq, dtype=np.float64)
    cross = math.fsum(norms.ravel())
    if C_tilde is None:
        if cross > 0:
            msg = "C_tilde must be supplied when cross-block norms are nonzero"
            raise DomainError(msg)
        C_tilde = 0.0
    ratio = _ratio_terms(family, p, m)
    return VarianceDecomposition(
        dominating=_dominating(family, p, n, m),
        second_order=ratio * block_division_factor(blocks, p, m) / (n * p),
        correlation_term=(C_tilde / n) * cross / len(blocks) ** 2,
    )


def correlation_matrix(sigma) -> np.ndarray:
    """``diag(Sigma)^(-1/2) Sigma diag(Sigma)^(-1/2)`` with an exact unit diagonal

    Coordinates with zero variance get a zero row and column.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    scale = np.sqrt(np.diag(sigma))
    inv = np.divide(1.0, scale, out=np.zeros_like(scale), where=scale > 0)
    out = sigma * np.outer(inv, inv)
    np.fill_diagonal(out, 1.0)
    return out


def correlation_offdiag_frobenius_sq(correlation) -> float:
    """``||Lambda - I||_F^2``; a covariance matrix is normalized first"""
    corr = correlation_matrix(correlation)
    np.fill_diagonal(corr, 0.0)
    return float(np.sum(corr * corr))


def _inverse_sqrt(matrix):
    values, vectors = scipy.linalg.eigh(matrix)
    if values[0] <= 0:
        msg = f"block is not positive definite (minimum eigenvalue {values[0]:.3g})"
        raise ValueError(msg)
    return (vectors / np.sqrt(values)) @ vectors.T


def cross_block_operator_norms_sq(sigma, blocks) -> list[float]:
    """Squared spectral norms of ``Sigma_II^(-1/2) Sigma_IJ Sigma_JJ^(-1/2)``
    over all ordered pairs of distinct blocks ``I != J``"""
    sigma = np.asarray(sigma, dtype=np.float64)
    blocks = as_block_collection(blocks, sigma.shape[0])
    members = list(blocks)
    roots = [_inverse_sqrt(sigma[np.ix_(J, J)]) for J in members]
    out = []
    for a, I in enumerate(members):
        for b, J in enumerate(members):
            if a == b:
                continue
            product = roots[a] @ sigma[np.ix_(I, J)] @ roots[b]
            out.append(float(scipy.linalg.svdvals(product)[0] ** 2))
    return out


def normal_quantile(q: float) -> float:
    """Standard normal quantile, ``q`` in ``[0, 1]``"""
    if not 0 <= q <= 1:
        msg = f"quantile level must lie in [0, 1], got {q}"
        raise DomainError(msg)
    return float(scipy.special.ndtri(q))


__all__ = [
    "VarianceDecomposition",
    "block_constant",
    "block_division_factor",
    "bivariate_normal_power_cov",
    "chi_square_even_moment",
    "correlation_matrix",
    "correlation_offdiag_frobenius_sq",
    "cross_block_operator_norms_sq",
    "gaussian_even_moment",
    "h_factor",
    "marginal_constant",
    "normal_quantile",
    "radial_moment_ratio",
    "variance_oracle_bae",
    "variance_oracle_ie",
    "variance_oracle_mae",
    "variance_oracle_marginal",
]
