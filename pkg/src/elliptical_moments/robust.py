"""Adaptive Huber M-estimators of location, variance and covariance

Each scalar parameter is the minimizer of ``sum_i huber_loss(z_i - beta, tau)``
for the appropriate transform ``z`` of the data (the raw column, its square or
the product of two columns), solved by iteratively reweighted averaging. The
truncation level ``tau`` of each fit is chosen by K-fold cross-validation.
"""

from __future__ import annotations

import dataclasses
import itertools
import typing as tp
import warnings

import numpy as np
import scipy.linalg

from elliptical_moments.blocks import as_block_collection
from elliptical_moments.errors import ConfigError, ConvergenceError, DomainError
from elliptical_moments.estimators import LocationScale, as_data_matrix, block_key
from elliptical_moments.kernels import huber_irls

# consistency factor of the median absolute deviation for normal data
MAD_SCALE = 1.482602218505602
# relative tolerance under which two CV scores count as tied
TIE_RTOL = 1e-12
LOADING = 1e-8
VARIANCE_FLOOR = 1e-12


@dataclasses.dataclass(frozen=True)
class HuberConfig:
    """Settings of the adaptive Huber fits

    Parameters
    ----------
        tau_grid: candidate truncation levels, strictly increasing
        cv_folds: number of cross-validation folds
        max_iters: iteration cap of each reweighting solve
        tol: relative convergence tolerance on the fitted parameter
        scale_relative: when set, the grid is in units of the robust scale
            (normalized MAD) of the transformed data being fitted, otherwise
            the levels are absolute
    """

    tau_grid: tuple[float, ...] = (0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 8.0, 13.0, 21.0)
    cv_folds: int = 5
    max_iters: int = 200
    tol: float = 1e-10
    scale_relative: bool = True

    warn_on_flags: tp.ClassVar[bool] = True

    def __post_init__(self):
        grid = tuple(float(tau) for tau in self.tau_grid)
        object.__setattr__(self, "tau_grid", grid)
        if not grid:
            msg = "tau_grid must not be empty"
            raise ConfigError(msg)
        if any(tau <= 0 for tau in grid) or any(b <= a for a, b in itertools.pairwise(grid)):
            msg = f"tau_grid must be positive and strictly increasing, got {grid}"
            raise ConfigError(msg)
        if self.cv_folds < 2:
            msg = f"cv_folds must be >= 2, got {self.cv_folds}"
            raise ConfigError(msg)
        if self.max_iters < 1 or not self.tol > 0:
            msg = f"need max_iters >= 1 and tol > 0, got {self.max_iters} and {self.tol}"
            raise ConfigError(msg)

    @classmethod
    def log_grid(cls, lo: float, hi: float, steps: int, **kwargs) -> HuberConfig:
        """Config with ``steps`` log-spaced levels from ``lo`` to ``hi``"""
        if not 0 < lo <= hi or steps < 1:
            msg = f"invalid tau grid {lo}:{hi}:{steps}"
            raise ConfigError(msg)
        grid = np.geomspace(lo, hi, steps) if steps > 1 else np.array([lo])
        return cls(tau_grid=tuple(grid), **kwargs)

    @classmethod
    def from_spec(cls, text: str, **kwargs) -> HuberConfig:
        """Parse ``lo:hi:steps``"""
        try:
            lo, hi, steps = text.split(":")
            bounds = (float(lo), float(hi), int(steps))
        except ValueError as err:
            msg = f"tau grid must look like lo:hi:steps, got {text!r}"
            raise ConfigError(msg) from err
        return cls.log_grid(*bounds, **kwargs)


def huber_loss(u, tau: float):
    """``u^2 / 2`` for ``|u| <= tau``, ``tau |u| - tau^2 / 2`` beyond"""
    if not tau > 0:
        msg = f"tau must be positive, got {tau}"
        raise DomainError(msg)
    a = np.abs(u)
    out = np.where(a <= tau, 0.5 * a * a, tau * a - 0.5 * tau * tau)
    return float(out) if np.ndim(out) == 0 else out


def huber_location(x, tau: float, config: HuberConfig | None = None) -> float:
    """Minimizer of ``sum_i huber_loss(x_i - beta, tau)``

    Starts from the median. Raises `ConvergenceError` carrying the last
    iterate when ``config.max_iters`` reweighting steps do not reach
    ``config.tol``.
    """
    config = HuberConfig() if config is None else config
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(x) == 0:
        msg = "cannot fit a location to an empty vector"
        raise DomainError(msg)
    if not tau > 0:
        msg = f"tau must be positive, got {tau}"
        raise DomainError(msg)
    beta, iterations, converged = huber_irls(x, tau, float(np.median(x)), config.tol, config.max_iters)
    if not converged:
        msg = f"Huber fit did not converge in {iterations} iterations (tau={tau:.4g}, last iterate {beta:.10g})"
        raise ConvergenceError(msg, last_iterate=beta)
    return float(beta)


def _centered(beta: float, mu: float) -> tuple[float, str | None]:
    # beta - mu^2 1{beta > mu^2}; a nonpositive beta only comes from all-zero data
    if beta > mu * mu:
        return beta - mu * mu, None
    if beta > 0:
        return beta, "uncentered second moment used"
    return VARIANCE_FLOOR, "variance floor applied"


def huber_variance(
    x, tau_jj: float, config: HuberConfig | None = None, mu_hat: float | None = None
) -> float:
    """``beta_hat - mu_hat^2 1{beta_hat > mu_hat^2}`` with ``beta_hat`` the
    Huber fit to ``x^2``

    ``mu_hat`` defaults to the Huber location of ``x`` at level ``sqrt(tau_jj)``.
    When ``beta_hat <= mu_hat^2`` the uncentered ``beta_hat`` is returned, and
    when ``beta_hat`` is not positive the floor ``1e-12``; both emit a
    `RuntimeWarning`.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(x) < 2:
        msg = f"variance needs at least 2 observations, got {len(x)}"
        raise DomainError(msg)
    if mu_hat is None:
        mu_hat = huber_location(x, np.sqrt(tau_jj), config)
    beta = huber_location(x * x, tau_jj, config)
    value, flag = _centered(beta, mu_hat)
    if flag and HuberConfig.warn_on_flags:
        warnings.warn(f"{flag} ({value:.3g})", RuntimeWarning, stacklevel=2)
    return value


def huber_covariance(
    x,
    y,
    tau_jk: float,
    config: HuberConfig | None = None,
    mu_x: float | None = None,
    mu_y: float | None = None,
) -> float:
    """``beta_hat - mu_x mu_y`` with ``beta_hat`` the Huber fit to ``x * y``

    The locations default to Huber fits at level ``sqrt(tau_jk)``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        msg = f"x and y must have equal lengths, got {len(x)} and {len(y)}"
        raise DomainError(msg)
    if mu_x is None:
        mu_x = huber_location(x, np.sqrt(tau_jk), config)
    if mu_y is None:
        mu_y = huber_location(y, np.sqrt(tau_jk), config)
    return huber_location(x * y, tau_jk, config) - mu_x * mu_y


def robust_scale(z: np.ndarray) -> float:
    """Normalized MAD, falling back to the standard deviation and then to 1"""
    scale = MAD_SCALE * float(np.median(np.abs(z - np.median(z))))
    if scale > 0:
        return scale
    scale = float(np.std(z))
    return scale if scale > 0 else 1.0


def cross_validate_tau(
    x,
    config: HuberConfig,
    rng: np.random.Generator,
    y=None,
    kind: str = "location",
) -> float:
    """Pick the truncation level by K-fold cross-validation

    The fitted data are ``x`` for ``kind="location"``, ``x^2`` for
    ``kind="second_moment"`` and ``x * y`` whenever ``y`` is given. Each
    candidate is scored by the mean squared deviation of the held-out data
    from the fit on the other folds; the lowest score wins, ties going to the
    larger level. Candidates whose fit does not converge are skipped. The
    returned level is absolute (already multiplied by the data scale when
    ``config.scale_relative``).
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if y is not None:
        z = x * np.asarray(y, dtype=np.float64).ravel()
    elif kind == "second_moment":
        z = x * x
    elif kind == "location":
        z = x
    else:
        msg = f"unknown kind {kind!r}, expected 'location' or 'second_moment'"
        raise DomainError(msg)
    scale = robust_scale(z) if config.scale_relative else 1.0
    candidates = [tau * scale for tau in config.tau_grid]
    if len(candidates) == 1:
        return candidates[0]
    n = len(z)
    if n < 2 * config.cv_folds:
        msg = f"{n} observations are too few for {config.cv_folds}-fold cross-validation"
        raise DomainError(msg)
    folds = np.array_split(rng.permutation(n), config.cv_folds)
    train_masks = []
    for fold in folds:
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        train_masks.append(mask)
    best_tau, best_score = None, np.inf
    last_error = None
    for tau in candidates:
        total = 0.0
        try:
            for fold, mask in zip(folds, train_masks):
                fit = huber_location(z[mask], tau, config)
                total += float(np.sum((z[fold] - fit) ** 2))
        except ConvergenceError as err:
            last_error = err
            continue
        score = total / n
        if best_tau is None or score <= best_score * (1 + TIE_RTOL):
            best_tau, best_score = tau, min(score, best_score)
    if best_tau is None:
        msg = f"no candidate tau converged: {last_error}"
        raise ConvergenceError(msg, last_iterate=getattr(last_error, "last_iterate", None))
    return best_tau


def _repair(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    smallest = scipy.linalg.eigvalsh(matrix)[0]
    if smallest > 0:
        return matrix, 0.0
    loading = abs(smallest) + LOADING
    return matrix + loading * np.eye(len(matrix)), loading


def robust_location_scale(
    samples,
    blocks=None,
    config: HuberConfig | None = None,
    rng: np.random.Generator | None = None,
) -> LocationScale:
    """Huber estimates of every ``mu_j`` and ``sigma_jj``, plus the ``Sigma_JJ``
    submatrices of ``blocks`` assembled entry by entry

    Non positive definite submatrices get ``lambda I`` added with
    ``lambda = |min eigenvalue| + 1e-8``. Each ``sigma_jj`` follows
    `huber_variance`; uncentered fallbacks, floors and loadings are listed in
    the result's ``flags``.

    The cross-validation folds are drawn from ``rng``, ``numpy.random.default_rng(0)``
    when omitted, so repeated calls agree.
    """
    config = HuberConfig() if config is None else config
    rng = np.random.default_rng(0) if rng is None else rng
    data = as_data_matrix(samples)
    n, p = data.shape
    flags = []
    mu = np.empty(p)
    diag = np.empty(p)
    for j in range(p):
        column = data[:, j]
        try:
            mu[j] = huber_location(column, cross_validate_tau(column, config, rng), config)
            tau = cross_validate_tau(column, config, rng, kind="second_moment")
            beta = huber_location(column * column, tau, config)
        except ConvergenceError as err:
            msg = f"coordinate {j + 1}: {err}"
            raise ConvergenceError(msg, last_iterate=err.last_iterate) from err
        diag[j], flag = _centered(beta, mu[j])
        if flag:
            flags.append(f"{flag} at coordinate {j + 1}")
    sub = None
    if blocks is not None:
        sub = {}
        entries: dict[tuple[int, int], float] = {}
        for J in as_block_collection(blocks, p):
            key = block_key(J)
            matrix = np.diag(diag[J])
            for (a, ja), (b, jb) in itertools.combinations(enumerate(key), 2):
                pair = (min(ja, jb), max(ja, jb))
                if pair not in entries:
                    x, y = data[:, pair[0]], data[:, pair[1]]
                    try:
                        tau = cross_validate_tau(x, config, rng, y=y)
                        entries[pair] = huber_location(x * y, tau, config) - mu[pair[0]] * mu[pair[1]]
                    except ConvergenceError as err:
                        msg = f"entry ({pair[0] + 1}, {pair[1] + 1}): {err}"
                        raise ConvergenceError(msg, last_iterate=err.last_iterate) from err
                matrix[a, b] = matrix[b, a] = entries[pair]
            matrix, loading = _repair(matrix)
            if loading:
                flags.append(f"diagonal loading {loading:.3g} applied to block {[j + 1 for j in key]}")
            sub[key] = matrix
    if flags and LocationScale.warn_on_flags:
        warnings.warn("; ".join(flags), RuntimeWarning, stacklevel=2)
    return LocationScale(mu, diag, sub, flags=tuple(flags))


__all__ = [
    "HuberConfig",
    "cross_validate_tau",
    "huber_covariance",
    "huber_location",
    "huber_loss",
    "huber_variance",
    "robust_location_scale",
    "robust_scale",
]
