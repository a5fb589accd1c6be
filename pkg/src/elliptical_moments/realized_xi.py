"""Realized radial path of a return panel

The pipeline runs in four steps: demean the returns, remove a factor
component, fit an ARCH(k) volatility to every coordinate, and aggregate the
standardized squared residuals into ``xi_t^2 = sum_j Z_t(j)^2 / lambda_t(j)^2``.
`kernel_theta` is the time-local version of the Marginal Aggregation
Estimator.
"""

from __future__ import annotations

import dataclasses
import os
import typing as tp
import warnings

import joblib
import numpy as np
import pandas as pd
import scipy.linalg
import scipy.optimize

from elliptical_moments.errors import DomainError
from elliptical_moments.estimators import LocationScale, as_data_matrix
from elliptical_moments.kernels import (
    BOXCAR,
    CENTERED,
    GAUSSIAN,
    LEFT,
    RIGHT,
    arch_information,
    arch_loglik_grad,
    arch_variance,
    centered_moving_average,
    kernel_smooth,
    row_power_means,
)
from elliptical_moments.model import sample_sphere
from elliptical_moments.radial import Gaussian, RadialFamily
from elliptical_moments.special_functions import marginal_constant


@dataclasses.dataclass(frozen=True)
class PanelSeries:
    """``T x p`` returns with optional ``T x K`` observed factors

    Missing values are rejected, never imputed.
    """

    returns: np.ndarray
    factors: np.ndarray | None = None
    timestamps: pd.Index | None = None

    def __post_init__(self):
        returns = np.asarray(self.returns, dtype=np.float64)
        if returns.ndim == 1:
            returns = returns[:, np.newaxis]
        if returns.ndim != 2 or returns.size == 0:
            msg = f"returns must be a non-empty T x p matrix, got shape {returns.shape}"
            raise DomainError(msg)
        if not np.all(np.isfinite(returns)):
            msg = "returns contain missing or non-finite values"
            raise DomainError(msg)
        object.__setattr__(self, "returns", returns)
        if self.factors is not None:
            factors = np.asarray(self.factors, dtype=np.float64)
            if factors.ndim == 1:
                factors = factors[:, np.newaxis]
            if factors.shape[0] != returns.shape[0]:
                msg = f"factors have {factors.shape[0]} rows, returns {returns.shape[0]}"
                raise DomainError(msg)
            if not np.all(np.isfinite(factors)):
                msg = "factors contain missing or non-finite values"
                raise DomainError(msg)
            object.__setattr__(self, "factors", factors)
        timestamps = pd.RangeIndex(returns.shape[0]) if self.timestamps is None else pd.Index(self.timestamps)
        if len(timestamps) != returns.shape[0]:
            msg = f"{len(timestamps)} timestamps for {returns.shape[0]} rows"
            raise DomainError(msg)
        if not (timestamps.is_monotonic_increasing and timestamps.is_unique):
            msg = "timestamps must be strictly increasing"
            raise DomainError(msg)
        object.__setattr__(self, "timestamps", timestamps)

    @property
    def T(self) -> int:
        return self.returns.shape[0]

    @property
    def p(self) -> int:
        return self.returns.shape[1]

    @classmethod
    def read_csv(
        cls, path: str | os.PathLike, factors_path: str | os.PathLike | None = None
    ) -> PanelSeries:
        """Panel CSV with header ``date,y1..yp``, factors CSV with ``date,f1..fK``"""
        frame = pd.read_csv(path, index_col=0, float_precision="round_trip")
        if frame.isna().any().any():
            msg = f"{path}: panel has missing values"
            raise DomainError(msg)
        factors = None
        if factors_path is not None:
            factor_frame = pd.read_csv(factors_path, index_col=0, float_precision="round_trip")
            if not factor_frame.index.equals(frame.index):
                msg = f"{factors_path}: dates do not match {path}"
                raise DomainError(msg)
            factors = factor_frame.to_numpy(dtype=np.float64)
        return cls(frame.to_numpy(dtype=np.float64), factors, frame.index)


def demean(panel, mode: str = "zero", window: int | None = None) -> np.ndarray:
    """Residuals ``Y_t - mu_hat_t``

    ``mode="zero"`` takes ``mu_hat_t = 0``. ``mode="window"`` subtracts the
    average of the ``window`` previous rows (fewer at the start, and the
    first row is set to zero), so ``window=1`` gives first differences.
    """
    returns = panel.returns if isinstance(panel, PanelSeries) else np.asarray(panel, dtype=np.float64)
    if mode == "zero":
        return returns.copy()
    if mode != "window":
        msg = f"unknown demean mode {mode!r}, expected 'zero' or 'window'"
        raise DomainError(msg)
    if window is None or window < 1:
        msg = f"window must be >= 1, got {window}"
        raise DomainError(msg)
    if window > len(returns):
        msg = f"window {window} exceeds the series length {len(returns)}"
        raise DomainError(msg)
    trailing = pd.DataFrame(returns).rolling(window, min_periods=1).mean().shift(1).to_numpy()
    trailing[0] = returns[0]
    return returns - trailing


@dataclasses.dataclass(frozen=True)
class FactorAdjustment:
    loadings: np.ndarray
    residuals: np.ndarray
    factors: np.ndarray


def _regress(y: np.ndarray, factors: np.ndarray) -> FactorAdjustment:
    K = factors.shape[1]
    rank = np.linalg.matrix_rank(factors)
    if rank < K:
        msg = f"factor matrix is rank deficient (rank {rank} < K={K})"
        raise DomainError(msg)
    coef, *_ = scipy.linalg.lstsq(factors, y)
    return FactorAdjustment(coef.T, y - factors @ coef, factors)


def principal_factors(y: np.ndarray, K: int) -> np.ndarray:
    """Top-``K`` principal component scores of ``y``, from the smaller of the
    ``T x T`` and ``p x p`` second-moment matrices

    Signs are fixed so that the largest entry of each score column is positive.
    """
    T, p = y.shape
    if not 1 <= K < min(T, p):
        msg = f"PCA needs 1 <= K < min(T, p) = {min(T, p)}, got K={K}"
        raise DomainError(msg)
    if T <= p:
        values, vectors = scipy.linalg.eigh(y @ y.T)
        top = np.argsort(values)[::-1][:K]
        scores = vectors[:, top] * np.sqrt(np.clip(values[top], 0, None))
    else:
        values, vectors = scipy.linalg.eigh(y.T @ y)
        top = np.argsort(values)[::-1][:K]
        scores = y @ vectors[:, top]
    signs = np.sign(scores[np.argmax(np.abs(scores), axis=0), np.arange(K)])
    return scores * np.where(signs == 0, 1.0, signs)


def factor_adjust(
    panel,
    factor_source: str = "observed",
    n_factors: int | None = None,
    demeaned: np.ndarray | None = None,
) -> FactorAdjustment:
    """Remove the factor component ``B f_t`` from the demeaned returns

    With ``factor_source="observed"`` every coordinate is regressed on the
    panel's factors; with ``"pca"`` the factors are the top ``n_factors``
    principal component scores and the loadings come from the same
    regression.
    """
    y = demean(panel) if demeaned is None else np.asarray(demeaned, dtype=np.float64)
    if factor_source == "observed":
        if not isinstance(panel, PanelSeries) or panel.factors is None:
            msg = "observed factor adjustment needs a panel with factors"
            raise DomainError(msg)
        return _regress(y, panel.factors)
    if factor_source == "pca":
        if n_factors is None:
            msg = "pca factor adjustment needs n_factors"
            raise DomainError(msg)
        return _regress(y, principal_factors(y, n_factors))
    msg = f"unknown factor source {factor_source!r}, expected 'observed' or 'pca'"
    raise DomainError(msg)


@dataclasses.dataclass(frozen=True)
class ArchConfig:
    """Settings of the ARCH(k) likelihood maximization

    The box is ``a_0 >= eps_rel var(z)``, ``a_i >= 0``; the search starts at
    ``a_0 = init_a0 var(z)`` and ``a_i = init_total / k``.
    """

    max_iters: int = 500
    ftol: float = 1e-12
    gtol: float = 1e-8
    eps_rel: float = 1e-10
    init_a0: float = 0.5
    init_total: float = 0.3


@dataclasses.dataclass(frozen=True)
class ArchFit:
    """Conditional maximum likelihood fit of ``lambda_t^2 = a_0 + sum_i a_i z_(t-i)^2``

    ``lambda_sq`` covers ``t = k .. T-1``; ``loglik_history`` holds the
    log-likelihood after every optimizer iteration.
    """

    order: int
    coefficients: np.ndarray
    lambda_sq: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    loglik_history: tuple[float, ...] = ()
    z_sq: np.ndarray = dataclasses.field(default=None, repr=False)

    warn_on_flags: tp.ClassVar[bool] = True

    @property
    def stationary(self) -> bool:
        return float(np.sum(self.coefficients[1:])) < 1

    def unconditional_variance(self) -> float:
        """``a_0 / (1 - sum a_i)``, or ``a_0`` when the fit is not stationary"""
        a0 = float(self.coefficients[0])
        return a0 / (1 - float(np.sum(self.coefficients[1:]))) if self.stationary else a0

    def full_variance(self) -> np.ndarray:
        """Fitted variances for all ``T`` periods, the first ``k`` backfilled
        with `unconditional_variance`"""
        if not self.stationary and self.warn_on_flags:
            warnings.warn(
                "ARCH fit is not stationary, backfilling the first periods with a_0",
                RuntimeWarning,
                stacklevel=2,
            )
        head = np.full(self.order, self.unconditional_variance())
        return np.concatenate([head, self.lambda_sq])

    def information(self) -> np.ndarray:
        return arch_information(self.z_sq, self.coefficients)

    def standard_errors(self) -> np.ndarray:
        """Asymptotic standard errors of ``(a_0, ..., a_k)`` from the expected information"""
        covariance = scipy.linalg.pinvh(self.information())
        return np.sqrt(np.clip(np.diag(covariance), 0, None))


def arch_fit(z, order: int, config: ArchConfig | None = None) -> ArchFit:
    """Maximize the Gaussian conditional log-likelihood
    ``-1/2 sum_{t>=k} [log lambda_t^2 + z_t^2 / lambda_t^2]`` by L-BFGS-B

    The series is rescaled to unit variance for the search. A search that
    stops short of its tolerance returns its best iterate with
    ``converged=False`` and a `RuntimeWarning`.
    """
    config = ArchConfig() if config is None else config
    z = np.asarray(z, dtype=np.float64).ravel()
    if order < 1:
        msg = f"ARCH order must be >= 1, got {order}"
        raise DomainError(msg)
    if len(z) <= 10 * (order + 1):
        msg = f"ARCH({order}) needs more than {10 * (order + 1)} observations, got {len(z)}"
        raise DomainError(msg)
    if not np.all(np.isfinite(z)):
        msg = "series has non-finite values"
        raise DomainError(msg)
    variance = float(np.var(z))
    if not variance > 0:
        msg = "series is constant, ARCH model is degenerate"
        raise DomainError(msg)
    z_sq = z * z
    scaled = z_sq / variance
    n_eff = len(z) - order

    def objective(params):
        loglik, grad = arch_loglik_grad(scaled, params)
        return -loglik / n_eff, -grad / n_eff

    history = []

    def record(params):
        history.append(float(arch_loglik_grad(z_sq, _unscale(params, variance))[0]))

    start = np.concatenate([[config.init_a0], np.full(order, config.init_total / order)])
    bounds = [(config.eps_rel, None)] + [(0.0, None)] * order
    result = scipy.optimize.minimize(
        objective,
        start,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=record,
        options={"maxiter": config.max_iters, "ftol": config.ftol, "gtol": config.gtol},
    )
    coefficients = _unscale(result.x, variance)
    loglik = float(arch_loglik_grad(z_sq, coefficients)[0])
    if not result.success and ArchFit.warn_on_flags:
        warnings.warn(
            f"ARCH({order}) fit did not converge: {result.message}",
            RuntimeWarning,
            stacklevel=2,
        )
    return ArchFit(
        order=order,
        coefficients=coefficients,
        lambda_sq=arch_variance(z_sq, coefficients),
        loglik=loglik,
        converged=bool(result.success),
        iterations=int(result.nit),
        loglik_history=tuple(history),
        z_sq=z_sq,
    )


def _unscale(params, variance):
    out = np.array(params, dtype=np.float64)
    out[0] *= variance
    return out


@dataclasses.dataclass(frozen=True)
class RealizedXiSeries:
    """Estimated ``xi_t^2`` for ``t = k .. T-1``"""

    xi_sq: np.ndarray
    timestamps: pd.Index | None = None
    smoothing_window: int | None = None
    smoothed: np.ndarray | None = None
    flags: tuple[str, ...] = ()
    fits: tuple[ArchFit, ...] = dataclasses.field(default=(), repr=False)

    def __post_init__(self):
        if np.any(self.xi_sq < 0):
            msg = "xi_sq must be nonnegative"
            raise DomainError(msg)

    def __len__(self):
        return len(self.xi_sq)

    def smooth(self, window: int) -> RealizedXiSeries:
        return dataclasses.replace(self, smoothing_window=window, smoothed=smooth(self.xi_sq, window))

    def to_frame(self) -> pd.DataFrame:
        """Columns ``xi_sq`` and ``xi_sq_smoothed`` indexed by ``date``"""
        index = pd.RangeIndex(len(self)) if self.timestamps is None else self.timestamps
        smoothed = np.full(len(self), np.nan) if self.smoothed is None else self.smoothed
        frame = pd.DataFrame({"xi_sq": self.xi_sq, "xi_sq_smoothed": smoothed}, index=index)
        frame.index.name = "date"
        return frame


def realized_xi(z_panel, sigma_diag_t) -> RealizedXiSeries:
    """``xi_t^2 = sum_j Z_t(j)^2 / Sigma_t(j, j)``, summed in ascending ``j``"""
    z = np.asarray(z_panel, dtype=np.float64)
    variances = np.asarray(sigma_diag_t, dtype=np.float64)
    if z.shape != variances.shape:
        msg = f"residuals {z.shape} and variances {variances.shape} differ in shape"
        raise DomainError(msg)
    if not np.all(variances > 0):
        t, j = np.argwhere(~(variances > 0))[0]
        msg = f"fitted variance at t={t}, coordinate {j + 1} is not positive"
        raise DomainError(msg)
    return RealizedXiSeries(np.sum(z * z / variances, axis=1))


def smooth(series, window: int) -> np.ndarray:
    """Centered moving average over ``window`` points, shrinking at both edges"""
    values = np.asarray(series, dtype=np.float64)
    if not 1 <= window <= len(values):
        msg = f"window must lie in [1, {len(values)}], got {window}"
        raise DomainError(msg)
    return centered_moving_average(values, window)


_KERNELS = {"boxcar": BOXCAR, "gaussian": GAUSSIAN}
_SIDES = {"centered": CENTERED, "left": LEFT, "right": RIGHT}


def kernel_theta(
    samples,
    loc: LocationScale,
    m: int,
    bandwidth: float,
    kernel: str = "gaussian",
    side: str = "centered",
) -> np.ndarray:
    """Kernel-weighted, time-local Marginal Aggregation Estimator

    ``theta_t = sum_s K_h(s - t) v_s / sum_s K_h(s - t)`` with
    ``v_s = p^-1 sum_j (Y_sj - mu_j)^(2m) / (c_m sigma_jj^m)``. A boxcar
    kernel with ``bandwidth >= T`` reproduces the full-sample MAE at every t.
    """
    if not bandwidth > 0:
        msg = f"bandwidth must be positive, got {bandwidth}"
        raise DomainError(msg)
    if kernel not in _KERNELS or side not in _SIDES:
        msg = f"kernel must be one of {list(_KERNELS)} and side one of {list(_SIDES)}"
        raise DomainError(msg)
    data = as_data_matrix(samples)
    per_time = row_power_means(data, loc.mu_hat, loc.sigma_diag_hat, m) / marginal_constant(data.shape[1], m)
    return kernel_smooth(per_time, bandwidth, _KERNELS[kernel], _SIDES[side])


def estimate_realized_xi(
    panel: PanelSeries,
    factor_source: str | None = "observed",
    arch_order: int = 2,
    n_factors: int | None = None,
    demean_mode: str = "zero",
    window: int | None = None,
    smooth_window: int | None = None,
    config: ArchConfig | None = None,
    n_jobs: int = 1,
) -> RealizedXiSeries:
    """Run the whole pipeline on ``panel``

    ``factor_source=None`` skips the factor step. Coordinates are fitted
    independently (in parallel with ``n_jobs``) and aggregated in ascending
    order, so the result does not depend on ``n_jobs``.
    """
    K = 0
    if factor_source == "observed" and panel.factors is not None:
        K = panel.factors.shape[1]
    elif factor_source == "pca":
        K = n_factors or 0
    if panel.T <= K + 2 * arch_order:
        msg = f"T={panel.T} must exceed K + 2k = {K + 2 * arch_order}"
        raise DomainError(msg)
    residuals = demean(panel, demean_mode, window)
    if factor_source is not None:
        residuals = factor_adjust(panel, factor_source, n_factors, demeaned=residuals).residuals
    fits = joblib.Parallel(n_jobs=n_jobs)(
        joblib.delayed(arch_fit)(residuals[:, j], arch_order, config) for j in range(panel.p)
    )
    flags = [f"ARCH fit of coordinate {j + 1} did not converge" for j, fit in enumerate(fits) if not fit.converged]
    flags += [f"ARCH fit of coordinate {j + 1} is not stationary" for j, fit in enumerate(fits) if not fit.stationary]
    variances = np.column_stack([fit.lambda_sq for fit in fits])
    series = realized_xi(residuals[arch_order:], variances)
    out = dataclasses.replace(
        series, timestamps=panel.timestamps[arch_order:], flags=tuple(flags), fits=tuple(fits)
    )
    return out if smooth_window is None else out.smooth(smooth_window)


@dataclasses.dataclass(frozen=True)
class SimulatedPanel:
    """A simulated factor panel together with its latent paths"""

    panel: PanelSeries
    xi_sq: np.ndarray
    lambda_sq: np.ndarray
    loadings: np.ndarray


def simulate_factor_panel(
    p: int,
    T: int,
    K: int,
    family: RadialFamily | None = None,
    arch_coefficients: tp.Sequence[float] = (0.5, 0.4),
    rng: np.random.Generator | None = None,
) -> SimulatedPanel:
    """``Y_t = B f_t + Z_t`` with ``Z_t = xi_t Sigma_t^(1/2) U_t`` and a diagonal
    ``Sigma_t`` following an ARCH recursion in every coordinate

    Loadings and factors are standard normal. The recursion starts from the
    unconditional variance. Without ``rng`` the draws come from
    ``numpy.random.default_rng(0)``.
    """
    family = Gaussian() if family is None else family
    rng = np.random.default_rng(0) if rng is None else rng
    coefficients = np.asarray(arch_coefficients, dtype=np.float64)
    k = len(coefficients) - 1
    if k < 1 or coefficients[0] <= 0 or np.any(coefficients[1:] < 0):
        msg = f"invalid ARCH coefficients {coefficients.tolist()}"
        raise DomainError(msg)
    persistence = float(np.sum(coefficients[1:]))
    start = coefficients[0] / (1 - persistence) if persistence < 1 else coefficients[0]
    loadings = rng.standard_normal((p, K))
    factors = rng.standard_normal((T, K))
    xi_sq = family.sample_radial_sq(p, T, rng)
    directions = sample_sphere(p, rng, size=T)
    z = np.zeros((T, p))
    lambda_sq = np.empty((T, p))
    for t in range(T):
        lam = np.full(p, coefficients[0])
        for i in range(1, k + 1):
            lam += coefficients[i] * (z[t - i] ** 2 if t >= i else start)
        lambda_sq[t] = lam
        z[t] = np.sqrt(xi_sq[t] * lam) * directions[t]
    returns = factors @ loadings.T + z
    return SimulatedPanel(PanelSeries(returns, factors if K else None), xi_sq, lambda_sq, loadings)


__all__ = [
    "ArchConfig",
    "ArchFit",
    "FactorAdjustment",
    "PanelSeries",
    "RealizedXiSeries",
    "SimulatedPanel",
    "arch_fit",
    "demean",
    "estimate_realized_xi",
    "factor_adjust",
    "kernel_theta",
    "principal_factors",
    "realized_xi",
    "simulate_factor_panel",
    "smooth",
]
