"""The elliptical generative model ``Y = mu + xi Sigma^(1/2) U``"""

from __future__ import annotations

import functools
import math
import os
import typing as tp

import numpy as np
import pandas as pd
import scipy.linalg

from elliptical_moments.errors import DomainError
from elliptical_moments.radial import Gaussian, RadialFamily
from elliptical_moments.special_functions import (
    correlation_matrix,
    radial_moment_ratio,
)

# relative tolerances of the covariance checks
SYMMETRY_TOL = 1e-10
CLIP_TOL = 1e-12


def psd_square_root(sigma: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root, eigenvalues below ``1e-12 * max`` clipped to 0"""
    values, vectors = scipy.linalg.eigh(sigma)
    cutoff = CLIP_TOL * max(values.max(initial=0.0), 0.0)
    values = np.where(values > cutoff, values, 0.0)
    root = (vectors * np.sqrt(values)) @ vectors.T
    return (root + root.T) / 2


def check_covariance(sigma, name: str = "sigma") -> np.ndarray:
    """Validate a covariance matrix: square, symmetric and PSD up to ``1e-10``"""
    sigma = np.asarray(sigma, dtype=np.float64)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1]:
        msg = f"{name} must be a square matrix, got shape {sigma.shape}"
        raise DomainError(msg)
    if not np.all(np.isfinite(sigma)):
        msg = f"{name} has non-finite entries"
        raise DomainError(msg)
    scale = max(float(np.abs(sigma).max(initial=0.0)), 1.0)
    asymmetry = float(np.abs(sigma - sigma.T).max(initial=0.0))
    if asymmetry > SYMMETRY_TOL * scale:
        msg = f"{name} is not symmetric (max |S - S'| = {asymmetry:.3g})"
        raise DomainError(msg)
    if len(sigma):
        smallest = scipy.linalg.eigvalsh(sigma)[0]
        if smallest < -SYMMETRY_TOL * scale:
            msg = f"{name} is not positive semidefinite (minimum eigenvalue {smallest:.6g})"
            raise DomainError(msg)
    return (sigma + sigma.T) / 2


class EllipticalSpec:
    """An elliptical distribution with location ``mu``, scatter ``sigma`` and
    radial family ``family``

    Immutable once built. ``sigma_sqrt`` is computed eagerly, ``omega`` (the
    precision matrix, needed only by the Ideal Estimator) on first access.
    """

    def __init__(self, mu, sigma, family: RadialFamily | None = None):
        self.sigma = check_covariance(sigma)
        self.p = self.sigma.shape[0]
        self.mu = np.zeros(self.p) if mu is None else np.array(mu, dtype=np.float64)
        if self.mu.shape != (self.p,):
            msg = f"mu must have length {self.p}, got shape {self.mu.shape}"
            raise DomainError(msg)
        self.family = Gaussian() if family is None else family
        self.sigma_sqrt = psd_square_root(self.sigma)
        self.correlation = correlation_matrix(self.sigma)
        for array in (self.mu, self.sigma, self.sigma_sqrt, self.correlation):
            array.flags.writeable = False

    @functools.cached_property
    def omega(self) -> np.ndarray:
        cho = scipy.linalg.cho_factor(self.sigma)
        out = scipy.linalg.cho_solve(cho, np.eye(self.p))
        out = (out + out.T) / 2
        out.flags.writeable = False
        return out

    def theta(self, m: int) -> float:
        return theoretical_theta(self.family, self.p, m)

    def __repr__(self):
        return f"EllipticalSpec(p={self.p}, family={self.family})"


class SampleMatrix:
    """``n x p`` observations, one per row

    ``radial_sq`` holds the generator's ``xi_i^2`` draws when the sample was
    simulated, and is ``None`` for data read from elsewhere.
    """

    def __init__(self, data, radial_sq=None, columns: tp.Sequence[str] | None = None):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, np.newaxis]
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            msg = f"sample must be a non-empty n x p matrix, got shape {data.shape}"
            raise DomainError(msg)
        if not np.all(np.isfinite(data)):
            msg = "sample has non-finite entries"
            raise DomainError(msg)
        self.data = data
        self.radial_sq = None if radial_sq is None else np.asarray(radial_sq, dtype=np.float64)
        self.columns = (
            [f"y{j + 1}" for j in range(self.p)] if columns is None else list(columns)
        )

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"SampleMatrix(n={self.n}, p={self.p})"

    def to_csv(self, path: str | os.PathLike) -> None:
        pd.DataFrame(self.data, columns=self.columns).to_csv(
            path, index=False, float_format="%.17g"
        )

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> SampleMatrix:
        frame = pd.read_csv(path, float_precision="round_trip")
        if frame.isna().any().any():
            msg = f"{path}: sample has missing values"
            raise DomainError(msg)
        return cls(frame.to_numpy(dtype=np.float64), columns=[str(c) for c in frame.columns])


def theoretical_theta(family: RadialFamily, p: int, m: int) -> float:
    """``theta_m = p^(-m) E xi^(2m)``"""
    # prod_{j<m} (p + 2j) / p^m, one bounded factor at a time
    gaussian = math.prod(1 + 2 * j / p for j in range(m))
    return gaussian * radial_moment_ratio(family, p, m)


def excess_kurtosis(theta_2: float, p: int) -> float:
    """Leptokurtosis ``p theta_2 / (p + 2) - 1`` of an elliptical distribution"""
    return p * theta_2 / (p + 2) - 1


def sample_sphere(p: int, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Uniform draws on the unit sphere in ``R^p`` as normalized Gaussians

    Returns one vector, or a ``size x p`` matrix when ``size`` is given.
    """
    if p < 1:
        msg = f"dimension must be positive, got {p}"
        raise DomainError(msg)
    rows = 1 if size is None else size
    g = rng.standard_normal((rows, p))
    norms = np.linalg.norm(g, axis=1)
    # a zero vector has probability zero; redraw until there is none
    while np.any(norms == 0):
        bad = norms == 0
        g[bad] = rng.standard_normal((int(bad.sum()), p))
        norms = np.linalg.norm(g, axis=1)
    out = g / norms[:, np.newaxis]
    return out[0] if size is None else out


def sample_radial(
    family: RadialFamily, p: int, rng: np.random.Generator, size: int | None = None
) -> float | np.ndarray:
    """Draw the radial variable ``xi`` (not its square), normalized to ``E xi^2 = p``"""
    draws = np.sqrt(family.sample_radial_sq(p, 1 if size is None else size, rng))
    return float(draws[0]) if size is None else draws


def sample(spec: EllipticalSpec, n: int, rng: np.random.Generator) -> SampleMatrix:
    """``n`` independent rows ``mu + xi_i Sigma^(1/2) U_i``"""
    if n < 1:
        msg = f"sample size must be positive, got {n}"
        raise DomainError(msg)
    radial_sq = spec.family.sample_radial_sq(spec.p, n, rng)
    directions = sample_sphere(spec.p, rng, size=n)
    data = spec.mu + (np.sqrt(radial_sq)[:, np.newaxis] * directions) @ spec.sigma_sqrt
    return SampleMatrix(data, radial_sq=radial_sq)


def radial_reconstruction(samples, mu, omega) -> np.ndarray:
    """Per-row ``(Y_i - mu)' Omega (Y_i - mu)``, which is ``xi_i^2`` when
    ``(mu, Omega)`` are the true parameters"""
    data = samples.data if isinstance(samples, SampleMatrix) else np.asarray(samples)
    centered = data - np.asarray(mu, dtype=np.float64)
    return np.einsum("ij,jk,ik->i", centered, np.asarray(omega, dtype=np.float64), centered)


def read_covariance_csv(path: str | os.PathLike) -> np.ndarray:
    """Square comma separated matrix without header"""
    frame = pd.read_csv(path, header=None, float_precision="round_trip")
    sigma = frame.to_numpy(dtype=np.float64)
    if sigma.shape[0] != sigma.shape[1]:
        msg = f"{path}: covariance must be square, got {sigma.shape[0]} x {sigma.shape[1]}"
        raise DomainError(msg)
    try:
        return check_covariance(sigma, name=os.fspath(path))
    except DomainError as err:
        values = scipy.linalg.eigvalsh((sigma + sigma.T) / 2)
        msg = f"{err}; smallest eigenvalues {np.array2string(values[:5], precision=4)}"
        raise DomainError(msg) from err


def write_covariance_csv(sigma, path: str | os.PathLike) -> None:
    pd.DataFrame(np.asarray(sigma)).to_csv(path, header=False, index=False, float_format="%.17g")


def synthetic_covariance(
    kind: str,
    p: int | None = None,
    *,
    a: float | None = None,
    block_size: int | None = None,
    rho: float | None = None,
    path: str | os.PathLike | None = None,
) -> np.ndarray:
    """Covariance structures used by the simulations

    Parameters
    ----------
        kind: ``identity``, ``banded`` (``Sigma_ij = a^|i-j|``),
            ``block_diag`` (blocks of ``block_size`` with unit diagonal and
            ``rho`` off the diagonal) or ``from_file``
        p: the dimension; for ``from_file`` it is checked when given
    """
    if kind == "from_file":
        if path is None:
            msg = "from_file covariance needs a path"
            raise DomainError(msg)
        sigma = read_covariance_csv(path)
        if p is not None and sigma.shape[0] != p:
            msg = f"{path}: expected a {p} x {p} covariance, got {sigma.shape[0]}"
            raise DomainError(msg)
        return sigma
    if p is None or p < 1:
        msg = f"dimension must be positive, got {p}"
        raise DomainError(msg)
    if kind == "identity":
        return np.eye(p)
    if kind == "banded":
        if a is None or not 0 < a < 1:
            msg = f"banded covariance needs a in (0, 1), got {a}"
            raise DomainError(msg)
        lags = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
        return a**lags
    if kind == "block_diag":
        if block_size is None or block_size < 1:
            msg = f"block_diag covariance needs a positive block_size, got {block_size}"
            raise DomainError(msg)
        if rho is None or not abs(rho) < 1:
            msg = f"block_diag covariance needs |rho| < 1, got {rho}"
            raise DomainError(msg)
        labels = np.arange(p) // block_size
        out = np.where(labels[:, np.newaxis] == labels[np.newaxis, :], rho, 0.0)
        np.fill_diagonal(out, 1.0)
        return out
    if kind == "zero":
        return np.zeros((p, p))
    msg = f"unknown covariance kind {kind!r}"
    raise DomainError(msg)


__all__ = [
    "EllipticalSpec",
    "SampleMatrix",
    "excess_kurtosis",
    "radial_reconstruction",
    "read_covariance_csv",
    "sample",
    "sample_radial",
    "sample_sphere",
    "synthetic_covariance",
    "theoretical_theta",
    "write_covariance_csv",
]
