"""Radial families of elliptical distributions

A radial family fixes the law of the scalar ``xi`` in ``Y = mu + xi Sigma^(1/2) U``.
Every family is normalized so that ``E xi^2 = p``.
"""

from __future__ import annotations

import dataclasses
import typing as tp

import numpy as np

from elliptical_moments.errors import DomainError, MomentNotFiniteError


class RadialFamily:
    """Base class for all radial families"""

    name: tp.ClassVar[str] = "radial"

    def max_moment_order(self) -> float:
        """Largest ``k`` such that ``E xi^(2k)`` is finite (may be infinite)"""
        return np.inf

    def check_moment(self, k: int) -> None:
        if k > self.max_moment_order():
            msg = f"{self} has no finite moment E xi^{2 * k}"
            raise MomentNotFiniteError(msg)

    def sample_radial_sq(self, p: int, size: int, rng: np.random.Generator) -> np.ndarray:
        """Draw ``size`` independent values of ``xi^2`` for dimension ``p``"""
        raise NotImplementedError

    def __str__(self) -> str:
        return self.name


@dataclasses.dataclass(frozen=True)
class Gaussian(RadialFamily):
    """Multivariate normal: ``xi^2 ~ chi^2_p``"""

    name: tp.ClassVar[str] = "gaussian"

    def sample_radial_sq(self, p, size, rng):
        return rng.chisquare(p, size=size)


@dataclasses.dataclass(frozen=True)
class StudentT(RadialFamily):
    """Multivariate t with ``nu`` degrees of freedom

    ``xi^2 = (nu - 2) chi^2_p / chi^2_nu`` with independent draws, which
    satisfies ``E xi^2 = p`` for every ``nu > 2``.
    """

    nu: float
    name: tp.ClassVar[str] = "student_t"

    def __post_init__(self):
        if not self.nu > 2:
            msg = f"StudentT requires nu > 2, got {self.nu}"
            raise DomainError(msg)

    def max_moment_order(self):
        # E (chi^2_nu)^(-k) is finite only for 2k < nu
        k = np.ceil(self.nu / 2) - 1
        return float(k)

    def sample_radial_sq(self, p, size, rng):
        numerator = rng.chisquare(p, size=size)
        denominator = rng.chisquare(self.nu, size=size)
        return (self.nu - 2) * numerator / denominator

    def __str__(self):
        return f"student_t({self.nu:g})"


@dataclasses.dataclass(frozen=True)
class CustomRadial(RadialFamily):
    """User supplied radial law

    Parameters
    ----------
        sampler: callable ``(p, size, rng) -> xi^2 draws``
        max_order: the largest ``k`` with ``E xi^(2k)`` finite
        even_moment: optional callable ``(p, k) -> E xi^(2k)``; without it the
            theoretical moments of the family are unknown
    """

    sampler: tp.Callable[[int, int, np.random.Generator], np.ndarray]
    max_order: int
    even_moment: tp.Callable[[int, int], float] | None = None
    name: tp.ClassVar[str] = "custom"

    def max_moment_order(self):
        return float(self.max_order)

    def sample_radial_sq(self, p, size, rng):
        draws = np.asarray(self.sampler(p, size, rng), dtype=np.float64)
        if draws.shape != (size,) or np.any(draws < 0):
            msg = "custom radial sampler must return `size` nonnegative xi^2 draws"
            raise ValueError(msg)
        return draws


def family_from_name(name: str) -> RadialFamily:
    """Parse ``gaussian``, ``student_t(4.5)`` or ``t4.5`` into a family"""
    text = name.strip().lower()
    if text in {"gaussian", "normal"}:
        return Gaussian()
    for prefix in ("student_t(", "t(", "studentt("):
        if text.startswith(prefix) and text.endswith(")"):
            return StudentT(float(text[len(prefix) : -1]))
    if text.startswith("t") and text[1:].replace(".", "", 1).isdigit():
        return StudentT(float(text[1:]))
    msg = f"unknown radial family {name!r}"
    raise DomainError(msg)


__all__ = [
    "CustomRadial",
    "Gaussian",
    "RadialFamily",
    "StudentT",
    "family_from_name",
]
