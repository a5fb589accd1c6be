from __future__ import annotations

import typing as tp

from elliptical_moments.harness import ExperimentConfig


class BaseScenario:
    """Base class for all simulation scenarios

    A scenario is a named set of `ExperimentConfig` defaults. Instances fix the
    radial family and calling one builds the config, with keyword overrides
    applied last.
    """

    name: tp.ClassVar[str] = "base"
    defaults: tp.ClassVar[dict[str, tp.Any]] = {}

    def __init__(self, family: str = "gaussian", **overrides):
        self.family = family
        self.overrides = overrides

    @classmethod
    def gaussian(cls):
        """The scenario with Gaussian data"""
        return cls(family="gaussian")

    @classmethod
    def student_t(cls, nu: float = 4.5):
        """The scenario with multivariate Student t data and Huber plug-ins

        Parameters
        ----------
            nu: degrees of freedom, the heavy-tailed setting uses 4.5
        """
        return cls(family=f"student_t({nu})", robust=True)

    def __call__(self, **overrides) -> ExperimentConfig:
        settings = {**self.defaults, "family": self.family, **self.overrides, **overrides}
        settings.setdefault("scenario", self.name)
        return ExperimentConfig(**settings)

    def __repr__(self):
        return f"{type(self).__name__}(family={self.family!r})"
