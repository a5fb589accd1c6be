"""Exception types raised by elliptical-moments

All of them subclass a builtin, so ``except ValueError`` keeps working for
callers that do not care about the distinction.
"""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the operation"""


class MomentNotFiniteError(DomainError):
    """The requested moment of the radial variable does not exist"""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before meeting its tolerance

    The last iterate is kept on ``last_iterate`` so callers can inspect it.
    """

    def __init__(self, msg, last_iterate=None):
        super().__init__(msg)
        self.last_iterate = last_iterate


class ConfigError(ValueError):
    """Invalid experiment configuration"""


__all__ = ["ConfigError", "ConvergenceError", "DomainError", "MomentNotFiniteError"]
