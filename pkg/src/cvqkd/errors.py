"""
Exception hierarchy shared by the cvqkd library and CLI.

The CLI maps these onto exit codes: domain errors exit with 4 and
insecure configurations with 3.
"""

from typing import Optional


class CVQKDError(Exception):
    """Base class for every error raised by cvqkd."""


class DomainError(CVQKDError, ValueError):
    """An input lies outside the physical or mathematical domain of an operation."""


class ConfigError(DomainError):
    """A protocol configuration is invalid or could not be loaded."""


class UnreachableError(DomainError):
    """No finite parameter satisfies the requested target."""


class PrivacyAmplificationError(CVQKDError):
    """No block assignment honours the reconciliation exclusions."""


class InsecureError(CVQKDError):
    """
    Secret-key distillation is impossible for the given error rates.

    Parameters
    ----------
    reason : str
        Machine-readable reason code (e.g. ``"maurer_condition_violated"``).
    message : str
        Human-readable explanation.
    eve_ber : float, optional
        Eve's (bounded) error rate at the point of failure.
    bob_threshold : float, optional
        The assumed Bob error rate the bound was compared against.
    """

    def __init__(
        self,
        reason: str,
        message: str,
        eve_ber: Optional[float] = None,
        bob_threshold: Optional[float] = None,
    ) -> None:
        super().__init__(message)
        self.reason = reason
        self.eve_ber = eve_ber
        self.bob_threshold = bob_threshold

    def to_dict(self) -> dict:
        return {
            "status": "insecure",
            "reason": self.reason,
            "message": str(self),
            "eve_ber": self.eve_ber,
            "bob_threshold": self.bob_threshold,
        }
