"""Exception hierarchy shared by every analysis module."""

from __future__ import annotations

import typing as t

if t.TYPE_CHECKING:
    from .network import GammaCertificate


class GridPassivityError(Exception):
    """Base class for all errors raised by gridpassivity."""


class ConfigError(GridPassivityError):
    """A configuration file or parameter set violates the schema."""

    def __init__(self, message: str, *, line: int | None = None) -> None:
        """Attach the offending source line, when known."""
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DisconnectedNetworkError(GridPassivityError):
    """The line graph does not connect every bus."""


class SingularNetworkError(GridPassivityError):
    """A network matrix that must be inverted is numerically singular."""

    def __init__(self, message: str, *, certificate: GammaCertificate | None = None) -> None:
        """Keep the non-singularity certificate for the caller."""
        self.certificate = certificate
        super().__init__(message)


class SusceptanceSignError(GridPassivityError):
    """The synchronous-reactance reduction lacks its non-positive sign structure."""


class LossyNetworkError(GridPassivityError):
    """An energy function was requested on a network with conductance."""


class SingularFluxJacobianError(GridPassivityError):
    """The flux Jacobian A is singular, so L0 is undefined."""


class PoleError(GridPassivityError):
    """A transfer matrix was evaluated at one of its poles."""


class IntegrationError(GridPassivityError):
    """The ODE integrator stopped before reaching the end of the time span."""

    def __init__(self, message: str, *, t_fail: float) -> None:
        """Record the time at which integration failed."""
        self.t_fail = t_fail
        super().__init__(f"{message} (t = {t_fail:.6g} s)")


class ConsistencyError(GridPassivityError):
    """Two equivalent membership verdicts disagree away from the boundary."""


class CalibrationError(GridPassivityError):
    """Field voltages could not be calibrated to the requested EMF magnitude."""
