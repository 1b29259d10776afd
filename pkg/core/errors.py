"""
Exception hierarchy and process exit codes shared by the library and the CLI.
"""

from typing import Optional

EXIT_OK = 0
EXIT_UNEXPECTED = 1
# argparse already uses 2 for usage errors
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


class FlapwingError(Exception):
    """Base class for every error raised by the simulator"""


class DomainError(FlapwingError, ValueError):
    """Numeric input outside the domain of an operation"""


class TopologyError(DomainError):
    """Coupling graph rejected by validation"""

    def __init__(self, message: str, element: Optional[str] = None):
        super().__init__(message)
        self.element = element


class StaleMatricesError(DomainError):
    """Coupling matrices no longer match the network they are applied to"""


class ScenarioError(FlapwingError):
    """
    Scenario file could not be parsed or validated.

    Args:
        message: What is wrong
        field: Dotted path of the offending field, e.g. ``topology.edges[3]``
        line: 1-based line number when the error is syntactic
        source: File the scenario was read from
    """

    def __init__(self, message: str, field: Optional[str] = None,
                 line: Optional[int] = None, source: Optional[str] = None):
        self.message = message
        self.field = field
        self.line = line
        self.source = source
        super().__init__(self._format())

    def _format(self) -> str:
        location = self.source or "<scenario>"
        if self.line is not None:
            location = f"{location}:{self.line}"
        if self.field:
            return f"{location}: {self.field}: {self.message}"
        return f"{location}: {self.message}"


class SimulationAborted(FlapwingError):
    """Integration stopped before the requested duration"""

    def __init__(self, subsystem: str, t: float, reason: str):
        self.subsystem = subsystem
        self.t = t
        self.reason = reason
        super().__init__(f"simulation aborted at t={t:.6g} s in {subsystem}: {reason}")


class GimbalLockError(DomainError):
    """Pitch Euler angle reached the gimbal guard band"""
