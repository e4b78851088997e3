"""Exception hierarchy with machine-readable categories used by the CLI."""

from __future__ import annotations


class LQMKVError(Exception):
    """Base class; ``category`` selects the CLI exit code."""

    category = "INTERNAL"


class ConfigError(LQMKVError, ValueError):
    """Malformed game data, bad dimensions or out-of-range queries."""

    category = "CONFIG"


class DimensionError(ConfigError):
    pass


class RangeError(ConfigError):
    pass


class SolverError(LQMKVError, RuntimeError):
    """A numerical layer failed; ``layer`` and ``t`` locate the failure."""

    category = "SOLVER"

    def __init__(self, message: str, layer: str | None = None, t: float | None = None):
        super().__init__(message)
        self.layer = layer
        self.t = t


class SimulationError(SolverError):
    def __init__(self, message: str, path: int | None = None, step: int | None = None):
        super().__init__(message, layer="simulate")
        self.path = path
        self.step = step


class VerificationError(LQMKVError, AssertionError):
    category = "VERIFY"


EXIT_CODES = {"CONFIG": 2, "SOLVER": 3, "VERIFY": 4, "INTERNAL": 1}
