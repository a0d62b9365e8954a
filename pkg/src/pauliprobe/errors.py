"""Exception types shared across the package."""


class PauliProbeError(Exception):
    """Base class for toolkit errors."""


class DimensionMismatch(PauliProbeError, ValueError):
    """Operands act on different numbers of qubits or have mismatched lengths."""


class CapExceeded(PauliProbeError):
    """A size cap (enumeration, dense path, sequence length) was hit."""


class ConfigError(PauliProbeError, ValueError):
    """Invalid experiment configuration or input file."""


class AssumptionFailure(PauliProbeError):
    """The noise model violates the weak/stable noise assumptions."""


class CoverageError(PauliProbeError, ValueError):
    """A covering does not cover the requested set."""
