"""Exception types shared across the package."""


class CavtuneError(Exception):
    """Base class for all package-specific errors."""


class InvalidInput(CavtuneError, ValueError):
    """An argument violates a documented precondition."""


class InvalidConfiguration(CavtuneError, ValueError):
    """A parameter set is internally inconsistent or unphysical."""


class NumericalFailure(CavtuneError, RuntimeError):
    """An integrator or linear-algebra step failed; carries diagnostics in the message."""


class ConvergenceFailure(CavtuneError, RuntimeError):
    """An iterative method exhausted its budget without meeting its tolerance."""


class NoFeature(CavtuneError, ValueError):
    """A curve has no detectable burst/dip against its baseline."""


class SchemaError(CavtuneError, ValueError):
    """A config document or CSV violates its schema; message carries the location."""
