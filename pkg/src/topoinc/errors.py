"""Exception types shared across the package.

Every error raised on a documented failure path derives from TopoincError,
so the CLI can map them to a machine-readable JSON payload and exit code 1.
"""


class TopoincError(Exception):
    """Base class for all package-specific errors."""

    code = "error"

    def payload(self) -> dict:
        return {"error": self.code, "message": str(self)}


class UnknownDatasetError(TopoincError):
    code = "unknown-dataset"


class SingleClassError(TopoincError):
    code = "single-class"


class ZeroVelocityError(TopoincError):
    code = "zero-velocity"


class EmptySuperlevelSetError(TopoincError):
    """Threshold above the noise peak: the superlevel set is empty."""

    code = "empty-superlevel-set"


class DegenerateThresholdError(TopoincError):
    """Threshold exactly at the noise peak: radii collapse to zero."""

    code = "degenerate-threshold"


class NonFiniteError(TopoincError):
    code = "non-finite"


class ProbeOutsideDomainError(TopoincError):
    code = "probe-outside-domain"


class LatentClassMismatchError(TopoincError):
    code = "latent-class-mismatch"
