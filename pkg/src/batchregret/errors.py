"""Exception types raised across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class DegenerateEvidenceError(ValueError):
    """Every grid point assigns zero likelihood to the observed counts."""


class UnsupportedClassError(ValueError):
    """The operation is only defined for a narrower source class."""


class SizeGuardError(ValueError):
    """An exhaustive-enumeration instance exceeds the allowed size."""
