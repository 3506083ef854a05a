"""Exception types raised across the package."""


class ValidationError(ValueError):
    """Input violates a documented invariant (e.g. a non-Hermitian density matrix)."""


class DomainError(ValueError):
    """Argument outside its admissible domain."""


class DegenerateInputError(ValueError):
    """Input carries no usable information (all-zero counts, zero denominators)."""


class IllPosedError(ValueError):
    """Measurement set is not informationally complete."""


class FitError(RuntimeError):
    """Curve fit failed to converge; ``partial`` holds the last iterate."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class ConfigError(ValueError):
    """Configuration document failed validation; message names the field path."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ParseError(ValueError):
    """Malformed input file; message names the row or column at fault."""
