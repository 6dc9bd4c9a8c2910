"""Exception hierarchy shared by all modules."""


class BuddhaFaceError(Exception):
    """Base class for every error raised by the package."""


class ParseError(BuddhaFaceError):
    """Input file could not be parsed. Carries the location when known."""

    def __init__(self, message, *, line=None, field=None):
        loc = []
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field {field!r}")
        super().__init__(f"{message} ({', '.join(loc)})" if loc else message)
        self.line = line
        self.field = field


class ValidationError(BuddhaFaceError):
    """Input parsed but violates a data invariant."""


class DomainError(BuddhaFaceError, ValueError):
    """Argument outside the function's domain."""


class AlignmentError(BuddhaFaceError):
    """Pose normalization failed on a degenerate landmark configuration."""


class DegenerateFaceError(BuddhaFaceError):
    """Guidelines cannot be measured (collapsed face width, tilted lines)."""


class EmptyIntersectionError(BuddhaFaceError):
    """No sample is shared by all feature sources and the labeling."""


class TrainingError(BuddhaFaceError):
    """Classifier training failed or was given unusable data."""
