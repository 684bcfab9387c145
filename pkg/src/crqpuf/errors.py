"""Exception types shared across the package."""


class CrqpufError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(CrqpufError):
    """Invalid configuration (distribution ranges, experiment parameters)."""


class NoiseTooLargeError(CrqpufError):
    """White-noise rate >= 1/2: the statistical query cannot be simulated."""


class FitError(CrqpufError):
    """Least-squares system is rank deficient."""


class ParseError(CrqpufError):
    """Malformed serialized document.

    position is a character offset (JSON syntax errors) or a field path
    string (semantic validation errors); may be None.
    """

    def __init__(self, message, position=None):
        self.position = position
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)


class StageError(CrqpufError):
    """Pipeline failure, tagged with the experiment stage that raised it."""

    def __init__(self, stage, message):
        self.stage = stage
        super().__init__(f"{stage}: {message}")
