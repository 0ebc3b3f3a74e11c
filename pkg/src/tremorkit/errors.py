"""Exception hierarchy shared across the pipeline.

The CLI maps these onto exit codes: plain argument errors (ValueError,
bad flags) exit 1, ValidationError and subclasses exit 2, DataError and
subclasses exit 3.
"""


class TremorKitError(Exception):
    """Base class for all library-specific errors."""


class ValidationError(TremorKitError):
    """Input is well-formed but fails a semantic requirement."""


class ConfigurationError(ValidationError):
    """A run configuration that cannot be executed (e.g. LOOCV with one subject)."""


class NyquistError(ValidationError):
    """Sampling rate too low for the requested frequency band."""

    def __init__(self, verdict):
        self.verdict = verdict
        super().__init__(
            f"sampling rate {verdict.fps:g} Hz is below the required "
            f"{verdict.required:g} Hz for analysis up to {verdict.f_max:g} Hz"
        )


class DataError(TremorKitError):
    """Input data is malformed or inconsistent."""


class ParseError(DataError):
    """A record could not be decoded at all."""


class SchemaError(DataError):
    """A record decoded but does not match the expected schema."""


class MissingLabelError(DataError):
    """A required label is absent."""
