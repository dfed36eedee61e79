"""Exception hierarchy shared by all pipeline stages.

Every error raised on bad input derives from :class:`PipelineError`; the CLI
maps the two top-level categories onto exit codes.
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(PipelineError):
    """Input file is structurally malformed (header, columns)."""


class ValidationError(PipelineError, ValueError):
    """Input is well-formed but violates a contract."""


class EmptySessionError(ValidationError):
    pass


class UnclassifiedFeatureError(FormatError):
    def __init__(self, names):
        self.names = list(names)
        super().__init__("unclassified feature columns: " + ", ".join(self.names))


class DegenerateDatasetError(ValidationError):
    pass


class UnusableSessionError(ValidationError):
    pass


class DegenerateLabelsError(ValidationError):
    pass


class UndefinedAlphaError(ValidationError):
    pass


class UnsupportedOperationError(PipelineError):
    pass


class StratificationError(ValidationError):
    pass


class ComparisonError(ValidationError):
    pass
