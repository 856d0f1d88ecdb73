"""Exception taxonomy shared across the toolkit."""


class DPTailsError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(DPTailsError):
    """Invalid configuration value; message names the offending field."""


class SplitError(DPTailsError):
    """Yearly split cannot be constructed (missing pivot or no prior data)."""


class ParseError(DPTailsError):
    """Cohort file violates the CSV schema."""

    def __init__(self, message, row=None, column=None):
        loc = ""
        if row is not None:
            loc += f" (row {row}"
            loc += f", column {column})" if column is not None else ")"
        super().__init__(message + loc)
        self.row = row
        self.column = column


class ShapeError(DPTailsError):
    """Array dimensions do not match the model family."""


class DomainError(DPTailsError):
    """Input outside the operation's domain (empty subset, k < 1, ...)."""


class UnsupportedFamilyError(DPTailsError):
    """Operation only defined for a subset of model families."""


class NumericError(DPTailsError):
    """Non-finite values where finite ones are required."""


class TrainingError(DPTailsError):
    """Training diverged; carries the epoch index."""

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class OptimizationError(DPTailsError):
    """Deterministic solver failed to reach tolerance within its cap."""


class InfinitePrivacyLossError(DPTailsError):
    """No finite RDP bound exists (sigma = 0 with positive sampling rate)."""


class InsufficientDataError(DPTailsError):
    """Too few records to run the audit."""


class ProcedureOrderError(DPTailsError):
    """Audit steps invoked out of their required order."""


class AssignmentError(DPTailsError):
    """A record id is missing from a required assignment map."""


class UndefinedMetricError(DPTailsError):
    """Metric undefined for the given label composition."""


class UndefinedCorrelationError(DPTailsError):
    """Correlation undefined (zero variance input)."""


class ConditioningError(DPTailsError):
    """Linear system too ill-conditioned to solve at zero damping."""
