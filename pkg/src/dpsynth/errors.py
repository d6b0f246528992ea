"""Exception types shared across the package.

Every library error derives from DpSynthError so callers (and the CLI exit-code
mapping) can distinguish our failures from genuine bugs.
"""


class DpSynthError(Exception):
    """Base class for all dpsynth errors."""


class InvalidBudget(DpSynthError, ValueError):
    """A privacy budget is malformed or unusable (negative, NaN, zero where positive is required)."""


class DeltaOverflow(DpSynthError):
    """A delta computation left the valid range [0, 1)."""


class BudgetExceeded(DpSynthError):
    """Recording a spend would push a ledger past its declared total."""


class CertificationError(DpSynthError):
    """A ledger refused to certify a run (e.g. noise was disabled)."""


class InvalidConfig(DpSynthError, ValueError):
    """A config object or config file fails validation."""


class ParseError(DpSynthError):
    """A CSV row could not be parsed; carries the 1-based data-row number."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class UnknownColumn(DpSynthError):
    """Schema config references a column absent from the CSV header."""


class MissingLabel(DpSynthError):
    """Schema config does not declare exactly one label column."""


class SchemaError(DpSynthError):
    """Attribute metadata violates schema invariants."""


class EmptyDataset(DpSynthError):
    """An operation that needs rows received none."""


class DomainTooLarge(DpSynthError):
    """A joint attribute domain exceeds the configured cell cap."""


class EmptySubsample(DpSynthError):
    """A Poisson subsample came back empty after all retries."""


class DatasetNotFound(DpSynthError):
    """A dataset file path does not exist."""
