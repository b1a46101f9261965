"""Exception hierarchy shared by the library, the CLI, and the HTTP service.

The CLI maps these onto its stable exit codes: usage errors exit 1, data
errors exit 2, degenerate fits exit 3.
"""


class BoxcalError(Exception):
    """Base class for all boxcal errors."""


class UsageError(BoxcalError):
    """Invalid options, flags, or parameter values supplied by the caller."""


class DataError(BoxcalError):
    """Malformed or invalid input data (dump files, datasets, schemas)."""


class RecordViolation:
    """One invariant violation found while validating a dataset."""

    __slots__ = ("index", "record_id", "reason")

    def __init__(self, index: int, record_id: str, reason: str):
        self.index = index
        self.record_id = record_id
        self.reason = reason

    def __repr__(self):
        return f"RecordViolation(index={self.index}, record_id={self.record_id!r}, reason={self.reason!r})"

    def __str__(self):
        return f"record {self.index} (id={self.record_id!r}): {self.reason}"

    def __eq__(self, other):
        return (
            isinstance(other, RecordViolation)
            and (self.index, self.record_id, self.reason)
            == (other.index, other.record_id, other.reason)
        )


class DatasetValidationError(DataError):
    """Raised when one or more records violate the dataset invariants."""

    def __init__(self, violations):
        self.violations = list(violations)
        head = "; ".join(str(v) for v in self.violations[:3])
        more = "" if len(self.violations) <= 3 else f" (+{len(self.violations) - 3} more)"
        super().__init__(f"{len(self.violations)} invalid record(s): {head}{more}")


class DegenerateFitError(BoxcalError):
    """A recalibrator cannot be fitted on the provided data."""


class UndefinedCorrelationError(DataError):
    """Pearson correlation is undefined because one sequence has zero variance."""


class UnreachableLevelError(BoxcalError):
    """A requested tail probability lies outside the recalibrator's output range."""


class TrainingDivergedError(BoxcalError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int):
        self.epoch = epoch
        super().__init__(f"training diverged at epoch {epoch}: loss is non-finite")
