"""Exception types shared across the package."""


class FailureScoutError(Exception):
    """Base class for all errors raised by this package."""


class DataFormatError(FailureScoutError):
    """Malformed dataset file: bad JSON, inconsistent dimensions, bad ids."""


class MissingLabelError(FailureScoutError):
    """A true label was required but absent."""


class InsufficientDataError(FailureScoutError):
    """Too few samples for the requested operation."""


class SpecError(FailureScoutError):
    """Infeasible or inconsistent synthetic-dataset specification."""


class ParameterError(FailureScoutError):
    """A hyperparameter is outside its admissible range."""


class EmptyClassError(FailureScoutError):
    """A pseudolabel class has no members."""


class DataError(FailureScoutError):
    """Non-finite or otherwise unusable numeric input."""


class NumericalError(FailureScoutError):
    """A linear-algebra step failed beyond what jitter can repair."""


class DuplicateQueryError(FailureScoutError):
    """A sample id was submitted for feedback twice."""


class ConsistencyError(FailureScoutError):
    """An operation referenced state that does not exist (e.g. unqueried id)."""


class UndefinedMetricError(FailureScoutError):
    """A metric is undefined for the given ground truth (e.g. zero patterns)."""
