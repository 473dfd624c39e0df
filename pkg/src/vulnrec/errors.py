"""Exception hierarchy.

Data problems derive from :class:`DataError`, configuration problems from
:class:`ConfigError`. The CLI maps these onto distinct exit codes.
"""


class VulnrecError(Exception):
    """Base class for every error raised by this package."""


class DataError(VulnrecError, ValueError):
    pass


class ConfigError(VulnrecError, ValueError):
    pass


# -- data model ---------------------------------------------------------------


class MissingFile(DataError, FileNotFoundError):
    pass


class SchemaParseError(DataError):
    pass


class RowArityMismatch(DataError):
    def __init__(self, line, expected, got):
        super().__init__(f"line {line}: expected {expected} cells, got {got}")
        self.line = line


class UnknownCategoryValue(DataError):
    def __init__(self, line, attribute, value):
        super().__init__(f"line {line}: value {value!r} not in universe of attribute {attribute!r}")
        self.line = line
        self.attribute = attribute


class NonNumericContinuous(DataError):
    def __init__(self, line, attribute, value):
        super().__init__(f"line {line}: attribute {attribute!r} expects a finite number, got {value!r}")
        self.line = line
        self.attribute = attribute


class SampleTooLarge(DataError):
    pass


class SchemaMismatch(DataError):
    pass


# -- encoding / scoring -------------------------------------------------------


class FingerprintMismatch(DataError):
    pass


class InvalidOrder(VulnrecError, ValueError):
    pass


class KTooLarge(VulnrecError, ValueError):
    pass


class RTooLarge(VulnrecError, ValueError):
    pass


class NotEnoughQualifyingRecords(VulnrecError, ValueError):
    def __init__(self, needed, qualifying):
        super().__init__(f"need {needed} qualifying records, only {qualifying} qualify")
        self.needed = needed
        self.qualifying = qualifying


# -- generators ---------------------------------------------------------------


class EmptyDataset(DataError):
    pass


class InvalidEpsilon(ConfigError):
    pass


# -- classifiers --------------------------------------------------------------


class SingleClassTraining(VulnrecError, ValueError):
    pass


class EmptyFeatures(VulnrecError, ValueError):
    pass


class FeatureArityMismatch(VulnrecError, ValueError):
    pass


class DimensionMismatch(VulnrecError, ValueError):
    pass


class EmptySynthetic(DataError):
    pass


# -- attack pipeline ----------------------------------------------------------


class SingleClassLabels(VulnrecError, ValueError):
    pass


class LengthMismatch(VulnrecError, ValueError):
    pass


class SourceTooSmall(DataError):
    pass


class TargetUbiquitous(DataError):
    pass
