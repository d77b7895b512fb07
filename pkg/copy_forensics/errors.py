"""Exception hierarchy for copy_forensics."""


class CopyForensicsError(Exception):
    """Base class for every error raised by the package."""


class InputFormatError(CopyForensicsError, ValueError):
    """A response file, key file or results file is malformed."""


class ModelFileError(CopyForensicsError):
    """A persisted model file cannot be loaded or does not match the exam."""


class DomainError(CopyForensicsError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(CopyForensicsError):
    """Not enough examinees, rooms, pairs or answered questions."""


class IneligibleStudentError(CopyForensicsError):
    """The fitted model has no usable parameters for this student."""
