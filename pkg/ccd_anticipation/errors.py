"""
Exceptions raised across the package. Every class derives from ``ValueError`` so code that
catches the builtin keeps working.
"""


class CCDError(ValueError):
    pass


class ConfigError(CCDError):
    pass


class DataError(CCDError):
    pass


class ParseError(DataError):
    """
    A corpus record could not be parsed.

    `Args:`
        line_number: int
            1-based line of the offending record
        message: str
            What was wrong with it
    """

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f'line {line_number}: {message}')


class VersionError(CCDError):
    pass


class InputError(CCDError):
    pass


class SimilarityError(InputError):
    pass


class AlignmentError(CCDError):
    pass


class NumericError(CCDError):
    """
    A loss or input became non-finite.

    `Args:`
        message: str
        diagnostics: dict
            Batch-level details (sample ids, loss components) for debugging
    """

    def __init__(self, message, diagnostics=None):
        self.diagnostics = diagnostics or {}
        if self.diagnostics:
            message = f'{message} ({self.diagnostics})'
        super().__init__(message)
