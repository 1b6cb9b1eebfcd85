"""Exception types raised by canodual."""


class DomainError(ValueError):
    """An argument lies outside the domain of a canonical function."""

    def __init__(self, message, term_index=None):
        if term_index is not None:
            message = f"term {term_index}: {message}"
        super().__init__(message)
        self.term_index = term_index


class PoleError(DomainError):
    """G(sigma) is (numerically) singular at the requested dual point."""


class ProblemFileError(ValueError):
    """A problem file could not be parsed or failed schema validation."""

    def __init__(self, message, location=None):
        self.location = location
        if location:
            message = f"{location}: {message}"
        super().__init__(message)
