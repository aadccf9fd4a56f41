"""Exception types raised across the package."""


class ParameterError(ValueError):
    """An argument lies outside its admissible range."""


class ShapeError(ValueError):
    """Matrix dimensions do not chain."""


class DomainError(ValueError):
    """A quantity is undefined for the given input (e.g. a zero matrix)."""


class ParseError(ValueError):
    """Malformed input file.  ``line`` is 1-based when known."""

    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f"line {line}"
            if column is not None:
                loc += f", column {column}"
            loc += ": "
        super().__init__(loc + message)
        self.line = line
        self.column = column
