"""Exception types shared by the parsers and the routing structures."""


class OpticError(Exception):
    pass


class ParseError(OpticError):
    """Malformed input text. Carries the 1-based line number when known."""

    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class NotFoundError(OpticError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class ConflictError(OpticError):
    pass


class TopologyError(OpticError):
    """Structurally invalid topology (dangling link, bad weight, bad vantage)."""


class ParameterError(OpticError, ValueError):
    pass


class SetExhausted(OpticError):
    """Every entry of an OPR set is unreachable."""
