"""Exception hierarchy shared by every classb module."""


class ClassBError(Exception):
    """Base class for all errors raised by classb."""


class ParseError(ClassBError):
    """Malformed expression text.

    ``offset`` is the byte offset of the offending token and ``expected``
    the set of token kinds that would have been accepted there.
    """

    def __init__(self, message, offset, expected=()):
        self.offset = offset
        self.expected = frozenset(expected)
        detail = f"{message} at offset {offset}"
        if self.expected:
            detail += f" (expected one of: {', '.join(sorted(self.expected))})"
        super().__init__(detail)


class EvalError(ClassBError):
    """Evaluation failed (unbound variable)."""


class DomainError(EvalError):
    """A subexpression was evaluated outside its domain."""

    def __init__(self, message, subtree=None):
        self.subtree = subtree
        if subtree is not None:
            message = f"{message} in subexpression {subtree}"
        super().__init__(message)


class FamilyError(ClassBError):
    """Invalid family definition or parameters."""


class TableError(ClassBError):
    """Incomplete or inconsistent moment table."""


class TransformError(ClassBError):
    """Invalid transformation (e.g. singular matrix)."""


class InferenceError(ClassBError):
    """Fisher information could not be computed reliably."""


class TailError(ClassBError):
    """Tail exponent could not be computed."""


class OracleError(ClassBError):
    """The oracle does not support the request."""
