"""Exception hierarchy shared by every module of the package."""


class GJNError(Exception):
    """Base class for all package errors."""


class SpecError(GJNError, ValueError):
    """A network or experiment document could not be parsed.

    ``path`` is the key path (e.g. ``blocks[1].b``) that triggered the error,
    ``line`` the 1-based line number when the JSON decoder reported one.
    """

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if path:
            where.append(f"key '{path}'")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class SingularRouting(GJNError):
    pass


class DeadStation(GJNError):
    pass


class SingularBlock(GJNError):
    pass


class NotMMatrix(GJNError):
    pass


class NotPSD(GJNError):
    pass


class NegativeStart(GJNError):
    pass


class NoConvergence(GJNError):
    def __init__(self, max_iter, change):
        self.max_iter = max_iter
        self.change = change
        super().__init__(
            f"reflection fixed point did not converge in {max_iter} iterations "
            f"(last sup-norm change {change:.3e})"
        )


class EventOverflow(GJNError):
    def __init__(self, cap):
        self.cap = cap
        super().__init__(f"event count exceeded the cap of {cap}")


class GridMismatch(GJNError):
    pass


class TooFewSamples(GJNError):
    pass
