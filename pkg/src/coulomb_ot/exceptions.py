"""Exception hierarchy.

Everything the toolkit raises on bad input derives from
:class:`CoulombOTError`; most also derive from ``ValueError`` so callers
that only know about the builtin still catch them.
"""


class CoulombOTError(Exception):
    """Base class for all toolkit errors."""


class InvalidGridError(CoulombOTError, ValueError):
    pass


class TruncationError(CoulombOTError, ValueError):
    """An analytic density puts too much mass outside the box."""


class InvalidDataError(CoulombOTError, ValueError):
    pass


class InvalidInputError(CoulombOTError, ValueError):
    pass


class InvalidExponentError(CoulombOTError, ValueError):
    pass


class UnderResolvedKernelError(CoulombOTError, ValueError):
    """The mollifier width is too small for the grid spacing."""


class InputMismatchError(CoulombOTError, ValueError):
    pass


class PreconditionError(CoulombOTError, ValueError):
    pass


class InvalidProfileError(CoulombOTError, ValueError):
    pass


class CapExceededError(CoulombOTError, MemoryError):
    """A dense field or LP would exceed the configured size cap."""


class ConvergenceError(CoulombOTError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance.

    The partial state is kept so callers can report it.
    """

    def __init__(self, message, residuals=None, iterations=None, solution=None):
        super().__init__(message)
        self.residuals = residuals
        self.iterations = iterations
        self.solution = solution
