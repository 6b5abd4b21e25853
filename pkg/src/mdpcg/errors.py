"""Exception types raised by the solvers and builders."""


class MDPCGError(Exception):
    """Base class for all library errors."""


class ZeroRow(MDPCGError, ValueError):
    """A transition-kernel row sums to zero and cannot be normalized."""

    def __init__(self, t, s, a):
        self.index = (t, s, a)
        super().__init__(f"kernel row (t={t}, s={s}, a={a}) sums to zero")


class InfeasibleInput(MDPCGError, ValueError):
    """A mass distribution violates flow conservation beyond tolerance."""


class DimensionMismatch(MDPCGError, ValueError):
    pass


class NotConverged(MDPCGError):
    """Iteration cap reached before a stopping criterion fired.

    ``result`` holds the last iterate together with its diagnostics.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class InfeasibleConstraints(MDPCGError):
    """No flow on the polytope satisfies the planner constraints."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DisconnectedGraph(MDPCGError, ValueError):
    pass


class ConfigError(MDPCGError, ValueError):
    pass
