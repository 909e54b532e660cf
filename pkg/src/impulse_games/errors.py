"""Exception types shared across the package."""


class ImpulseGamesError(Exception):
    pass


class IllPosed(ImpulseGamesError, ValueError):
    """Parameters violate the well-posedness conditions of the requested problem."""


class NoConvergence(ImpulseGamesError, RuntimeError):
    """Iterative solve did not reach tolerance.

    The best iterate seen and its residual norm are attached so callers can
    inspect or report them.
    """

    def __init__(self, message, best=None, residual=float("nan"), iterations=0):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.iterations = iterations


class GridTooSmall(ImpulseGamesError, ValueError):
    """Computed band reaches the truncation boundary of the grid."""


class CascadeOverflow(ImpulseGamesError, RuntimeError):
    """Too many same-instant interventions in one simulation step."""


class DegenerateBand(ImpulseGamesError, ValueError):
    pass
