"""Exception types shared across the package.

The CLI maps these onto exit codes: check failures exit 1, invalid input
exits 2, exhausted budgets exit 3.
"""


class CheckFailure(AssertionError):
    """A verified identity did not hold.

    ``residual`` carries whatever object witnesses the failure (a nonzero
    operator, a polynomial difference, a float residual).
    """

    def __init__(self, check, message, residual=None):
        super().__init__(f"{check}: {message}")
        self.check = check
        self.residual = residual


class RankDeficiencyError(ArithmeticError):
    def __init__(self, rank, size):
        super().__init__(f"singular system: rank {rank} < {size}")
        self.rank = rank
        self.size = size


class BudgetExceeded(RuntimeError):
    """A size or iteration budget was exhausted."""


class IncompleteEnumeration(BudgetExceeded):
    def __init__(self, found, expected):
        super().__init__(f"found {found} of {expected} critical points before the budget ran out")
        self.found = found
        self.expected = expected


class DegenerateInput(ValueError):
    """Non-generic parameters (degenerate Hessian, non-simple fiber point, ...)."""
