"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2, numerical
blow-ups exit 3, statistical validation failures exit 4.
"""


class ConfigurationRejected(Exception):
    """A run configuration violates a named constraint and is refused."""

    def __init__(self, constraint: str, detail: str = ""):
        self.constraint = constraint
        msg = constraint if not detail else f"{constraint}: {detail}"
        super().__init__(msg)


class GridMismatchError(ValueError):
    """Operands live on different grids."""


class UnderResolvedMollifierError(ConfigurationRejected):
    """Mollifier width too small for the grid spacing."""

    def __init__(self, detail: str = ""):
        super().__init__("under-resolved mollifier", detail)


class NumericalBlowUp(RuntimeError):
    """A solver produced non-finite values."""

    def __init__(self, step: int, detail: str = ""):
        self.step = step
        super().__init__(f"non-finite state at step {step}" + (f" ({detail})" if detail else ""))


class StatisticalValidationError(Exception):
    """A statistical self-test exceeded its z-score budget."""
