class ContractViolation(RuntimeError):
    """An input broke a precondition that callers are responsible for."""


class DivergenceError(ArithmeticError):
    """A solve produced a non-finite value."""

    def __init__(self, step, block, realization=None, scheme=""):
        self.step = step
        self.block = block
        self.realization = realization
        where = f"step {step}, block {block}"
        if realization is not None:
            where += f", realization {realization}"
        super().__init__(f"{scheme or 'integration'} diverged at {where}")


class UnsupportedSchemeError(ValueError):
    """The requested integrator does not apply to this model."""


class AccuracyError(ArithmeticError):
    """A numerical approximation failed its own convergence check."""
