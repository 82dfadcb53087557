"""Exception types shared across the engine."""


class ThermoformError(Exception):
    pass


class MapDefinitionError(ThermoformError, ValueError):
    """The map description is not a valid piecewise-monotone Markov map."""


class DomainError(ThermoformError, ValueError):
    pass


class InverseBranchError(ThermoformError, ArithmeticError):
    """An inverse branch could not be located inside its bracketing atom."""

    def __init__(self, atom, y, bracket, detail=""):
        self.atom = atom
        self.y = y
        self.bracket = bracket
        msg = f"no preimage of {y!r} in atom {atom} bracket {bracket}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class ConvergenceError(ThermoformError, ArithmeticError):
    def __init__(self, msg, bracket=None, iterations=None):
        self.bracket = bracket
        self.iterations = iterations
        super().__init__(f"{msg}; last bracket={bracket}, iterations={iterations}")


class ContractError(ThermoformError, ValueError):
    """A documented precondition of an operation does not hold."""


class HypothesisViolation(ThermoformError):
    """A standing hypothesis or constant restriction fails for this instance."""

    def __init__(self, condition, msg):
        self.condition = condition
        super().__init__(f"{condition}: {msg}")


class HorizonError(ThermoformError, ValueError):
    pass


class InvalidPotentialError(ThermoformError, ValueError):
    pass
