"""Exception hierarchy.

Two families matter to callers: ``PreconditionError`` (the problem does not
satisfy what an algorithm needs, exit code 1 in the CLI) and
``NumericalError`` (the numerics broke down, exit code 2).
"""


class DescobsError(Exception):
    pass


class InvalidInputError(DescobsError, ValueError):
    pass


class PreconditionError(DescobsError):
    """A structural requirement of a design method is violated.

    ``condition`` names the violated requirement, e.g. ``"v_i2=n_2"``.
    """

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class RegularityError(PreconditionError):
    def __init__(self, message="pencil (E, A) is not regular"):
        super().__init__(message, condition="regular")


class ConnectivityError(PreconditionError):
    def __init__(self, message="communication graph is not strongly connected"):
        super().__init__(message, condition="strongly-connected")


class JointObservabilityError(PreconditionError):
    def __init__(self, message, mu=None, spectrum=None):
        super().__init__(message, condition="joint-observability")
        self.mu = mu
        self.spectrum = spectrum


class ImpulsivePlantError(PreconditionError):
    def __init__(self, message="A22 is singular: plant has impulsive modes"):
        super().__init__(message, condition="A22-invertible")


class StaleDesignError(PreconditionError):
    def __init__(self, message):
        super().__init__(message, condition="design-matches-config")


class NumericalError(DescobsError):
    pass


class IllConditionedSplitError(NumericalError):
    def __init__(self, eigenvalue, message=None):
        self.eigenvalue = eigenvalue
        super().__init__(
            message
            or f"eigenvalue {eigenvalue!r} lies in the ambiguity band of the zero cluster"
        )


class SingularEquationError(NumericalError):
    pass


class NoStabilizingSolutionError(NumericalError):
    pass


class DegeneratePencilError(NumericalError):
    pass


class SynthesisError(NumericalError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NotRealizableError(NumericalError):
    def __init__(self, agent, message):
        super().__init__(f"agent {agent}: {message}")
        self.agent = agent


class DivergenceError(NumericalError):
    def __init__(self, message, time=None, agent=None):
        super().__init__(message)
        self.time = time
        self.agent = agent
