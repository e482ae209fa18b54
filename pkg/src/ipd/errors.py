"""Exception types raised by the simulator."""


class IPDError(Exception):
    """Base class for all simulator errors."""


class ConfigError(IPDError, ValueError):
    """Invalid scenario configuration."""


class DegenerateRegionError(IPDError, ValueError):
    pass


class IsolatedPointError(IPDError, ValueError):
    pass


class ConnectivityError(IPDError, ValueError):
    """The lattice/horizon combination leaves some point without a usable horizon."""


class DegenerateHorizonError(IPDError, ArithmeticError):
    def __init__(self, point, message="degenerate horizon"):
        super().__init__(f"{message} at point {point}")
        self.point = point


class InvertedElementError(IPDError, ArithmeticError):
    def __init__(self, point, J):
        super().__init__(f"inverted element at point {point} (J = {J:.3e})")
        self.point = point
        self.J = J


class IncompressibleLimitError(IPDError, ValueError):
    pass


class StructureEscapedError(IPDError, RuntimeError):
    pass


class SolverError(IPDError, RuntimeError):
    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SimulationError(IPDError, RuntimeError):
    """Fatal error during a time step; ``phase`` names the step phase."""

    def __init__(self, phase, message):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase
