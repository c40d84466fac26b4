"""Exception hierarchy."""


class DroopsatError(Exception):
    pass


class InvalidBoundsError(DroopsatError, ValueError):
    pass


class DimensionError(DroopsatError, ValueError):
    pass


class StateError(DroopsatError, ValueError):
    """Storage energy outside its admissible interval."""


class NoDroopError(DroopsatError, ValueError):
    """No unit participates in power sharing, so the rho interval is undefined."""


class ConfigError(DroopsatError, ValueError):
    pass


class EncodingDefectError(DroopsatError, RuntimeError):
    """MILP trajectory disagrees with the droop simulation of its own plan."""


class SolverResourceError(DroopsatError, RuntimeError):
    """Node or time limit reached before any incumbent was found."""


class NumericalError(DroopsatError, RuntimeError):
    pass


class ControllerInfeasibleError(DroopsatError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BackendLookupError(DroopsatError, KeyError):
    pass


class DuplicateBackendError(DroopsatError, ValueError):
    pass


class GridCapError(DroopsatError, ValueError):
    pass
