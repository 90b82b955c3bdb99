"""Exception hierarchy shared by the simulator modules."""


class QnschError(Exception):
    """Base class for simulator errors."""


class GridError(QnschError, ValueError):
    pass


class NonZeroMeanError(QnschError, ValueError):
    """A Poisson-type solve received data with a non-negligible mean."""


class SingularDomainError(QnschError, ValueError):
    """A singular potential was evaluated outside its open domain."""


class ParameterError(QnschError, ValueError):
    pass


class InitialDataError(QnschError, ValueError):
    pass


class ConsistencyError(QnschError, ValueError):
    """Derived fields supplied to an identity check do not match each other."""


class ConfinementError(QnschError):
    """The density left its admissible band during a run."""


class DivergenceError(QnschError):
    """A non-finite value appeared in the state."""


class HistoryError(QnschError, ValueError):
    pass


class ConfigError(QnschError, ValueError):
    pass


class CheckpointError(QnschError):
    pass
