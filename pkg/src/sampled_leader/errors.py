"""Exception hierarchy shared by every module of the package."""


class SampledLeaderError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(SampledLeaderError, ValueError):
    pass


class DomainError(SampledLeaderError, ValueError):
    """An argument lies outside the domain of the operation (e.g. ``T <= 0``)."""


class SingularMatrixError(SampledLeaderError, ArithmeticError):
    """Raised when a linear system is numerically singular.

    The one-norm condition estimate that tripped the check is kept on
    ``condition`` so callers can decide how to recover.
    """

    def __init__(self, message, condition):
        super().__init__(message)
        self.condition = condition


class ControllabilityError(SampledLeaderError, ValueError):
    pass


class RankError(SampledLeaderError, ValueError):
    pass


class HypothesisError(SampledLeaderError, ValueError):
    """The interaction network violates the sink/acyclicity assumptions."""


class ConsistencyError(SampledLeaderError, ValueError):
    """Local formation offsets disagree along two paths to the leader."""

    def __init__(self, message, paths=None):
        super().__init__(message)
        self.paths = paths


class ScheduleError(SampledLeaderError, ValueError):
    pass


class ProtocolError(SampledLeaderError, RuntimeError):
    """A follower was evaluated without a packet it needs."""


class ConfigError(SampledLeaderError, ValueError):
    """Scenario configuration failed to parse or validate.

    ``problems`` lists every violation found, not only the first one.
    """

    def __init__(self, problems, source=None):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        self.source = source
        head = f"{source}: " if source else ""
        if len(self.problems) == 1:
            super().__init__(head + self.problems[0])
        else:
            super().__init__(f"{head}{len(self.problems)} problems:\n  " + "\n  ".join(self.problems))
