"""Exception hierarchy shared by all modules."""


class LiftedFilterError(Exception):
    """Base class for every error raised by this package."""


class ValueAbsent(LiftedFilterError):
    pass


class CapacityExceeded(LiftedFilterError):
    pass


class SlotAbsent(LiftedFilterError):
    pass


class ValueImpossible(LiftedFilterError):
    pass


class SelectorAmbiguous(LiftedFilterError):
    pass


class InvalidState(LiftedFilterError):
    """Raised when an operation needs a valid lifted state and got an invalid one."""


class InvalidEffect(LiftedFilterError):
    pass


class ExplosionGuard(LiftedFilterError):
    """The number of enumerated states or hypotheses exceeded the configured cap."""

    def __init__(self, count, limit, t=None):
        self.count = count
        self.limit = limit
        self.t = t
        where = "" if t is None else f" at t={t}"
        super().__init__(f"explosion guard hit{where}: {count} > {limit}")


class ImpossibleObservation(LiftedFilterError):
    """Every hypothesis assigns zero likelihood to the observation."""

    def __init__(self, t=None, detail=""):
        self.t = t
        where = "" if t is None else f" at t={t}"
        super().__init__(f"observation has zero likelihood{where}{': ' + detail if detail else ''}")


class ParseError(LiftedFilterError):
    pass


class ValidationError(LiftedFilterError):
    pass


class UnknownScenario(LiftedFilterError):
    pass
