"""Exception hierarchy shared by all modules."""


class UnderactError(Exception):
    """Base class for domain errors raised by this package."""

    stage = None

    def __init__(self, message="", *, stage=None):
        super().__init__(message)
        if stage is not None:
            self.stage = stage

    def __str__(self):
        msg = super().__str__()
        return f"[{self.stage}] {msg}" if self.stage else msg


class OutOfChart(UnderactError, ValueError):
    pass


class DegenerateMetric(UnderactError, ArithmeticError):
    pass


class CharacteristicExit(UnderactError):
    pass


class MuVanishes(UnderactError):
    pass


class SigmaVanishes(UnderactError):
    pass


class PathDependence(UnderactError):
    pass


class OutOfRegion(UnderactError, ValueError):
    pass


class StepFailure(UnderactError, RuntimeError):
    pass


class BadParameter(UnderactError, ValueError):
    pass


class SingularPlacement(UnderactError, ArithmeticError):
    pass


class NotHurwitz(UnderactError, ValueError):
    pass


class BadD(UnderactError, ValueError):
    pass


class NotSettled(UnderactError):
    pass


class CenterOutside(UnderactError, ValueError):
    pass


class ParseError(UnderactError, ValueError):
    def __init__(self, message, offset=None, source=None):
        self.offset = offset
        self.source = source
        if offset is not None:
            message = f"{message} at offset {offset}"
            if source is not None:
                message += f"\n  {source}\n  {' ' * offset}^"
        super().__init__(message)


class EvaluationError(UnderactError, ArithmeticError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (expression offset {offset})"
        super().__init__(message)


class ConfigError(UnderactError, ValueError):
    pass
