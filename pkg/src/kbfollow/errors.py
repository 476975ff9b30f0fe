"""Exception types raised across the package."""


class KbFollowError(Exception):
    """Base class for all errors raised by kbfollow."""


class UnknownName(KbFollowError, KeyError):
    pass


class TypeMismatch(KbFollowError, ValueError):
    pass


class DuplicateTriple(KbFollowError, ValueError):
    pass


class NegativeWeight(KbFollowError, ValueError):
    pass


class ParseError(KbFollowError, ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DimensionMismatch(KbFollowError, ValueError):
    pass


class ShapeMismatch(DimensionMismatch):
    pass


class BatchMismatch(DimensionMismatch):
    pass


class IncompatibleRelations(KbFollowError, ValueError):
    pass


class StrategyUnavailable(KbFollowError):
    pass


class NonScalarLoss(KbFollowError, ValueError):
    pass


class InvalidShardCount(KbFollowError, ValueError):
    pass


class MissingGroupTag(KbFollowError, ValueError):
    pass


class UnknownToken(KbFollowError, KeyError):
    pass


class UnknownQueryRelation(KbFollowError, KeyError):
    pass


class ConfigError(KbFollowError, ValueError):
    pass
