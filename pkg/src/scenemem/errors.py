"""Exception types raised by the cache machinery."""


class SceneMemError(Exception):
    """Base class for all package errors."""


class ConfigError(SceneMemError, ValueError):
    pass


class DimensionError(SceneMemError, ValueError):
    pass


class BudgetOverflowError(SceneMemError):
    """Cache holds more frame-equivalents than the window allows."""

    def __init__(self, message, block=None):
        super().__init__(message if block is None else f"block {block}: {message}")
        self.block = block


class OrderingError(SceneMemError, ValueError):
    pass


class FrozenStatsError(SceneMemError):
    pass


class NotCalibratedError(SceneMemError):
    pass


class UndefinedDirectionError(SceneMemError, ValueError):
    pass


class MissingSceneError(SceneMemError, KeyError):
    pass


class RoutingError(SceneMemError, ValueError):
    pass


class TagParseError(SceneMemError, ValueError):
    def __init__(self, message, position):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class ScriptError(SceneMemError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class AttentionError(SceneMemError, ValueError):
    pass
