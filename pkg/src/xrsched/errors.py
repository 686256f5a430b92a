class XrSchedError(Exception):
    """Base class; ``exit_code`` is the CLI status for this category."""

    exit_code = 1


class ConfigError(XrSchedError, ValueError):
    exit_code = 2


class ConfigParseError(ConfigError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(where + message)


class GenerationError(XrSchedError, ValueError):
    exit_code = 3


class ContractError(XrSchedError, AssertionError):
    exit_code = 4


class InstanceTooLargeError(XrSchedError, ValueError):
    exit_code = 5

    def __init__(self, message, enumeration_count):
        self.enumeration_count = enumeration_count
        super().__init__(message)


class OutputError(XrSchedError, OSError):
    exit_code = 6
