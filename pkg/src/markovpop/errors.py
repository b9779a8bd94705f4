"""Exception hierarchy shared across the package.

Two error families map onto the CLI exit codes: configuration /
validation problems (exit code 1) and input-data problems (exit code 2).
"""


class MarkovPopError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(MarkovPopError):
    """Invalid configuration, flags, or model/horizon validation failure."""

    exit_code = 1

    def __init__(self, message, problems=None):
        if problems:
            message = message + "\n" + "\n".join("  - " + p for p in problems)
        super().__init__(message)
        self.problems = list(problems) if problems else []


class HorizonError(ConfigError):
    """Projection horizon does not fit the configured age range."""


class DataError(MarkovPopError):
    """Malformed or inconsistent input data (records, reserve, salary scale)."""

    exit_code = 2

    def __init__(self, message, problems=None):
        if problems:
            shown = list(problems)[:25]
            message = message + "\n" + "\n".join("  - " + p for p in shown)
            if len(problems) > len(shown):
                message += f"\n  ... and {len(problems) - len(shown)} more"
        super().__init__(message)
        self.problems = list(problems) if problems else []
