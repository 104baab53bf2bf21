"""Exception hierarchy.

Each class carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class FewShotError(Exception):
    exit_code = 1


class ConfigError(FewShotError, ValueError):
    """Invalid parameters or an impossible task configuration."""

    exit_code = 2


class DataError(FewShotError, ValueError):
    """Malformed input data: feature files, manifests, pools."""

    exit_code = 3


class InsufficientTasksError(FewShotError):
    """Too few tasks to build the requested interval."""

    exit_code = 4

    def __init__(self, message: str, task_count: int):
        super().__init__(message)
        self.task_count = task_count
