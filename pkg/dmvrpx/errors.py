"""Exception types shared across dmvrpx.

Every error that can reach the command line carries the exit code the CLI
maps it to.
"""


class DmvrpxError(Exception):
    exit_code: int = 1


class UsageError(DmvrpxError):
    exit_code = 2


class InvalidSettingError(UsageError, ValueError):
    """Raised for parameter combinations outside the 66-setting catalogue."""


class ArtifactIOError(DmvrpxError):
    exit_code = 3


class InvariantViolation(DmvrpxError, AssertionError):
    exit_code = 4


class ContractViolation(DmvrpxError, LookupError):
    """A decision rule was queried outside the states it is defined on."""
