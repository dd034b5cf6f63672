"""Exception hierarchy.

Every error carries a ``category`` used by the command line to produce a
single greppable prefix (``error[<category>]: ...``).
"""

from __future__ import annotations


class TaskEnergyError(Exception):
    category = "runtime"


class InvalidIntervalError(TaskEnergyError, ValueError):
    category = "invalid-interval"


class ShareDomainError(TaskEnergyError, ValueError):
    category = "share-domain"


class MissingLedgerError(TaskEnergyError, KeyError):
    category = "missing-ledger"

    def __str__(self) -> str:
        return Exception.__str__(self)


class PairingError(TaskEnergyError, ValueError):
    category = "pairing"


class OrderingError(TaskEnergyError, ValueError):
    category = "ordering"


class InsufficientDataError(TaskEnergyError, ValueError):
    category = "insufficient-data"


class GapError(TaskEnergyError):
    category = "ledger-gap"

    def __init__(self, message: str, keys=()):
        super().__init__(message)
        self.keys = tuple(keys)


class TraceParseError(TaskEnergyError, ValueError):
    category = "trace-parse"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleScenarioError(TaskEnergyError, ValueError):
    category = "infeasible-scenario"


class StartupError(TaskEnergyError):
    category = "startup"


class MonitorStateError(TaskEnergyError):
    category = "monitor-state"


class PodSourceError(TaskEnergyError):
    category = "pod-source"


class ConsistencyError(TaskEnergyError):
    category = "consistency"


class CorruptRecordError(TaskEnergyError, ValueError):
    category = "corrupt-record"

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ":".join(str(p) for p in (path, line) if p is not None)
        super().__init__(f"{where}: {message}" if where else message)


class MetricError(TaskEnergyError, ValueError):
    category = "metric"


class FlushError(TaskEnergyError, OSError):
    category = "flush"

    def __init__(self, message: str, partial_output: str):
        super().__init__(f"{message} (partial output in {partial_output})")
        self.partial_output = partial_output


class UsageError(TaskEnergyError, ValueError):
    category = "usage"
