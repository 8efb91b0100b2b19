"""Exception types. Each carries a stable ``code`` used by the CLI exit map."""


class LagomError(Exception):
    code = "LAGOM_ERROR"


class InvalidWorkloadError(LagomError, ValueError):
    """A workload, config or parameter document violates an invariant.

    ``path`` locates the offending field, e.g. ``comm_ops[0].bounds.nc_max``.
    """

    code = "INVALID_WORKLOAD"

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


class UnknownSubspaceError(LagomError, KeyError):
    code = "UNKNOWN_SUBSPACE"

    def __str__(self):
        return f"no coefficients for subspace {self.args[0]!r}"


class SMExhaustionError(LagomError):
    code = "SM_EXHAUSTION"


class BandwidthExhaustionError(LagomError):
    code = "BANDWIDTH_EXHAUSTION"


class PartitionMismatchError(LagomError, ValueError):
    code = "PARTITION_MISMATCH"


class GridTooLargeError(LagomError):
    code = "GRID_TOO_LARGE"

    def __init__(self, size, limit):
        self.size = size
        self.limit = limit
        super().__init__(f"joint grid has {size} points, limit is {limit}")
