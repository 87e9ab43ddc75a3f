"""Exception types shared across the simulator."""


class SimulatorError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(SimulatorError):
    """Invalid scenario document. `path` names the offending key, e.g. nodes[3].cpu_rate."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class NoSuchLinkError(SimulatorError):
    pass


class UnreachableError(SimulatorError):
    def __init__(self, src: int, dst: int):
        self.src = src
        self.dst = dst
        super().__init__(f"no path from node {src} to node {dst}")


class PartitionError(SimulatorError):
    pass


class SelectionError(SimulatorError):
    pass


class TransferError(SimulatorError):
    pass


class ShapeError(SimulatorError):
    pass


class SegmentationError(SimulatorError):
    pass


class AggregationError(SimulatorError):
    pass


class ConsistencyError(AggregationError):
    """Per-range contribution weights disagree: a segment was lost or duplicated."""


class StrandedDeviceError(SimulatorError):
    def __init__(self, device_id: int):
        self.device_id = device_id
        super().__init__(
            f"device {device_id} is below the uplink threshold and has no "
            f"qualifying neighbor to carry its model segments"
        )


class NonComputeNodeError(SimulatorError):
    pass


class SimulationError(SimulatorError):
    """A round failed and the run report was flagged invalid."""
