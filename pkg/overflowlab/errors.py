from typing import Optional


class OverflowLabError(Exception):
    """Base class for every error raised by overflowlab."""


class InvalidNetwork(OverflowLabError, ValueError):
    pass


class NetworkFileError(OverflowLabError, ValueError):
    def __init__(self, path, reason: str):
        super().__init__(f"{path}: {reason}")
        self.path = path


class NotOpen(InvalidNetwork):
    def __init__(self, station: int, reason: str):
        super().__init__(f"network is not open: station {station + 1} {reason}")
        self.station = station


class Unstable(InvalidNetwork):
    def __init__(self, station: int, rho: float):
        super().__init__(
            f"network is unstable: station {station + 1} has traffic intensity {rho:.6g} >= 1"
        )
        self.station = station
        self.rho = rho


class SingularRouting(InvalidNetwork):
    pass


class EmptyTarget(OverflowLabError, ValueError):
    pass


class BoundaryState(OverflowLabError, ValueError):
    pass


class AlreadyInTarget(OverflowLabError, ValueError):
    pass


class NonPositiveValue(OverflowLabError, ValueError):
    pass


class RunawayRun(OverflowLabError, RuntimeError):
    def __init__(self, work: int):
        super().__init__(f"splitting run exceeded the work cap of {work} transitions")
        self.work = work


class DegenerateEstimate(OverflowLabError, RuntimeError):
    """All replications returned zero; the squared coefficient of variation is undefined."""


class TooLarge(OverflowLabError, RuntimeError):
    def __init__(self, count: int, limit: int):
        super().__init__(f"state space has {count} states, limit is {limit}")
        self.count = count
        self.limit = limit


class NoConvergence(OverflowLabError, RuntimeError):
    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"Gauss-Seidel did not converge after {sweeps} sweeps (relative residual {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


class TruncationNoConverge(OverflowLabError, RuntimeError):
    def __init__(self, doublings: int, last_change: Optional[float]):
        super().__init__(
            f"non-target truncation did not stabilise after {doublings} cap doublings"
            f" (last relative change {last_change})"
        )
        self.doublings = doublings
        self.last_change = last_change
