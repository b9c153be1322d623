"""
The embedded discrete-time chain of a Jackson network.

Every transition draws one increment event (an arrival, a transfer between
stations or a departure) with probability proportional to its rate. Service
events at an empty station are blocked and leave the state unchanged.
"""
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

from .errors import BoundaryState, InvalidNetwork
from .network import ChainState, TargetSpec, ValidatedNetwork

_LOGGER = logging.getLogger(__name__)


class EventKind(Enum):
    ARRIVAL = "Arrival"
    TRANSFER = "Transfer"
    DEPARTURE = "Departure"


@dataclass(frozen=True)
class IncrementEvent:
    kind: EventKind
    #: Station whose server completes, None for external arrivals.
    source: Optional[int]
    #: Station receiving the job, None when it leaves the network.
    destination: Optional[int]
    probability: float
    displacement: Tuple[int, ...]

    @property
    def label(self) -> str:
        stations = [s + 1 for s in (self.source, self.destination) if s is not None]
        return f"{self.kind.value}({','.join(str(s) for s in stations)})"

    def is_blocked(self, x: Sequence[int]) -> bool:
        return self.source is not None and x[self.source] == 0


def _displacement(d: int, source: Optional[int], destination: Optional[int]) -> Tuple[int, ...]:
    delta = [0] * d
    if source is not None:
        delta[source] -= 1
    if destination is not None:
        delta[destination] += 1
    return tuple(delta)


@lru_cache(maxsize=64)
def increment_table(vn: ValidatedNetwork) -> Tuple[IncrementEvent, ...]:
    """
    All events with positive probability, in a fixed order: arrivals by
    station, transfers by (from, to), then departures by station.
    """
    spec = vn.spec
    d = spec.d
    events: List[IncrementEvent] = []
    for i in range(d):
        if spec.lam[i] > 0:
            events.append(
                IncrementEvent(EventKind.ARRIVAL, None, i, spec.lam[i], _displacement(d, None, i))
            )
    for i in range(d):
        for j in range(d):
            p = spec.mu[i] * spec.routing[i][j]
            if p > 0:
                events.append(IncrementEvent(EventKind.TRANSFER, i, j, p, _displacement(d, i, j)))
    for i in range(d):
        p = spec.mu[i] * spec.exit_probabilities[i]
        if p > 0:
            events.append(
                IncrementEvent(EventKind.DEPARTURE, i, None, p, _displacement(d, i, None))
            )
    total = math.fsum(e.probability for e in events)
    if abs(total - 1.0) > 1e-10:
        raise InvalidNetwork(f"increment probabilities sum to {total!r}, expected 1")
    _LOGGER.debug("Increment table for %s has %d events", vn.name or "<unnamed>", len(events))
    return tuple(events)


def constrain(x: Sequence[int], event: IncrementEvent) -> Tuple[int, ...]:
    """The displacement actually applied at `x`: zero for a blocked service."""
    if event.is_blocked(x):
        return (0,) * len(x)
    return event.displacement


@dataclass(frozen=True)
class CompiledChain:
    """Flat lookup tables for inverse-transform sampling of the event table."""

    cumulative: Tuple[float, ...]
    sources: Tuple[int, ...]
    destinations: Tuple[int, ...]

    def select(self, u: float) -> int:
        return min(bisect_right(self.cumulative, u), len(self.cumulative) - 1)


@lru_cache(maxsize=64)
def compile_chain(vn: ValidatedNetwork) -> CompiledChain:
    events = increment_table(vn)
    cumulative = []
    running = 0.0
    for event in events:
        running += event.probability
        cumulative.append(running)
    return CompiledChain(
        cumulative=tuple(cumulative),
        sources=tuple(-1 if e.source is None else e.source for e in events),
        destinations=tuple(-1 if e.destination is None else e.destination for e in events),
    )


def step(vn: ValidatedNetwork, x: Sequence[int], u: float) -> ChainState:
    """Advance `x` by one transition driven by the uniform draw `u` in [0, 1)."""
    event = increment_table(vn)[compile_chain(vn).select(u)]
    return tuple(xi + di for xi, di in zip(x, constrain(x, event)))


def kernel_row(vn: ValidatedNetwork, x: Sequence[int]) -> List[Tuple[ChainState, float]]:
    """
    Successor states of `x` with their transition probabilities.

    Events leading to the same state are merged, so blocked services show up
    as a single self-loop entry.
    """
    masses: Dict[ChainState, List[float]] = {}
    for event in increment_table(vn):
        y = tuple(xi + di for xi, di in zip(x, constrain(x, event)))
        masses.setdefault(y, []).append(event.probability)
    return [(y, math.fsum(ps)) for y, ps in masses.items()]


def log_mgf(vn: ValidatedNetwork, x: Sequence[int], theta: Sequence[float]) -> float:
    """psi(x, theta) = log E[exp(theta^T zeta(x, Y))]."""
    terms = []
    for event in increment_table(vn):
        exponent = math.fsum(t * di for t, di in zip(theta, constrain(x, event)))
        terms.append(event.probability * math.exp(exponent))
    return math.log(math.fsum(terms))


def subsolution_residual(vn: ValidatedNetwork, target: TargetSpec, x: Sequence[int]) -> float:
    """
    psi evaluated at the gradient of the affine subsolution
    W(y) = gamma_V - w^T y, i.e. at theta = w.

    Raises:
        BoundaryState: `x` has an empty station
    """
    if len(x) != vn.d or len(target.v) != vn.d:
        raise InvalidNetwork(f"state {tuple(x)} does not match a {vn.d}-station network")
    if any(xi <= 0 for xi in x):
        raise BoundaryState(f"subsolution residual is only checked at interior states, got {tuple(x)}")
    return log_mgf(vn, x, vn.potential_weights)
