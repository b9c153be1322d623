"""
Time reversal of the embedded chain with respect to its product-form law.

The reversed kernel is K~(y, x) = K(x, y) pi(x) / pi(y). It is again the
embedded chain of an open Jackson network, which `reversed_network` writes
down in closed form.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

from .chain import increment_table, kernel_row
from .network import ChainState, NetworkSpec, ValidatedNetwork

_LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ReversedKernelRow:
    origin: ChainState
    entries: Tuple[Tuple[ChainState, float], ...]

    def as_dict(self) -> Dict[ChainState, float]:
        return dict(self.entries)

    @property
    def total(self) -> float:
        return math.fsum(p for _, p in self.entries)


def _pi_ratio(vn: ValidatedNetwork, x: Sequence[int], y: Sequence[int]) -> float:
    """pi(x) / pi(y) without forming either probability."""
    return math.prod(rho ** (xi - yi) for rho, xi, yi in zip(vn.rho, x, y))


def reversed_kernel_row(vn: ValidatedNetwork, y: Sequence[int]) -> ReversedKernelRow:
    """
    Predecessors `x` of `y` with the reversed probabilities K~(y, x).

    Candidates are `y` itself and `y - w` for every increment `w`; the forward
    kernel row is recomputed at each candidate so blocked self-loops are
    accounted for where they occur.
    """
    y = tuple(y)
    candidates = [y]
    for event in increment_table(vn):
        x = tuple(yi - di for yi, di in zip(y, event.displacement))
        if min(x) >= 0 and x not in candidates:
            candidates.append(x)

    entries = []
    for x in candidates:
        forward = dict(kernel_row(vn, x)).get(y, 0.0)
        if forward > 0.0:
            entries.append((x, forward * _pi_ratio(vn, x, y)))
    return ReversedKernelRow(origin=y, entries=tuple(entries))


def reversed_network(vn: ValidatedNetwork) -> NetworkSpec:
    """
    The Jackson network whose embedded chain is the time reversal of `vn`'s.

    Arrivals enter station i at rate phi_i P_i0, a job leaving station i moves
    to j with probability phi_j P_ji / phi_i and exits with probability
    lambda_i / phi_i; service rates are unchanged.
    """
    spec = vn.spec
    d = spec.d
    phi = vn.phi
    exits = spec.exit_probabilities
    lam = tuple(phi[i] * exits[i] for i in range(d))
    routing = tuple(
        tuple(phi[j] * spec.routing[j][i] / phi[i] for j in range(d)) for i in range(d)
    )
    name = f"{spec.name} (reversed)" if spec.name else None
    _LOGGER.debug("Reversed network arrivals %s", lam)
    return NetworkSpec(lam=lam, mu=spec.mu, routing=routing, name=name)
