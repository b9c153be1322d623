"""
Static description of an open Jackson network.

A `NetworkSpec` carries raw arrival rates, service rates and routing
probabilities. `validate` turns it into a `ValidatedNetwork`: rates are
rescaled so that they sum to one, the traffic equations are solved and the
network is checked to be open and stable. `target_params` then describes
the subset of stations whose joint population is being watched.
"""
import json
import logging
import math
from collections import deque
from dataclasses import dataclass
from functools import reduce
from pathlib import Path
from typing import Any, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
    EmptyTarget,
    InvalidNetwork,
    NetworkFileError,
    NotOpen,
    SingularRouting,
    Unstable,
)

_LOGGER = logging.getLogger(__name__)

#: Relative tolerance used to decide whether two traffic intensities tie.
TIE_TOLERANCE = 1e-9
#: Slack allowed on routing row sums and normalisation checks.
ROUNDING_SLACK = 1e-12

ChainState = Tuple[int, ...]


@dataclass(frozen=True)
class NetworkSpec:
    """
    Arrival rates, service rates and routing matrix of an open Jackson network.

    Row `i` of `routing` holds the probabilities that a job finishing service
    at station `i` moves to station `j`; the deficit of the row is the
    probability of leaving the network.
    """

    lam: Tuple[float, ...]
    mu: Tuple[float, ...]
    routing: Tuple[Tuple[float, ...], ...]
    name: Optional[str] = None

    def __post_init__(self):
        d = len(self.lam)
        if d == 0:
            raise InvalidNetwork("network needs at least one station")
        if len(self.mu) != d:
            raise InvalidNetwork(f"expected {d} service rates, got {len(self.mu)}")
        if len(self.routing) != d or any(len(row) != d for row in self.routing):
            raise InvalidNetwork(f"routing matrix must be {d}x{d}")
        if any(not math.isfinite(rate) or rate < 0 for rate in self.lam):
            raise InvalidNetwork(f"arrival rates must be finite and non-negative: {self.lam}")
        if not any(rate > 0 for rate in self.lam):
            raise InvalidNetwork("at least one arrival rate must be positive")
        if any(not math.isfinite(rate) or rate <= 0 for rate in self.mu):
            raise InvalidNetwork(f"service rates must be finite and positive: {self.mu}")
        for i, row in enumerate(self.routing):
            if any(not 0.0 <= p <= 1.0 for p in row):
                raise InvalidNetwork(f"routing row {i + 1} has entries outside [0, 1]: {row}")
            if math.fsum(row) > 1.0 + ROUNDING_SLACK:
                raise InvalidNetwork(f"routing row {i + 1} sums to more than one: {math.fsum(row)}")

    @classmethod
    def from_arrays(
        cls,
        lam: Iterable[float],
        mu: Iterable[float],
        routing: Iterable[Iterable[float]],
        name: Optional[str] = None,
    ) -> "NetworkSpec":
        return cls(
            lam=tuple(float(rate) for rate in lam),
            mu=tuple(float(rate) for rate in mu),
            routing=tuple(tuple(float(p) for p in row) for row in routing),
            name=name,
        )

    @property
    def d(self) -> int:
        return len(self.lam)

    @property
    def exit_probabilities(self) -> Tuple[float, ...]:
        return tuple(max(0.0, 1.0 - math.fsum(row)) for row in self.routing)


@dataclass(frozen=True)
class ValidatedNetwork:
    """
    An open, stable network with rates normalised to sum to one.

    Instances are immutable and hashable so derived tables can be cached per
    network and shared between worker processes.
    """

    spec: NetworkSpec
    phi: Tuple[float, ...]
    rho: Tuple[float, ...]
    rho_star: float
    beta: int
    potential_weights: Tuple[float, ...]

    @property
    def d(self) -> int:
        return self.spec.d

    @property
    def name(self) -> Optional[str]:
        return self.spec.name

    def potential(self, x: Sequence[int]) -> float:
        """h(x) = sum_i -log(rho_i) x_i."""
        return math.fsum(w * xi for w, xi in zip(self.potential_weights, x))


@dataclass(frozen=True)
class TargetSpec:
    """The stations whose joint population is watched, with their bottleneck data."""

    v: Tuple[int, ...]
    rho_star_V: float
    beta_V: int
    gamma_V: float

    @property
    def stations(self) -> Tuple[int, ...]:
        return tuple(i for i, vi in enumerate(self.v) if vi)

    def value(self, x: Sequence[int]) -> int:
        """V(x) = v^T x."""
        return sum(xi for xi, vi in zip(x, self.v) if vi)


def _count_ties(values: Sequence[float], best: float) -> int:
    return sum(1 for value in values if abs(value - best) <= TIE_TOLERANCE * best)


def _check_open(spec: NetworkSpec) -> None:
    d = spec.d
    # Source is node d, sink is node d + 1.
    forward: List[List[int]] = [[] for _ in range(d + 2)]
    backward: List[List[int]] = [[] for _ in range(d + 2)]
    for i in range(d):
        if spec.lam[i] > 0:
            forward[d].append(i)
            backward[i].append(d)
        for j in range(d):
            if spec.routing[i][j] > 0:
                forward[i].append(j)
                backward[j].append(i)
        if spec.exit_probabilities[i] > ROUNDING_SLACK:
            forward[i].append(d + 1)
            backward[d + 1].append(i)

    def reachable(start: int, edges: List[List[int]]) -> set:
        seen = {start}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            for nxt in edges[node]:
                if nxt not in seen:
                    seen.add(nxt)
                    queue.append(nxt)
        return seen

    fed = reachable(d, forward)
    drained = reachable(d + 1, backward)
    for i in range(d):
        if i not in fed:
            raise NotOpen(i, "never receives jobs from outside the network")
        if i not in drained:
            raise NotOpen(i, "has no routing path to the exit")


def validate(spec: NetworkSpec) -> ValidatedNetwork:
    """
    Normalise rates, solve the traffic equations and check openness and stability.

    Raises:
        NotOpen: Some station is unreachable from outside or cannot drain
        SingularRouting: `I - P^T` is not invertible
        Unstable: Some traffic intensity is at least one
    """
    total = math.fsum(spec.lam) + math.fsum(spec.mu)
    normalized = NetworkSpec(
        lam=tuple(rate / total for rate in spec.lam),
        mu=tuple(rate / total for rate in spec.mu),
        routing=spec.routing,
        name=spec.name,
    )
    _check_open(normalized)

    lam = np.array(normalized.lam)
    routing = np.array(normalized.routing, dtype=float)
    system = np.eye(normalized.d) - routing.T
    try:
        phi = np.linalg.solve(system, lam)
    except np.linalg.LinAlgError as e:
        raise SingularRouting(f"I - P^T is singular: {e}")
    # One step of iterative refinement keeps the traffic residual at rounding level.
    phi = phi + np.linalg.solve(system, lam - system @ phi)
    residual = float(np.max(np.abs(phi - lam - routing.T @ phi)))
    if not np.all(np.isfinite(phi)) or residual > 1e-10:
        raise SingularRouting(f"traffic equations are ill-conditioned (residual {residual:.3e})")

    rho = phi / np.array(normalized.mu)
    for i, value in enumerate(rho):
        if value >= 1.0:
            raise Unstable(i, float(value))

    rho_star = float(np.max(rho))
    validated = ValidatedNetwork(
        spec=normalized,
        phi=tuple(float(value) for value in phi),
        rho=tuple(float(value) for value in rho),
        rho_star=rho_star,
        beta=_count_ties(rho, rho_star),
        potential_weights=tuple(-math.log(value) for value in rho),
    )
    _LOGGER.debug(
        "Validated network %s: rho=%s, rho*=%.6g, beta=%d",
        spec.name or "<unnamed>",
        validated.rho,
        rho_star,
        validated.beta,
    )
    return validated


def target_params(vn: ValidatedNetwork, v: Sequence[int]) -> TargetSpec:
    """
    Bottleneck data of the target subset encoded by the binary vector `v`.

    Raises:
        EmptyTarget: `v` selects no station
    """
    v = tuple(int(vi) for vi in v)
    if len(v) != vn.d:
        raise InvalidNetwork(f"target vector has length {len(v)}, network has {vn.d} stations")
    if any(vi not in (0, 1) for vi in v):
        raise InvalidNetwork(f"target vector must be binary: {v}")
    if not any(v):
        raise EmptyTarget("target vector selects no station")

    selected = [rho for rho, vi in zip(vn.rho, v) if vi]
    rho_star_V = max(selected)
    return TargetSpec(
        v=v,
        rho_star_V=rho_star_V,
        beta_V=_count_ties(selected, rho_star_V),
        gamma_V=-math.log(rho_star_V),
    )


def stationary_pmf(vn: ValidatedNetwork, x: Sequence[int]) -> float:
    """Product-form stationary probability pi(x) = prod_j (1 - rho_j) rho_j^x_j."""
    return math.prod((1.0 - rho) * rho ** xi for rho, xi in zip(vn.rho, x))


def log_stationary_pmf(vn: ValidatedNetwork, x: Sequence[int]) -> float:
    return math.fsum(math.log1p(-rho) + xi * math.log(rho) for rho, xi in zip(vn.rho, x))


def stationary_level_pmf(vn: ValidatedNetwork, target: TargetSpec, n: int) -> float:
    """
    P(v^T Q(inf) = n), the convolution of the target stations' geometric laws.

    Non-target stations are independent of the target ones and drop out.
    """
    if n < 0:
        return 0.0
    k = np.arange(n + 1)
    laws = [(1.0 - vn.rho[i]) * vn.rho[i] ** k for i in target.stations]
    law = reduce(lambda a, b: np.convolve(a, b)[: n + 1], laws)
    return float(law[n])


def steady_state_ratio(vn: ValidatedNetwork, target: TargetSpec, n: int, x: Sequence[int]) -> float:
    """
    P(v^T Q(inf) = n) / pi(x).

    Overflow probabilities from `x` are bounded by this ratio up to a
    constant that does not depend on `n` or `x`.
    """
    level = stationary_level_pmf(vn, target, n)
    if level <= 0.0:
        return 0.0
    return math.exp(math.log(level) - log_stationary_pmf(vn, x))


def parse_network(obj: Any, source: Union[str, Path] = "<memory>") -> NetworkSpec:
    if not isinstance(obj, Mapping):
        raise NetworkFileError(source, "expected a JSON object")
    missing = [key for key in ("lambda", "mu", "routing") if key not in obj]
    if missing:
        raise NetworkFileError(source, f"missing keys: {', '.join(missing)}")
    lam, mu, routing = obj["lambda"], obj["mu"], obj["routing"]
    if not isinstance(lam, list) or not isinstance(mu, list) or not isinstance(routing, list):
        raise NetworkFileError(source, "'lambda', 'mu' and 'routing' must be arrays")
    d = len(lam)
    if len(mu) != d or len(routing) != d or any(
        not isinstance(row, list) or len(row) != d for row in routing
    ):
        raise NetworkFileError(
            source, f"array lengths disagree: lambda has {d}, mu {len(mu)}, routing {len(routing)} rows"
        )
    try:
        return NetworkSpec.from_arrays(lam, mu, routing, name=obj.get("name"))
    except (TypeError, ValueError) as e:
        raise NetworkFileError(source, str(e))


def load_network(path: Union[str, Path]) -> NetworkSpec:
    """
    Read a network file: a UTF-8 JSON object with keys "lambda", "mu",
    "routing" and an optional "name".
    """
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise NetworkFileError(path, f"cannot read file: {e.strerror or e}")
    except UnicodeDecodeError as e:
        raise NetworkFileError(path, f"not valid UTF-8: {e}")
    except json.JSONDecodeError as e:
        raise NetworkFileError(path, f"invalid JSON: {e}")
    return parse_network(obj, source=path)
