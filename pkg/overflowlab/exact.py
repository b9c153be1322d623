"""
Exact overflow probabilities from the first-passage linear system.

Conditioning on the first transition gives p(x) = sum_y K(x, y) p(y) with
p = 1 on the overflow set {v^T y >= n} and p = 0 at the empty network.
For targets that leave some stations out, those stations are truncated at
reflecting caps that are doubled until the answer stops moving.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve_triangular

from .chain import kernel_row
from .errors import InvalidNetwork, NoConvergence, TooLarge, TruncationNoConverge
from .network import ChainState, TargetSpec, ValidatedNetwork, target_params
from .settings import SolverSettings

_LOGGER = logging.getLogger(__name__)

#: Relative change below which doubling the truncation caps is considered converged.
TRUNCATION_TOLERANCE = 1e-10
#: Largest state space the regeneration identity is checked on.
REGENERATION_MAX_STATES = 100_000


@dataclass(frozen=True)
class StateIndexer:
    """
    Lexicographic enumeration of the transient states
    {x : v^T x < n, x_i <= cap_i for v_i = 0} minus `excluded`.
    """

    d: int
    n: int
    v: Tuple[int, ...]
    caps: Tuple[Optional[int], ...]
    excluded: frozenset
    states: Tuple[ChainState, ...]
    _index: Dict[ChainState, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(self.states)})

    def __len__(self) -> int:
        return len(self.states)

    def __contains__(self, x) -> bool:
        return tuple(x) in self._index

    def index(self, x: Sequence[int]) -> int:
        return self._index[tuple(x)]

    def clamp(self, y: Sequence[int]) -> ChainState:
        """Redirect a state beyond a non-target cap to the capped state."""
        return tuple(
            yi if cap is None or yi <= cap else cap for yi, cap in zip(y, self.caps)
        )


def _state_count(n: int, v: Sequence[int], caps: Sequence[Optional[int]]) -> int:
    k = sum(v)
    count = math.comb(n - 1 + k, k)
    for vi, cap in zip(v, caps):
        if not vi:
            count *= cap + 1
    return count


def _normalize_caps(v: Sequence[int], caps: Optional[Sequence[Optional[int]]]) -> Tuple[Optional[int], ...]:
    if caps is None:
        caps = [None] * len(v)
    if len(caps) != len(v):
        raise InvalidNetwork(f"expected {len(v)} caps, got {len(caps)}")
    normalized = []
    for i, (vi, cap) in enumerate(zip(v, caps)):
        if vi:
            normalized.append(None)
        elif cap is None or int(cap) < 1:
            raise InvalidNetwork(f"non-target station {i + 1} needs a positive cap, got {cap!r}")
        else:
            normalized.append(int(cap))
    return tuple(normalized)


def enumerate_states(
    n: int,
    v: Sequence[int],
    caps: Optional[Sequence[Optional[int]]] = None,
    excluded: Optional[Sequence[Sequence[int]]] = None,
    max_states: Optional[int] = None,
) -> StateIndexer:
    """
    Enumerate transient states in lexicographic order, leaving out the empty
    network and any other `excluded` state.

    Raises:
        TooLarge: the enumeration would exceed `max_states`
    """
    if n < 1:
        raise ValueError(f"overflow level must be positive, got {n}")
    v = tuple(int(vi) for vi in v)
    d = len(v)
    caps = _normalize_caps(v, caps)
    origin = (0,) * d
    skip = frozenset([origin] + [tuple(x) for x in (excluded or [])])
    limit = max_states if max_states is not None else SolverSettings.from_env().max_states

    count = _state_count(n, v, caps)
    if count - 1 > limit:
        raise TooLarge(count - 1, limit)

    def walk(prefix: List[int], i: int, remaining: int) -> Iterator[ChainState]:
        if i == d:
            yield tuple(prefix)
            return
        top = remaining - 1 if v[i] else caps[i]
        for k in range(top + 1):
            prefix.append(k)
            yield from walk(prefix, i + 1, remaining - k if v[i] else remaining)
            prefix.pop()

    states = tuple(x for x in walk([], 0, n) if x not in skip)
    _LOGGER.debug("Enumerated %d transient states for n=%d, v=%s, caps=%s", len(states), n, v, caps)
    return StateIndexer(d=d, n=n, v=v, caps=caps, excluded=skip, states=states)


@dataclass(frozen=True, eq=False)
class LinearSystem:
    """
    (I - K_TT) p = b over the transient states T of `indexer`.

    `b` collects the mass sent to the overflow set (worth `target_value`)
    and to the absorbing states (worth their value in `absorbing`).
    """

    vn: ValidatedNetwork
    target: TargetSpec
    indexer: StateIndexer
    matrix: sp.csr_matrix
    rhs: np.ndarray
    target_value: float
    absorbing: Mapping[ChainState, float]

    @property
    def n(self) -> int:
        return self.indexer.n

    def boundary_value(self, y: ChainState) -> Optional[float]:
        if self.target.value(y) >= self.n:
            return self.target_value
        return self.absorbing.get(y)

    def first_step_value(self, x: Sequence[int], solution: np.ndarray) -> float:
        """sum_y K(x, y) p(y), the value at a state outside the unknowns."""
        terms = []
        for y, p in kernel_row(self.vn, x):
            y = self.indexer.clamp(y)
            value = self.boundary_value(y)
            terms.append(p * (value if value is not None else solution[self.indexer.index(y)]))
        return math.fsum(terms)

    def value_at(self, x: Sequence[int], solution: np.ndarray) -> float:
        x = tuple(x)
        if x in self.indexer:
            return float(solution[self.indexer.index(x)])
        value = self.boundary_value(x) if x not in self.absorbing else None
        if value is not None:
            return value
        return self.first_step_value(x, solution)


def _assemble(
    vn: ValidatedNetwork,
    target: TargetSpec,
    indexer: StateIndexer,
    target_value: float,
    absorbing: Mapping[ChainState, float],
) -> LinearSystem:
    size = len(indexer)
    rows: List[int] = []
    cols: List[int] = []
    data: List[float] = []
    rhs = np.zeros(size)
    for i, x in enumerate(indexer.states):
        rows.append(i)
        cols.append(i)
        data.append(1.0)
        boundary = []
        for y, p in kernel_row(vn, x):
            y = indexer.clamp(y)
            if target.value(y) >= indexer.n:
                boundary.append(p * target_value)
            elif y in absorbing:
                boundary.append(p * absorbing[y])
            else:
                rows.append(i)
                cols.append(indexer.index(y))
                data.append(-p)
        rhs[i] = math.fsum(boundary)
    matrix = sp.coo_matrix((data, (rows, cols)), shape=(size, size)).tocsr()
    _LOGGER.debug("Assembled first-passage system: %d unknowns, %d non-zeros", size, matrix.nnz)
    return LinearSystem(
        vn=vn,
        target=target,
        indexer=indexer,
        matrix=matrix,
        rhs=rhs,
        target_value=target_value,
        absorbing=dict(absorbing),
    )


def first_passage_system(
    vn: ValidatedNetwork,
    n: int,
    v: Sequence[int],
    caps: Optional[Sequence[Optional[int]]] = None,
    settings: Optional[SolverSettings] = None,
) -> LinearSystem:
    """
    The system for p_n^V over the transient states, with the empty network
    absorbing at value 0 and the overflow set at value 1.
    """
    settings = settings or SolverSettings.from_env()
    target = target_params(vn, v)
    indexer = enumerate_states(n, target.v, caps, max_states=settings.max_states)
    return _assemble(vn, target, indexer, 1.0, {(0,) * vn.d: 0.0})


def _gauss_seidel(
    matrix: sp.csr_matrix, rhs: np.ndarray, tol: float, max_sweeps: int
) -> np.ndarray:
    lower = sp.tril(matrix, format="csr")
    upper = sp.triu(matrix, k=1, format="csr")
    scale = float(np.max(np.abs(rhs)))
    x = np.zeros_like(rhs)
    residual = math.inf
    for sweep in range(1, max_sweeps + 1):
        x = spsolve_triangular(lower, rhs - upper @ x, lower=True)
        residual = float(np.max(np.abs(rhs - matrix @ x))) / scale
        if residual <= tol:
            _LOGGER.debug("Gauss-Seidel converged after %d sweeps (residual %.3e)", sweep, residual)
            return x
    raise NoConvergence(residual, max_sweeps)


def solve_system(
    system: LinearSystem,
    tol: float = 1e-12,
    method: str = "auto",
    max_sweeps: Optional[int] = None,
    direct_limit: Optional[int] = None,
) -> np.ndarray:
    """
    Solve `system` and return p over its unknowns, clipped to [0, 1].

    Parameters:
        tol: Relative residual at which Gauss-Seidel stops
        method: "gauss-seidel", "direct", or "auto" (direct dense solve up to
                `direct_limit` unknowns, Gauss-Seidel beyond)

    Raises:
        NoConvergence: Gauss-Seidel ran out of sweeps
    """
    settings = SolverSettings()
    max_sweeps = settings.max_sweeps if max_sweeps is None else max_sweeps
    direct_limit = settings.direct_limit if direct_limit is None else direct_limit
    if method not in ("auto", "direct", "gauss-seidel"):
        raise ValueError(f"unknown solver method {method!r}")

    size = len(system.rhs)
    if size == 0 or not np.any(system.rhs):
        return np.zeros(size)
    if method == "direct" or (method == "auto" and size <= direct_limit):
        solution = np.linalg.solve(system.matrix.toarray(), system.rhs)
    else:
        solution = _gauss_seidel(system.matrix, system.rhs, tol, max_sweeps)
    return np.clip(solution, 0.0, 1.0)


def _initial_caps(n: int, target: TargetSpec, x: Sequence[int]) -> Tuple[Optional[int], ...]:
    return tuple(None if vi else max(n, xi + 1, 8) for vi, xi in zip(target.v, x))


def _solve_at(
    vn: ValidatedNetwork,
    n: int,
    target: TargetSpec,
    x: ChainState,
    caps: Tuple[Optional[int], ...],
    tol: float,
    settings: SolverSettings,
) -> float:
    system = first_passage_system(vn, n, target.v, caps, settings)
    solution = solve_system(system, tol, max_sweeps=settings.max_sweeps, direct_limit=settings.direct_limit)
    return system.value_at(x, solution)


def overflow_probability(
    vn: ValidatedNetwork,
    n: int,
    v: Sequence[int],
    x: Sequence[int],
    tol: float = 1e-12,
    settings: Optional[SolverSettings] = None,
    truncation_tol: float = TRUNCATION_TOLERANCE,
) -> float:
    """
    p_n^V(x): the probability that v^T Q reaches `n` before the network
    empties, starting from `x`. From the empty network the chain always makes
    one move before a return to it counts.

    Raises:
        TruncationNoConverge: doubling the non-target caps never stabilised
    """
    settings = settings or SolverSettings.from_env()
    target = target_params(vn, v)
    x = tuple(int(xi) for xi in x)
    if len(x) != vn.d or min(x) < 0:
        raise InvalidNetwork(f"{x} is not a state of a {vn.d}-station network")
    if target.value(x) >= n:
        return 1.0

    caps = _initial_caps(n, target, x)
    value = _solve_at(vn, n, target, x, caps, tol, settings)
    if all(vi for vi in target.v):
        return value

    change = None
    for doubling in range(1, settings.max_cap_doublings + 1):
        caps = tuple(None if cap is None else 2 * cap for cap in caps)
        try:
            refined = _solve_at(vn, n, target, x, caps, tol, settings)
        except TooLarge:
            raise TruncationNoConverge(doubling - 1, change)
        change = abs(refined - value) / max(abs(refined), 1e-300)
        _LOGGER.debug("Caps %s: p=%.12g (relative change %.3e)", caps, refined, change)
        value = refined
        if change < truncation_tol:
            return value
    raise TruncationNoConverge(settings.max_cap_doublings, change)


def regeneration_check(
    vn: ValidatedNetwork,
    n: int,
    v: Sequence[int],
    x: Sequence[int],
    caps: Optional[Sequence[Optional[int]]] = None,
    settings: Optional[SolverSettings] = None,
) -> Tuple[float, float]:
    """
    Compare p_n^V(x) with the ratio of taboo probabilities of one excursion
    from `x`: (overflow before emptying and before returning to x) over
    (overflow or emptying before returning to x).

    Both sides are computed on the same truncated chain.
    """
    settings = settings or SolverSettings.from_env()
    target = target_params(vn, v)
    x = tuple(int(xi) for xi in x)
    origin = (0,) * vn.d
    if x == origin or target.value(x) >= n:
        raise ValueError(f"regeneration check needs 0 < v^T x < n and x != 0, got {x}")
    caps = _normalize_caps(target.v, caps) if caps is not None else _initial_caps(n, target, x)
    limit = min(settings.max_states, REGENERATION_MAX_STATES)

    def solve(absorbing: Mapping[ChainState, float]) -> float:
        indexer = enumerate_states(n, target.v, caps, excluded=list(absorbing), max_states=limit)
        system = _assemble(vn, target, indexer, 1.0, absorbing)
        solution = solve_system(system, settings.tolerance, max_sweeps=settings.max_sweeps)
        return system.first_step_value(x, solution) if x in absorbing else system.value_at(x, solution)

    lhs = solve({origin: 0.0})
    escape_to_overflow = solve({origin: 0.0, x: 0.0})
    escape = solve({origin: 1.0, x: 0.0})
    return lhs, escape_to_overflow / escape
