"""
Multilevel splitting for overflow probabilities.

Levels are the sets {x : h(x) >= gamma_V n - j log r} of the potential
h(x) = sum_i -log(rho_i) x_i, which makes the expected number of particles
per level roughly constant. Level 0 is the overflow set {v^T x >= n} itself.

A run starts with one particle; whenever a particle enters a lower level it
is replaced by `r` copies at the entry state, and it dies on returning to
the empty network. The estimate is the number of particles that overflow
divided by r^L, where L is the level of the start state.
"""
import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, replace
from functools import partial
from typing import List, Sequence, Tuple

import numpy as np

from .chain import compile_chain
from .errors import AlreadyInTarget, InvalidNetwork, RunawayRun
from .network import ChainState, TargetSpec, ValidatedNetwork
from .rng import replication_generator, uniforms
from .stats import Replication, ReplicationStats, run_replications, summarize_replications

_LOGGER = logging.getLogger(__name__)

WORK_CAP = 10 ** 9

# Tolerance for ceilings of level values that are integers up to rounding.
_CEIL_NUDGE = 1e-12
# The running potential is updated incrementally; it is recomputed exactly
# whenever it comes this close to the next threshold.
_POTENTIAL_SLACK = 1e-6


def guarded_ceil(value: float, nudge: float = _CEIL_NUDGE) -> int:
    """Ceiling that treats values within `nudge` above an integer as that integer."""
    return math.ceil(value - nudge * max(1.0, abs(value)))


@dataclass(frozen=True)
class LevelScheme:
    """
    Level placement for overflow level `n`, splitting factor `r` and the
    affine subsolution gamma_V - w^T y.

    `delta` is the level spacing; it cancels out of the level index and is
    kept only for reporting.
    """

    n: int
    r: int
    target: TargetSpec
    potential_weights: Tuple[float, ...]
    L: int
    delta: float = 1.0

    @property
    def C(self) -> float:
        """Level density gamma_V / log r."""
        return self.target.gamma_V / math.log(self.r)

    @property
    def alpha(self) -> Tuple[float, ...]:
        return tuple(w / self.target.gamma_V for w in self.potential_weights)

    def threshold(self, j: int) -> float:
        """t_j = gamma_V n - j log r."""
        return self.target.gamma_V * self.n - j * math.log(self.r)

    def potential(self, x: Sequence[int]) -> float:
        return math.fsum(w * xi for w, xi in zip(self.potential_weights, x))

    def level_index(self, x: Sequence[int]) -> int:
        if self.target.value(x) >= self.n:
            return 0
        value = (self.target.gamma_V * self.n - self.potential(x)) / math.log(self.r)
        return max(0, guarded_ceil(value))

    def particle_level(self, x: Sequence[int]) -> int:
        """
        The level a particle at `x` belongs to while simulating: 0 exactly on
        the overflow set, otherwise `level_index` but at least 1.
        """
        if self.target.value(x) >= self.n:
            return 0
        return max(1, self.level_index(x))


@dataclass(frozen=True)
class Particle:
    state: ChainState
    level: int


@dataclass(frozen=True)
class SplitOutcome:
    """
    Result of one splitting run.

    Parameters:
        terminal_count: Particles that reached the overflow set (N_n)
        estimate: terminal_count / r^levels
        work: Number of simulated transitions
        per_level_survivors: Entry `m` counts particles that entered level `m`
        max_live_particles: Largest number of particles alive at once
        levels: Level of the start state (L)
        r: Splitting factor
    """

    terminal_count: int
    estimate: float
    work: int
    per_level_survivors: Tuple[int, ...]
    max_live_particles: int
    levels: int
    r: int


def build_levels(
    vn: ValidatedNetwork, target: TargetSpec, n: int, r: int, x0: Sequence[int], delta: float = 1.0
) -> LevelScheme:
    """
    Raises:
        AlreadyInTarget: the start state already overflows
    """
    if not isinstance(r, (int, np.integer)) or r < 2:
        raise ValueError(f"splitting factor must be an integer >= 2, got {r!r}")
    if n < 1:
        raise ValueError(f"overflow level must be positive, got {n}")
    if not 0.0 < delta <= 1.0:
        raise ValueError(f"level spacing must lie in (0, 1], got {delta}")
    x0 = tuple(int(xi) for xi in x0)
    if len(x0) != vn.d or min(x0) < 0:
        raise InvalidNetwork(f"start state {x0} is not a state of a {vn.d}-station network")
    if target.value(x0) >= n:
        raise AlreadyInTarget(f"start state {x0} already has v^T x >= {n}")

    scheme = LevelScheme(
        n=int(n), r=int(r), target=target, potential_weights=vn.potential_weights, L=0, delta=delta
    )
    scheme = replace(scheme, L=scheme.particle_level(x0))
    _LOGGER.debug("Level scheme n=%d r=%d: C=%.6f, L=%d", n, r, scheme.C, scheme.L)
    return scheme


def level_index(scheme: LevelScheme, x: Sequence[int]) -> int:
    """max(0, ceil((gamma_V n - h(x)) / log r)), and 0 on the overflow set."""
    return scheme.level_index(x)


def run_splitting(
    vn: ValidatedNetwork,
    scheme: LevelScheme,
    x0: Sequence[int],
    rng: np.random.Generator,
    work_cap: int = WORK_CAP,
) -> SplitOutcome:
    """
    One depth-first run of the splitting algorithm from `x0`.

    A particle at level j evolves until it returns to the empty network
    (at a time k >= 1, so a run from the origin always makes one move) or
    enters a lower level. Entering level k < j replaces it by r^(j-k)
    particles at the entry state; entering level 0 adds r^j to the terminal
    count.

    Raises:
        RunawayRun: more than `work_cap` transitions were simulated
    """
    x0 = tuple(x0)
    L = scheme.L
    r = scheme.r
    if scheme.particle_level(x0) != L:
        raise ValueError(f"level scheme was built for a start state at level {L}, not {x0}")
    if L == 0:
        return SplitOutcome(
            terminal_count=1,
            estimate=1.0,
            work=0,
            per_level_survivors=(1,),
            max_live_particles=1,
            levels=0,
            r=r,
        )

    chain = compile_chain(vn)
    cumulative = chain.cumulative
    last_event = len(cumulative) - 1
    sources = chain.sources
    destinations = chain.destinations
    weights = vn.potential_weights
    v = scheme.target.v
    n = scheme.n
    # Per-event changes of population, target population and potential.
    d_total = [(dst >= 0) - (src >= 0) for src, dst in zip(sources, destinations)]
    d_value = [
        (v[dst] if dst >= 0 else 0) - (v[src] if src >= 0 else 0)
        for src, dst in zip(sources, destinations)
    ]
    d_potential = [
        (weights[dst] if dst >= 0 else 0.0) - (weights[src] if src >= 0 else 0.0)
        for src, dst in zip(sources, destinations)
    ]
    thresholds = [scheme.threshold(j) for j in range(L + 1)]

    survivors = [0] * (L + 1)
    survivors[L] = 1
    terminal = 0
    work = 0
    max_live = 1
    draws = uniforms(rng)
    stack: List[Particle] = [Particle(x0, L)]

    while stack:
        particle = stack.pop()
        level = particle.level
        x = list(particle.state)
        total = sum(x)
        value = scheme.target.value(x)
        h = scheme.potential(x)
        next_threshold = thresholds[level - 1] - _POTENTIAL_SLACK if level >= 2 else math.inf

        for u in draws:
            if work >= work_cap:
                raise RunawayRun(work_cap)
            work += 1
            event = bisect_right(cumulative, u)
            if event > last_event:
                event = last_event
            src = sources[event]
            if src >= 0:
                if x[src] == 0:
                    if total == 0:
                        break
                    continue
                x[src] -= 1
            dst = destinations[event]
            if dst >= 0:
                x[dst] += 1
            total += d_total[event]
            if total == 0:
                break
            value += d_value[event]
            h += d_potential[event]

            if value >= n:
                new_level = 0
            elif h >= next_threshold:
                h = scheme.potential(x)
                new_level = scheme.particle_level(x)
                if new_level >= level:
                    continue
            else:
                continue

            for m in range(new_level, level):
                survivors[m] += r ** (level - m)
            if new_level == 0:
                terminal += r ** level
            else:
                child = Particle(tuple(x), new_level)
                stack.extend([child] * r ** (level - new_level))
                max_live = max(max_live, len(stack))
            break

    limit = r ** L
    assert terminal <= limit, f"{terminal} terminal particles exceed r^L = {limit}"
    return SplitOutcome(
        terminal_count=terminal,
        estimate=terminal / limit,
        work=work,
        per_level_survivors=tuple(survivors),
        max_live_particles=max_live,
        levels=L,
        r=r,
    )


def _splitting_replication(
    vn: ValidatedNetwork, scheme: LevelScheme, x0: ChainState, master_seed: int, index: int
) -> Replication:
    outcome = run_splitting(vn, scheme, x0, replication_generator(master_seed, index))
    return outcome.estimate, outcome.work, outcome.terminal_count


def estimate(
    vn: ValidatedNetwork,
    scheme: LevelScheme,
    x0: Sequence[int],
    m: int,
    master_seed: int,
    threads: int = 1,
) -> ReplicationStats:
    """
    Average `m` independent splitting runs.

    Replication `i` draws from the stream derived from `(master_seed, i)`,
    so the result is identical for every value of `threads`.

    Raises:
        DegenerateEstimate: every run returned zero
    """
    if m < 2:
        raise ValueError(f"at least two replications are needed, got {m}")
    task = partial(_splitting_replication, vn, scheme, tuple(x0))
    results = run_replications(task, m, master_seed, threads)
    stats = summarize_replications(results)
    _LOGGER.info(
        "Splitting n=%d r=%d m=%d: mean=%.6g cv2=%.4g mean_work=%.1f",
        scheme.n,
        scheme.r,
        m,
        stats.mean,
        stats.cv2,
        stats.mean_work,
    )
    return stats
