"""
Baselines and complexity studies.

`naive_mc` is crude Monte Carlo of the overflow event. `scaling_study`
runs the splitting estimator over a grid of overflow levels and fits
log-log slopes of the particle count, the work per run and the (work
normalised) squared coefficient of variation, so they can be compared with
the polynomial growth rates the estimator is known to have.
"""
import logging
from bisect import bisect_right
from dataclasses import dataclass
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .chain import compile_chain
from .errors import NonPositiveValue, RunawayRun, TooLarge, TruncationNoConverge
from .exact import overflow_probability
from .network import ChainState, TargetSpec, ValidatedNetwork, target_params
from .rng import replication_generator, uniforms
from .settings import SolverSettings
from .splitting import WORK_CAP, build_levels, estimate, guarded_ceil
from .stats import Replication, ReplicationStats, run_replications, summarize_replications

_LOGGER = logging.getLogger(__name__)

#: Half-width of the acceptance window around a growth rate known up to constants.
THETA_WINDOW = 0.5
#: Slack above a growth rate known only as an upper bound.
UPPER_SLACK = 0.7
#: Slack above the total-complexity exponent, which compounds two upper bounds.
TOTAL_SLACK = 1.0


def _naive_replication(
    vn: ValidatedNetwork, target: TargetSpec, n: int, x0: ChainState, master_seed: int, index: int
) -> Replication:
    chain = compile_chain(vn)
    cumulative = chain.cumulative
    last_event = len(cumulative) - 1
    sources = chain.sources
    destinations = chain.destinations
    v = target.v
    x = list(x0)
    total = sum(x)
    value = target.value(x)
    work = 0
    for u in uniforms(replication_generator(master_seed, index)):
        if work >= WORK_CAP:
            raise RunawayRun(WORK_CAP)
        work += 1
        event = bisect_right(cumulative, u)
        if event > last_event:
            event = last_event
        src = sources[event]
        if src >= 0:
            if x[src] == 0:
                if total == 0:
                    return 0.0, work, 0
                continue
            x[src] -= 1
            total -= 1
            value -= v[src]
        dst = destinations[event]
        if dst >= 0:
            x[dst] += 1
            total += 1
            value += v[dst]
        if value >= n:
            return 1.0, work, 1
        if total == 0:
            return 0.0, work, 0
    raise AssertionError("uniform stream ended")


def naive_mc(
    vn: ValidatedNetwork,
    n: int,
    v: Sequence[int],
    x0: Sequence[int],
    m: int,
    master_seed: int,
    threads: int = 1,
) -> ReplicationStats:
    """
    Crude Monte Carlo: `m` Bernoulli trials of the chain from `x0` until it
    overflows or empties (a run from the empty network always moves once).

    Raises:
        DegenerateEstimate: no trial overflowed
    """
    if m < 2:
        raise ValueError(f"at least two replications are needed, got {m}")
    target = target_params(vn, v)
    x0 = tuple(int(xi) for xi in x0)
    if target.value(x0) >= n:
        return ReplicationStats(
            m=m,
            mean=1.0,
            variance=0.0,
            cv2=0.0,
            std_error=0.0,
            mean_work=0.0,
            work_normalized_cv2=0.0,
            mean_terminal_count=1.0,
        )
    task = partial(_naive_replication, vn, target, n, x0)
    stats = summarize_replications(run_replications(task, m, master_seed, threads))
    _LOGGER.info("Naive Monte Carlo n=%d m=%d: mean=%.6g cv2=%.4g", n, m, stats.mean, stats.cv2)
    return stats


def bernoulli_cv2(p: float) -> float:
    """Squared coefficient of variation of a Bernoulli(p) trial."""
    if not 0.0 < p <= 1.0:
        raise NonPositiveValue(f"Bernoulli cv^2 needs 0 < p <= 1, got {p}")
    return (1.0 - p) / p


def fit_exponent(points: Sequence[Tuple[float, float]]) -> Tuple[float, float, float]:
    """
    Least-squares fit of log(value) = slope * log(n) + intercept.

    Returns:
        (slope, intercept, r_squared)

    Raises:
        NonPositiveValue: some n or value is not positive
    """
    if len(points) < 2:
        raise ValueError(f"need at least two points to fit an exponent, got {len(points)}")
    for n, value in points:
        if n <= 0 or value <= 0:
            raise NonPositiveValue(f"cannot take logarithms of point ({n}, {value})")
    log_n = np.log([float(n) for n, _ in points])
    log_value = np.log([float(value) for _, value in points])
    slope, intercept = np.polyfit(log_n, log_value, 1)
    fitted = slope * log_n + intercept
    ss_res = float(np.sum((log_value - fitted) ** 2))
    ss_tot = float(np.sum((log_value - np.mean(log_value)) ** 2))
    r_squared = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r_squared


def replication_plan(cv2: float, epsilon: float, delta: float) -> int:
    """
    Replications that keep the relative error below `epsilon` with
    probability at least 1 - `delta`, by Chebyshev's inequality.
    """
    if cv2 <= 0:
        raise ValueError(f"cv^2 must be positive, got {cv2}")
    if not 0 < epsilon <= 1 or not 0 < delta <= 1:
        raise ValueError(f"epsilon and delta must lie in (0, 1], got {epsilon}, {delta}")
    return max(1, guarded_ceil(cv2 / (epsilon ** 2 * delta), nudge=1e-9))


def relative_error_bound(stats: ReplicationStats, epsilon: float) -> float:
    """Chebyshev bound on P(|mean - p| / p > epsilon) for the averaged estimate."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    return min(1.0, stats.cv2 / (stats.m * epsilon ** 2))


def theoretical_exponents(vn: ValidatedNetwork, target: TargetSpec) -> Dict[str, int]:
    """
    Polynomial growth rates in n of the splitting estimator's costs.

    `work_level_sets` is the work exponent when every station is treated as
    a bottleneck: particles that fail from a level near the target still
    need order n steps to drain, and on the affine level sets the number of
    such particles grows like n^(d - beta_V).
    """
    return {
        "terminal_count": target.beta_V - 1,
        "work": target.beta_V + 1,
        "work_level_sets": vn.d + 1,
        "cv2": vn.beta,
        "work_normalized_cv2": target.beta_V + vn.beta + 1,
        "direct_solver": 3 * vn.d - 2,
    }


@dataclass(frozen=True)
class ScalingRow:
    n: int
    levels: int
    estimate: float
    std_error: float
    exact: Optional[float]
    cv2: float
    mean_terminal_count: float
    mean_work: float
    work_normalized_cv2: float
    naive_cv2: Optional[float]


@dataclass(frozen=True)
class ExponentFit:
    """
    A fitted log-log slope together with its acceptance window.

    `low` is None for growth rates known only as upper bounds.
    """

    quantity: str
    slope: float
    intercept: float
    r_squared: float
    theoretical: int
    low: Optional[float]
    high: float

    @property
    def passed(self) -> bool:
        return (self.low is None or self.slope >= self.low) and self.slope <= self.high


@dataclass(frozen=True)
class ScalingReport:
    rows: Tuple[ScalingRow, ...]
    fits: Tuple[ExponentFit, ...]
    r: int
    m: int
    master_seed: int
    beta: int
    beta_V: int

    def fit(self, quantity: str) -> ExponentFit:
        for fit in self.fits:
            if fit.quantity == quantity:
                return fit
        raise KeyError(quantity)


def _fit(rows: Sequence[ScalingRow], quantity: str, theoretical: int, low, high) -> ExponentFit:
    slope, intercept, r_squared = fit_exponent([(row.n, getattr(row, quantity)) for row in rows])
    return ExponentFit(quantity, slope, intercept, r_squared, theoretical, low, high)


def scaling_study(
    vn: ValidatedNetwork,
    target: TargetSpec,
    x0: Sequence[int],
    n_list: Sequence[int],
    r: int,
    m: int,
    master_seed: int,
    threads: int = 1,
    settings: Optional[SolverSettings] = None,
) -> ScalingReport:
    """
    Run the splitting estimator for every n in `n_list` and fit the growth
    exponents of its costs. Exact values are added wherever the linear
    system fits within the state limit.
    """
    n_list = [int(n) for n in n_list]
    if len(n_list) < 4:
        raise ValueError(f"a scaling study needs at least 4 overflow levels, got {len(n_list)}")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ValueError(f"overflow levels must be strictly increasing: {n_list}")
    settings = settings or SolverSettings.from_env()
    x0 = tuple(int(xi) for xi in x0)

    rows: List[ScalingRow] = []
    for n in n_list:
        scheme = build_levels(vn, target, n, r, x0)
        stats = estimate(vn, scheme, x0, m, master_seed, threads)
        try:
            exact = overflow_probability(vn, n, target.v, x0, settings=settings)
        except (TooLarge, TruncationNoConverge) as e:
            _LOGGER.info("No exact value for n=%d: %s", n, e)
            exact = None
        rows.append(
            ScalingRow(
                n=n,
                levels=scheme.L,
                estimate=stats.mean,
                std_error=stats.std_error,
                exact=exact,
                cv2=stats.cv2,
                mean_terminal_count=stats.mean_terminal_count,
                mean_work=stats.mean_work,
                work_normalized_cv2=stats.work_normalized_cv2,
                naive_cv2=bernoulli_cv2(exact) if exact else None,
            )
        )
        _LOGGER.info("Scaling study n=%d done: estimate=%.6g, exact=%s", n, stats.mean, exact)

    exponents = theoretical_exponents(vn, target)
    work_exponent = max(exponents["work"], exponents["work_level_sets"])
    fits = (
        _fit(
            rows,
            "mean_terminal_count",
            exponents["terminal_count"],
            exponents["terminal_count"] - THETA_WINDOW,
            exponents["terminal_count"] + THETA_WINDOW,
        ),
        _fit(rows, "mean_work", work_exponent, None, work_exponent + UPPER_SLACK),
        _fit(rows, "cv2", exponents["cv2"], None, exponents["cv2"] + UPPER_SLACK),
        _fit(
            rows,
            "work_normalized_cv2",
            exponents["work_normalized_cv2"],
            None,
            exponents["work_normalized_cv2"] + TOTAL_SLACK,
        ),
    )
    return ScalingReport(
        rows=tuple(rows),
        fits=fits,
        r=r,
        m=m,
        master_seed=master_seed,
        beta=vn.beta,
        beta_V=target.beta_V,
    )
