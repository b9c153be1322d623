"""
Replication bookkeeping shared by the splitting and naive estimators.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar

import numpy as np

from .errors import DegenerateEstimate

_LOGGER = logging.getLogger(__name__)

T = TypeVar("T")

#: Result of one replication: (estimate, work, terminal particle count).
Replication = Tuple[float, int, int]

CHUNKS_PER_WORKER = 4


@dataclass(frozen=True)
class ReplicationStats:
    """
    Summary of `m` independent replications of an unbiased estimator.

    Parameters:
        m: Number of replications
        mean: Sample mean of the per-run estimates
        variance: Unbiased sample variance of the per-run estimates
        cv2: variance / mean^2
        std_error: sqrt(variance / m)
        mean_work: Mean number of simulated transitions per run
        work_normalized_cv2: cv2 * mean_work
        mean_terminal_count: Mean number of particles reaching the target per run
    """

    m: int
    mean: float
    variance: float
    cv2: float
    std_error: float
    mean_work: float
    work_normalized_cv2: float
    mean_terminal_count: float


def summarize(
    estimates: Sequence[float],
    works: Sequence[int],
    terminal_counts: Optional[Sequence[int]] = None,
) -> ReplicationStats:
    """
    Raises:
        DegenerateEstimate: every estimate is zero
    """
    values = np.asarray(estimates, dtype=float)
    m = len(values)
    if m < 2:
        raise ValueError(f"at least two replications are needed, got {m}")
    if not np.any(values):
        raise DegenerateEstimate(f"all {m} replications returned zero; cv^2 is undefined")
    mean = float(np.mean(values))
    variance = float(np.var(values, ddof=1))
    cv2 = variance / mean ** 2
    mean_work = float(np.mean(np.asarray(works, dtype=float)))
    counts = values if terminal_counts is None else np.asarray(terminal_counts, dtype=float)
    return ReplicationStats(
        m=m,
        mean=mean,
        variance=variance,
        cv2=cv2,
        std_error=float(np.sqrt(variance / m)),
        mean_work=mean_work,
        work_normalized_cv2=cv2 * mean_work,
        mean_terminal_count=float(np.mean(counts)),
    )


def summarize_replications(results: Sequence[Replication]) -> ReplicationStats:
    estimates, works, counts = zip(*results)
    return summarize(estimates, works, counts)


def _run_chunk(task: Callable[[int, int], T], master_seed: int, indices: range) -> List[T]:
    return [task(master_seed, index) for index in indices]


def _chunks(m: int, parts: int) -> List[range]:
    size = -(-m // parts)
    return [range(start, min(start + size, m)) for start in range(0, m, size)]


def run_replications(
    task: Callable[[int, int], T], m: int, master_seed: int, threads: int = 1
) -> List[T]:
    """
    Run `task(master_seed, index)` for index = 0..m-1 and return the results
    in index order.

    With `threads > 1` contiguous index chunks are farmed out to a process
    pool. Every replication derives its randomness from its own index, so
    the returned list does not depend on `threads`.
    """
    if threads < 1:
        raise ValueError(f"threads must be at least 1, got {threads}")
    if threads == 1 or m < 2 * threads:
        return _run_chunk(task, master_seed, range(m))

    chunks = _chunks(m, threads * CHUNKS_PER_WORKER)
    _LOGGER.debug("Running %d replications in %d chunks on %d workers", m, len(chunks), threads)
    with ProcessPoolExecutor(max_workers=threads) as executor:
        parts = executor.map(partial(_run_chunk, task, master_seed), chunks)
        return [result for part in parts for result in part]
