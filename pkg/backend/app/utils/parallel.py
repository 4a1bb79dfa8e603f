"""
Deterministic job execution helpers.
"""

import logging
from typing import Any, Callable, List, Sequence

import numpy as np
from joblib import Parallel, delayed
from threadpoolctl import threadpool_limits

logger = logging.getLogger(__name__)


def derive_seed(master: int, *keys: int) -> int:
    """Derive an independent 32-bit seed from a master seed and integer keys."""
    sequence = np.random.SeedSequence([int(master), *[int(k) for k in keys]])
    return int(sequence.generate_state(1)[0])


def _single_threaded(func: Callable[..., Any], *args: Any) -> Any:
    # One BLAS thread per job keeps floating point reductions identical across --jobs values.
    with threadpool_limits(limits=1):
        return func(*args)


def run_jobs(func: Callable[..., Any], tasks: Sequence[tuple], n_jobs: int = 1) -> List[Any]:
    """
    Run func(*task) for every task and return results in task order.

    Args:
        func: Picklable callable
        tasks: Argument tuples, one per job
        n_jobs: Worker processes; 1 runs in-process

    Returns:
        List of results in the order of tasks
    """
    if n_jobs <= 1 or len(tasks) <= 1:
        return [_single_threaded(func, *task) for task in tasks]

    logger.debug(f"Dispatching {len(tasks)} jobs on {n_jobs} workers")
    return Parallel(n_jobs=n_jobs, backend="loky")(
        delayed(_single_threaded)(func, *task) for task in tasks
    )
