"""Counter-based random streams and trial-level parallelism.

All randomness goes through Philox generators keyed by (seed, *keys) so that
a trial's draws depend only on its own key, never on scheduling order.
"""

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, List, Sequence, TypeVar

import numpy as np

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    """Return a Philox generator for the stream ``keys`` under ``seed``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(seq))


def parallel_map(fn: Callable[[T], R], items: Sequence[T], jobs: int = 1) -> List[R]:
    """``[fn(x) for x in items]``, over ``jobs`` worker processes when jobs > 1.

    Results keep the order of ``items``; ``fn`` must be a module-level function.
    """
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("mapping %d items over %d processes", len(items), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        chunk = max(1, len(items) // (4 * jobs))
        return list(pool.map(fn, items, chunksize=chunk))
