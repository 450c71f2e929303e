import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np


def resolve_threads(threads=None) -> int:
    if threads is None:
        threads = os.environ.get("AGEBIF_THREADS", 1)
    threads = int(threads)
    if threads < 1:
        raise ValueError("thread count must be >= 1")
    return threads


def map_batches(fn, batch: np.ndarray, threads: int = 1) -> np.ndarray:
    """Apply ``fn`` to contiguous chunks of ``batch`` (axis 0) and stack results in order.

    ``fn`` must map a (k, ...) chunk to a (k, ...) result with rows independent
    of each other, so the output does not depend on the chunking.
    """
    threads = max(1, min(int(threads), len(batch)))
    if threads == 1:
        return fn(batch)
    chunks = np.array_split(batch, threads)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(fn, chunks))
    return np.concatenate(parts, axis=0)
