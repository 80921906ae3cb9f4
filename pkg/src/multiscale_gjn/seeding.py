"""Deterministic random streams and the replication runner.

Every replication draws from its own counter-based Philox generator keyed by
``(master_seed, purpose, replication, stream)``. Results therefore do not depend
on how replications are grouped into chunks or spread over worker processes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor

import numpy as np

# purpose tags keep unrelated experiments on disjoint streams
PURPOSE = {"gjn": 1, "srbm": 2, "bm": 3, "oracle": 4, "misc": 5}


def stream(seed, *key):
    """Philox generator for ``seed`` and an integer key path."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def streams(seed, n, *key):
    """``n`` independent generators hanging below ``key``."""
    return [stream(seed, *key, i) for i in range(n)]


def _chunks(n, workers, min_chunk=1):
    size = max(min_chunk, -(-n // max(1, 4 * workers)))
    return [range(a, min(n, a + size)) for a in range(0, n, size)]


def run_replications(fn, n, workers=1):
    """Evaluate ``fn(indices)`` over ``range(n)`` and concatenate in index order.

    ``fn`` must be picklable (a module-level function or a ``functools.partial``
    of one) and return an array whose first axis runs over the indices given.
    """
    if workers <= 1 or n <= 1:
        return fn(range(n))
    parts = _chunks(n, workers)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(fn, parts))
    return np.concatenate(results, axis=0)
