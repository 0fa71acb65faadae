from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor

_default_threads = 1


def set_default_threads(n: int | None) -> None:
    global _default_threads
    _default_threads = max(1, int(n or os.cpu_count() or 1))


def map_trials(fn, n_trials: int, threads: int | None = None) -> list:
    """Evaluate ``fn(i)`` for ``i in range(n_trials)``, results in index order.

    Trials must draw from their own substreams so the outcome does not depend
    on scheduling. numpy releases the GIL inside BLAS and bulk sampling, so
    threads give real speedups on multi-core machines.
    """
    threads = _default_threads if threads is None else max(1, int(threads))
    if threads == 1 or n_trials <= 1:
        return [fn(i) for i in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_trials)))
