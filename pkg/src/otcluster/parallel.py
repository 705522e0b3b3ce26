"""Order-deterministic data-parallel map over work items.

The fit loops farm their per-group and per-cluster solves through
par_map.  Tasks must be pure functions of picklable inputs; results come
back in input order no matter which worker finishes first, so a parallel
run is bit-identical to a serial one.
"""

from __future__ import annotations

import os
import time


class ParallelError(RuntimeError):
    pass


def par_map(task, items, workers=None):
    """Apply `task` to every item, returning results in input order.

    workers=1 (or a single item) degrades to a plain loop.  A failing
    task aborts the batch; the error names the failing index.
    """
    items = list(items)
    if workers is None:
        workers = os.cpu_count() or 1
    if workers <= 1 or len(items) <= 1:
        return [task(it) for it in items]
    from concurrent.futures import ProcessPoolExecutor
    results = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(task, it) for it in items]
        for idx, fut in enumerate(futures):
            try:
                results.append(fut.result())
            except Exception as exc:
                raise ParallelError(
                    f"parallel task failed at index {idx}: {exc}") from exc
    return results


def timed_fit(dataset, config, workers=1):
    """Run the configured fit while recording per-iteration wall-clock.

    Returns (state, seconds) where seconds has one entry per outer
    iteration.  The state is identical to an untimed run.
    """
    from .multilevel import fit

    seconds = []
    t_last = [time.perf_counter()]

    def tick():
        now = time.perf_counter()
        seconds.append(now - t_last[0])
        t_last[0] = now

    state = fit(dataset, config, workers=workers, on_iteration=tick)
    return state, seconds
