"""Order-preserving process-pool map used by the Monte Carlo drivers."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor


def split_range(total: int, parts: int) -> list[tuple[int, int]]:
    parts = max(1, min(parts, total)) if total else 1
    bounds = [total * i // parts for i in range(parts + 1)]
    return [(a, b) for a, b in zip(bounds[:-1], bounds[1:])]


def ordered_map(fn, tasks: list[tuple], workers: int = 1) -> list:
    """``[fn(*t) for t in tasks]``, optionally spread over worker processes."""
    if workers <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, *zip(*tasks)))
