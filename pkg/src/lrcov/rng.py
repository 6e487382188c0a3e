"""Reproducible random substreams and an order-preserving parallel map.

Every stochastic quantity in the package is drawn from a generator keyed by a
tuple of non-negative integers, e.g. ``(seed, replicate)``. Keys are fed to
:class:`numpy.random.SeedSequence` as ``entropy=seed, spawn_key=rest``, which
is the same derivation ``SeedSequence.spawn`` uses, so substreams are
statistically independent and do not depend on the order in which they are
created. Bit generator: PCG64; normals: numpy's ziggurat sampler.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Sequence

import numpy as np

THREADS_ENV = "LRCOV_THREADS"


def substream(seed: int, *keys: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.PCG64(seq))


def normal_draws(seed: int, key: Sequence[int], B: int, shape: tuple) -> np.ndarray:
    """Stack of ``B`` standard normal arrays, replicate ``r`` from substream (seed, *key, r)."""
    out = np.empty((B,) + tuple(shape))
    for r in range(B):
        out[r] = substream(seed, *key, r).standard_normal(shape)
    return out


def resolve_workers(workers: int | None = None) -> int:
    if workers is None:
        workers = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(workers))


def parallel_map(func: Callable, items: Iterable, workers: int | None = None) -> list:
    """``list(map(func, items))``, optionally spread over processes.

    Output order matches input order, so results never depend on ``workers``.
    """
    items = list(items)
    workers = resolve_workers(workers)
    if workers == 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ProcessPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(func, items))
