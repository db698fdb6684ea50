"""Deterministic random substreams keyed by position, not by scheduling order.

Every unit of parallel work (a grid candidate, a bootstrap replicate, a
chunk of combinations) derives its own stream from the master seed and a
tuple of integers naming the unit, so results do not depend on how many
workers run them or in which order.
"""
from __future__ import annotations

import os

import numpy as np

THREADS_ENV = "CYCLEWARP_THREADS"


def as_seed_sequence(seed) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        return np.random.SeedSequence(int(seed.integers(0, 2**63)))
    return np.random.SeedSequence(seed)


def substream(seed, *key) -> np.random.SeedSequence:
    """Child sequence of ``seed`` addressed by the integer path ``key``."""
    ss = as_seed_sequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(int(k) for k in key))


def generator(seed, *key) -> np.random.Generator:
    return np.random.default_rng(substream(seed, *key))


def kernel_state(seed, *key) -> np.ndarray:
    """256-bit xoshiro state for the compiled kernels."""
    state = substream(seed, *key).generate_state(4, np.uint64)
    if not state.any():
        state[0] = 1
    return state


def derive_int(seed, *key) -> int:
    return int(substream(seed, *key).generate_state(1, np.uint64)[0] >> np.uint64(1))


def resolve_threads(threads=None) -> int:
    if threads is None:
        env = os.environ.get(THREADS_ENV)
        threads = int(env) if env else 1
    return max(1, int(threads))


def parallel_map(fn, items, threads=1):
    """``list(map(fn, items))`` on a thread pool; order of results is preserved.

    The compiled kernels release the GIL, so threads give real parallelism.
    """
    items = list(items)
    threads = resolve_threads(threads)
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))
