"""Counter-based random streams and a chunked trial runner.

Every stream is a Philox generator keyed by ``(seed, purpose tag, index)``.
Trials are processed in fixed-size chunks, one stream per chunk, so the
numbers a trial sees never depend on how many workers run the chunks.
"""

from __future__ import annotations

import zlib
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

CHUNK_SIZE = 1 << 15

T = TypeVar("T")


def tag_code(tag: str) -> int:
    """Stable 32-bit code for a purpose tag (``hash()`` is salted per process)."""
    return zlib.crc32(tag.encode("utf-8"))


def stream(seed: int, tag: str, index: int = 0) -> np.random.Generator:
    """Independent generator for ``(seed, tag, index)``."""
    if seed < 0:
        raise ValueError(f"seed must be nonnegative, got {seed}")
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, tag_code(tag), int(index)])
    return np.random.Generator(np.random.Philox(ss))


def chunk_sizes(trials: int, chunk_size: int = CHUNK_SIZE) -> list[int]:
    if trials < 0:
        raise ValueError("trials must be nonnegative")
    full, rest = divmod(trials, chunk_size)
    return [chunk_size] * full + ([rest] if rest else [])


def map_chunks(
    fn: Callable[[np.random.Generator, int], T],
    trials: int,
    seed: int,
    tag: str,
    workers: int = 1,
    chunk_size: int = CHUNK_SIZE,
) -> list[T]:
    """Run ``fn(rng, size)`` over all chunks and return results in chunk order.

    ``workers`` only changes scheduling; the result list is identical for any
    worker count.
    """
    sizes = chunk_sizes(trials, chunk_size)
    jobs = [(i, s) for i, s in enumerate(sizes)]

    def run(job: tuple[int, int]) -> T:
        i, s = job
        return fn(stream(seed, tag, i), s)

    if workers <= 1 or len(jobs) <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def reduce_sums(parts: Sequence[dict[str, np.ndarray]]) -> dict[str, np.ndarray]:
    """Deterministic left-to-right sum of per-chunk accumulators."""
    if not parts:
        return {}
    out = {k: np.array(v, dtype=float, copy=True) for k, v in parts[0].items()}
    for p in parts[1:]:
        for k, v in p.items():
            out[k] = out[k] + v
    return out
