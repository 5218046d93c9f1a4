"""Reproducible standard-normal sampling.

Samples are produced in fixed chunks of ``CHUNK`` values. Chunk ``c`` of a
stream with seed ``s`` comes from a Philox-4x64 generator keyed by
``(s mod 2**64, c)`` with counter 0. Within a chunk, consecutive pairs of
53-bit uniforms ``(u1, u2)`` are mapped by Box-Muller to
``r cos(t), r sin(t)`` with ``r = sqrt(-2 log(1 - u1))`` and ``t = 2 pi u2``.
The stream is therefore the same whether chunks are drawn sequentially
or in parallel.
"""

from __future__ import annotations

import numpy as np

CHUNK = 1 << 18
_MASK = (1 << 64) - 1


def _chunk(seed: int, index: int, size: int) -> np.ndarray:
    gen = np.random.Generator(np.random.Philox(key=np.array([seed & _MASK, index], dtype=np.uint64)))
    pairs = (size + 1) // 2
    u = gen.random(2 * pairs)
    r = np.sqrt(-2.0 * np.log1p(-u[0::2]))
    t = (2.0 * np.pi) * u[1::2]
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(t)
    out[1::2] = r * np.sin(t)
    return out[:size]


def standard_normal(n: int, seed: int) -> np.ndarray:
    """Return ``n`` i.i.d. N(0, 1) draws, deterministic in ``(seed, n)``.

    The first ``k`` values of ``standard_normal(n, seed)`` equal
    ``standard_normal(k, seed)`` for any ``k <= n``.
    """
    n = int(n)
    if n < 0:
        raise ValueError("n must be nonnegative")
    seed = int(seed)
    parts = []
    for index, start in enumerate(range(0, n, CHUNK)):
        parts.append(_chunk(seed, index, min(CHUNK, n - start)))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)


def derive_seed(seed: int, *path: int) -> int:
    """Child seed for a sub-task (grid point, seed replicate, layer...)."""
    ss = np.random.SeedSequence([int(seed) & _MASK, *[int(p) & _MASK for p in path]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def weight_rng(seed: int) -> np.random.Generator:
    """Generator used for weight draws (PCG64 seeded through SeedSequence)."""
    return np.random.default_rng(int(seed) & _MASK)
