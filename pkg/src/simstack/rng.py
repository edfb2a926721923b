"""Reproducible, splittable random streams.

Every stochastic routine in the package draws from a Generator obtained
through :func:`stream`, keyed by the experiment seed plus a structural path
(e.g. ``stream(seed, "mc-sinr", chunk_index)``).  Streams with different keys
are statistically independent, and the mapping (seed, key) -> stream does not
depend on execution order or worker count, so Monte Carlo reductions are
bit-reproducible under any parallel schedule.
"""
from __future__ import annotations

import numpy as np

__all__ = ["stream", "complex_normal"]


def _key_to_ints(key: tuple) -> tuple[int, ...]:
    out: list[int] = []
    for part in key:
        if isinstance(part, (int, np.integer)):
            out.append(int(part) & 0xFFFFFFFF)
        elif isinstance(part, str):
            # stable 32-bit digest of the label
            h = 2166136261
            for ch in part.encode():
                h = ((h ^ ch) * 16777619) & 0xFFFFFFFF
            out.append(h)
        else:
            raise TypeError(f"stream key parts must be int or str, got {type(part)!r}")
    return tuple(out)


def stream(seed: int, *key: int | str) -> np.random.Generator:
    """Independent generator for (seed, key); same arguments give same stream."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=_key_to_ints(key))
    return np.random.Generator(np.random.PCG64(ss))


def complex_normal(rng: np.random.Generator, shape: tuple[int, ...] | int) -> np.ndarray:
    """Standard circularly-symmetric complex Gaussian, unit variance per entry."""
    re = rng.standard_normal(shape)
    im = rng.standard_normal(shape)
    return (re + 1j * im) / np.sqrt(2.0)
