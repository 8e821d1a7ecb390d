"""Multinomial bootstrap weights and the order-statistic quantile.

Random streams use numpy's Philox4x64 counter-based generator seeded through
``SeedSequence``; both are platform independent. Replicate ``b`` of stream
``s`` under master seed ``seed`` always draws from
``SeedSequence([seed, b, s])``, so any subset of replicates can be recomputed
(or computed in parallel) without touching the others.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = [
    "bootstrap_weights",
    "child_seed",
    "empirical_quantile",
    "generator",
    "multinomial_weights",
]


def _check_seed(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise TypeError(f"seed must be a non-negative integer, got {seed!r}")
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    return int(seed)


def child_seed(seed, *keys: int) -> np.random.SeedSequence:
    """The seed sequence for ``(seed, *keys)``."""
    seed = _check_seed(seed)
    if isinstance(seed, np.random.SeedSequence):
        return np.random.SeedSequence(seed.entropy, spawn_key=tuple(seed.spawn_key) + keys)
    return np.random.SeedSequence([seed, *keys])


def generator(seed) -> np.random.Generator:
    seed = _check_seed(seed)
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def multinomial_weights(n: int, seed) -> np.ndarray:
    """One draw from ``Multinomial(n; 1/n, ..., 1/n)``.

    Realized as ``n`` independent uniform category draws tallied by index.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    picks = generator(seed).integers(0, n, size=n)
    return np.bincount(picks, minlength=n)


def bootstrap_weights(n: int, B: int, seed, stream: int = 0) -> np.ndarray:
    """``B x n`` matrix whose row ``b`` is ``multinomial_weights(n, child_seed(seed, b, stream))``."""
    if B < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    out = np.empty((B, n), dtype=np.int64)
    for b in range(B):
        out[b] = multinomial_weights(n, child_seed(seed, b, stream))
    return out


def empirical_quantile(samples, level: float) -> float:
    """The ``ceil(level * B)``-th smallest of ``B`` samples.

    This is the smallest ``u`` with at least a ``level`` fraction of the
    samples at or below it; no interpolation.
    """
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("empirical_quantile needs at least one sample")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    # guard ceil against level * B landing a hair above an integer
    k = math.ceil(round(level * x.size, 9))
    k = min(max(k, 1), x.size)
    return float(np.partition(x, k - 1)[k - 1])
