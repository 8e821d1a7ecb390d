"""Kernel Stein discrepancy: Stein kernel, V-statistic, jackknife variance, bootstrap.

All quantities stay in squared units; square roots are taken by the tests.
"""

from __future__ import annotations

import warnings

import numpy as np

from kequiv import _backend
from kequiv.kernels import (
    KernelSpec,
    as_samples,
    eval_kernel,
    grad1_kernel,
    grad12_trace,
    median_heuristic,
)
from kequiv.models import score_rows
from kequiv.resampling import bootstrap_weights

__all__ = [
    "SteinContext",
    "clamp_nonneg",
    "ksd_bootstrap_sq_samples",
    "ksd_jackknife_variance",
    "ksd_sq_vstat",
    "stein_kernel",
]

DEFAULT_GRAM_CAP = 8192
_STREAM_BATCH = 64


def clamp_nonneg(value, what="quadratic form"):
    """Zero out negatives produced by rounding in PSD quadratic forms.

    Values below ``-1e-12 * (1 + |value|)`` are clamped too but trigger a
    RuntimeWarning, since they point at a kernel that is not PSD.
    """
    arr = np.asarray(value, dtype=np.float64)
    if np.any(arr < -1e-12 * (1.0 + np.abs(arr))):
        warnings.warn(f"{what} is negative beyond rounding (min {arr.min():.3e})", RuntimeWarning)
    out = np.maximum(arr, 0.0)
    return float(out) if out.ndim == 0 else out


class SteinContext:
    """Data, score and kernel for one KSD computation.

    The score matrix is evaluated once at construction. The Stein Gram
    matrix is built lazily and kept when ``n <= gram_cap``; above the cap
    every consumer streams over it instead.
    """

    def __init__(self, kernel: KernelSpec, model, X, gram_cap: int = DEFAULT_GRAM_CAP):
        self.kernel = kernel
        self.model = model
        self.X = as_samples(X)
        if getattr(model, "dim", self.X.shape[1]) != self.X.shape[1]:
            raise ValueError(f"model dimension {model.dim} does not match data dimension {self.X.shape[1]}")
        self.S = score_rows(model, self.X)
        self.gram_cap = gram_cap
        self._U = None
        self._rows = None

    @classmethod
    def with_median_heuristic(cls, model, X, **kwargs) -> "SteinContext":
        """IMQ kernel (offset 1, exponent -1/2) with median-heuristic bandwidth."""
        X = as_samples(X)
        return cls(KernelSpec.imq(median_heuristic(X, max_points=4096)), model, X, **kwargs)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def streaming(self) -> bool:
        return self.n > self.gram_cap

    @property
    def gram(self) -> np.ndarray:
        """The ``n x n`` Stein Gram matrix ``U[i, j] = u_p(X[i], X[j])``."""
        if self._U is None:
            if self.streaming:
                raise MemoryError(f"n={self.n} exceeds gram_cap={self.gram_cap}; use streaming consumers")
            self._U = _backend.stein_gram(self.X, self.S, *self.kernel.backend_args())
            if not np.all(np.isfinite(self._U)):
                raise FloatingPointError("Stein kernel produced non-finite values")
        return self._U

    def matmat(self, V: np.ndarray) -> np.ndarray:
        """``U @ V`` for an ``n x r`` matrix ``V``."""
        V = np.ascontiguousarray(V, dtype=np.float64)
        if not self.streaming:
            return self.gram @ V
        return _backend.stein_matmat(self.X, self.S, V, *self.kernel.backend_args())

    def row_sums(self) -> np.ndarray:
        if self._rows is None:
            if not self.streaming:
                self._rows = self.gram.sum(axis=1)
            else:
                self._rows = self.matmat(np.ones((self.n, 1)))[:, 0]
        return self._rows

    def diagonal(self) -> np.ndarray:
        if not self.streaming:
            return np.diag(self.gram).copy()
        k = self.kernel
        d = self.X.shape[1]
        sq = np.sum(self.S**2, axis=1)
        if k.family == "rbf":
            return sq + d / k.bandwidth_sq
        c2, beta = k.imq_offset, k.imq_exponent
        return c2**beta * sq - 2.0 * d * beta * c2 ** (beta - 1.0) / k.bandwidth_sq


def stein_kernel(ctx: SteinContext, x, y) -> float:
    """``u_p(x, y)`` for one pair, from the closed-form kernel derivatives."""
    sx = np.atleast_1d(ctx.model.score(np.atleast_1d(np.asarray(x, dtype=np.float64))))
    sy = np.atleast_1d(ctx.model.score(np.atleast_1d(np.asarray(y, dtype=np.float64))))
    if not (np.all(np.isfinite(sx)) and np.all(np.isfinite(sy))):
        raise FloatingPointError("score is not finite")
    k = ctx.kernel
    value = (
        sx @ sy * eval_kernel(k, x, y)
        + sx @ grad1_kernel(k, y, x)
        + sy @ grad1_kernel(k, x, y)
        + grad12_trace(k, x, y)
    )
    if not np.isfinite(value):
        raise FloatingPointError("Stein kernel value is not finite")
    return float(value)


def ksd_sq_vstat(ctx: SteinContext) -> float:
    """``(1/n^2) sum_{i,j} u_p(X_i, X_j)``, clamped at zero."""
    return clamp_nonneg(ctx.row_sums().sum() / ctx.n**2, "KSD^2 V-statistic")


def ksd_jackknife_variance(ctx: SteinContext) -> float:
    """Leave-one-out estimate of the asymptotic variance of ``sqrt(n) * KSD^2``."""
    n = ctx.n
    if n < 2:
        raise ValueError(f"jackknife variance needs n >= 2, got {n}")
    r = (ctx.row_sums() - ctx.diagonal()) / (n - 1)
    return float(4.0 / (n - 1) * np.sum((r - r.mean()) ** 2))


def ksd_bootstrap_sq_samples(ctx: SteinContext, B: int, seed, stream: int = 0) -> np.ndarray:
    """``B`` weighted-bootstrap draws of ``(1/n^2) v' U v`` with ``v = W - 1``."""
    W = bootstrap_weights(ctx.n, B, seed, stream)
    return quadratic_forms(ctx.matmat, W)


def quadratic_forms(matmat, W: np.ndarray) -> np.ndarray:
    """``(W_b - 1)' G (W_b - 1) / n^2`` for every row of ``W``, clamped at zero."""
    B, n = W.shape
    V = (W - 1).astype(np.float64)
    out = np.empty(B)
    for lo in range(0, B, _STREAM_BATCH):
        Vb = V[lo : lo + _STREAM_BATCH]
        GV = matmat(Vb.T)
        out[lo : lo + _STREAM_BATCH] = np.einsum("ib,bi->b", GV, Vb)
    return clamp_nonneg(out / n**2, "bootstrap quadratic form")
