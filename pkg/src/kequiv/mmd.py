"""Two-sample MMD: V-statistic, jackknife variances and weighted bootstrap."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kequiv import _backend
from kequiv.kernels import KernelSpec, as_samples, median_heuristic
from kequiv.ksd import DEFAULT_GRAM_CAP, clamp_nonneg, quadratic_forms
from kequiv.resampling import bootstrap_weights

__all__ = [
    "MmdContext",
    "MmdVariance",
    "mmd_jackknife_terms",
    "mmd_jackknife_variance",
    "mmd_one_sample_bootstrap_sq",
    "mmd_pair_bootstrap",
    "mmd_sq_vstat",
]


@dataclass(frozen=True)
class MmdVariance:
    sigma1_sq: float
    sigma2_sq: float
    sigma_mmd_sq: float


class _Block:
    """One kernel block ``K(A, C)``, dense below the cap and streamed above it."""

    def __init__(self, kernel: KernelSpec, A, C, symmetric: bool, dense: bool):
        self.kernel, self.A, self.C = kernel, A, C
        self.symmetric = symmetric
        self._K = kernel.gram(A, C) if dense else None
        self._rows = self._cols = None

    def matmat(self, V):
        V = np.ascontiguousarray(V, dtype=np.float64)
        if self._K is not None:
            return self._K @ V
        return _backend.gram_matmat(self.A, self.C, V, *self.kernel.backend_args(), self.symmetric)

    def _sums(self):
        if self._K is not None:
            self._rows, self._cols = self._K.sum(axis=1), self._K.sum(axis=0)
        elif self.symmetric:
            self._rows = self.matmat(np.ones((self.C.shape[0], 1)))[:, 0]
            self._cols = self._rows
        else:
            self._rows, self._cols = _backend.gram_row_col_sums(
                self.A, self.C, *self.kernel.backend_args()
            )

    def row_sums(self):
        if self._rows is None:
            self._sums()
        return self._rows

    def col_sums(self):
        if self._cols is None:
            self._sums()
        return self._cols

    def total(self):
        return float(self.row_sums().sum())


class MmdContext:
    """Kernel blocks for samples ``X`` (size n) and ``Y`` (size m).

    The XX, YY and XY blocks are built once and shared by the statistic, the
    variance and every bootstrap replicate.
    """

    def __init__(self, kernel: KernelSpec, X, Y, gram_cap: int = DEFAULT_GRAM_CAP):
        self.kernel = kernel
        self.X = as_samples(X, "X")
        self.Y = as_samples(Y, "Y")
        if self.X.shape[1] != self.Y.shape[1]:
            raise ValueError(f"dimension mismatch: X has d={self.X.shape[1]}, Y has d={self.Y.shape[1]}")
        dense = max(self.n, self.m) <= gram_cap
        self.xx = _Block(kernel, self.X, self.X, True, dense)
        self.yy = _Block(kernel, self.Y, self.Y, True, dense)
        self._xy = None
        self._dense = dense

    @classmethod
    def with_median_heuristic(cls, X, Y, **kwargs) -> "MmdContext":
        """RBF kernel with bandwidth from the pooled median heuristic."""
        X, Y = as_samples(X, "X"), as_samples(Y, "Y")
        return cls(KernelSpec.rbf(median_heuristic(X, Y, max_points=4096)), X, Y, **kwargs)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def m(self) -> int:
        return self.Y.shape[0]

    @property
    def xy(self) -> _Block:
        if self._xy is None:
            self._xy = _Block(self.kernel, self.X, self.Y, False, self._dense)
        return self._xy

    def diag_value(self) -> float:
        """``k(x, x)``, evaluated through the same backend as the blocks."""
        return float(self.kernel.gram(self.X[:1], self.X[:1])[0, 0])


def mmd_sq_vstat(ctx: MmdContext) -> float:
    n, m = ctx.n, ctx.m
    value = ctx.xx.total() / n**2 + ctx.yy.total() / m**2 - 2.0 * ctx.xy.total() / (n * m)
    return clamp_nonneg(value, "MMD^2 V-statistic")


def mmd_jackknife_terms(ctx: MmdContext) -> tuple[np.ndarray, np.ndarray]:
    """The leave-one-out averages ``(q, p)`` from row and column sums of the three blocks.

    ``q_i`` averages ``h(x_i, x_i', y_j, y_j')`` over ``i' != i`` and
    ``j != j'``; ``p_j`` averages over ``i != i'`` and ``j' != j``. Expanding
    ``h`` turns each triple sum into block row sums, so the cost is that of
    building the blocks.
    """
    n, m = ctx.n, ctx.m
    if n < 2 or m < 2:
        raise ValueError(f"jackknife variance needs n, m >= 2, got n={n}, m={m}")
    diag = ctx.diag_value()
    a_x = ctx.xx.row_sums() - diag  # sum over i' != i of k(x_i, x_i')
    a_y = ctx.yy.row_sums() - diag
    off_x = a_x.sum()
    off_y = a_y.sum()
    r_x = ctx.xy.row_sums()  # sum_j k(x_i, y_j)
    c_y = ctx.xy.col_sums()  # sum_i k(x_i, y_j)
    t1 = r_x.sum()

    q = (
        m * (m - 1) * a_x
        + (n - 1) * off_y
        - (n - 1) * (m - 1) * r_x
        - (m - 1) * (t1 - r_x)
    ) / ((n - 1) * m * (m - 1))
    p = (
        (m - 1) * off_x
        + n * (n - 1) * a_y
        - (n - 1) * (t1 - c_y)
        - (m - 1) * (n - 1) * c_y
    ) / (n * (n - 1) * (m - 1))
    return q, p


def mmd_jackknife_variance(ctx: MmdContext) -> MmdVariance:
    """Sample variances of ``q`` and ``p`` combined as ``N (4 s1 / n + 4 s2 / m)``."""
    n, m = ctx.n, ctx.m
    q, p = mmd_jackknife_terms(ctx)
    s1 = float(np.var(q, ddof=1))
    s2 = float(np.var(p, ddof=1))
    N = n + m
    return MmdVariance(s1, s2, N * (4.0 * s1 / n + 4.0 * s2 / m))


def mmd_one_sample_bootstrap_sq(kernel: KernelSpec, X, B: int, seed, stream: int = 0) -> np.ndarray:
    """``B`` draws of ``(1/n^2) v' K v`` with ``v = W - 1``, ``W`` multinomial."""
    X = as_samples(X)
    block = _Block(kernel, X, X, True, X.shape[0] <= DEFAULT_GRAM_CAP)
    return _block_bootstrap(block, B, seed, stream)


def _block_bootstrap(block: _Block, B, seed, stream):
    W = bootstrap_weights(block.A.shape[0], B, seed, stream)
    return quadratic_forms(block.matmat, W)


def mmd_pair_bootstrap(ctx: MmdContext, B: int, seed) -> np.ndarray:
    """``B`` draws of ``D_W(X) + D_W~(Y)`` with independent weight vectors.

    Replicate ``b`` uses child seed ``(seed, b, 0)`` for ``X`` and
    ``(seed, b, 1)`` for ``Y``.
    """
    dx = _block_bootstrap(ctx.xx, B, seed, 0)
    dy = _block_bootstrap(ctx.yy, B, seed, 1)
    return np.sqrt(dx) + np.sqrt(dy)
