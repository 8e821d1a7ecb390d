"""Radial kernels, their analytic derivatives, and the median heuristic."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kequiv import _backend

__all__ = [
    "KernelSpec",
    "as_samples",
    "eval_kernel",
    "grad1_kernel",
    "grad12_trace",
    "median_heuristic",
]

_FAMILY_CODES = {"rbf": 0, "imq": 1}


def as_samples(data, name: str = "X") -> np.ndarray:
    """Validate ``data`` as an ``n x d`` matrix of finite floats.

    A 1-D array is read as ``n`` scalar observations. The result is always a
    fresh C-contiguous float64 array.
    """
    arr = np.array(data, dtype=np.float64, order="C", copy=True)
    if arr.ndim == 1:
        arr = arr[:, None]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of observations, got ndim={arr.ndim}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one row and one column, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


def _vector(x, name):
    v = np.asarray(x, dtype=np.float64)
    if v.ndim == 0:
        v = v[None]
    if v.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return v


def _pair(x, y):
    x, y = _vector(x, "x"), _vector(y, "y")
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    return x, y


@dataclass(frozen=True)
class KernelSpec:
    """A radial kernel ``k(x, y)``.

    ``rbf``: ``exp(-|x - y|^2 / (2 * bandwidth_sq))``.
    ``imq``: ``(imq_offset + |x - y|^2 / bandwidth_sq) ** imq_exponent``.
    """

    family: str
    bandwidth_sq: float
    imq_offset: float = 1.0
    imq_exponent: float = -0.5

    def __post_init__(self):
        if self.family not in _FAMILY_CODES:
            raise ValueError(f"family must be 'rbf' or 'imq', got {self.family!r}")
        if not (np.isfinite(self.bandwidth_sq) and self.bandwidth_sq > 0):
            raise ValueError(f"bandwidth_sq must be positive, got {self.bandwidth_sq}")
        if not (np.isfinite(self.imq_offset) and self.imq_offset > 0):
            raise ValueError(f"imq_offset must be positive, got {self.imq_offset}")
        if not -1.0 < self.imq_exponent < 0.0:
            raise ValueError(f"imq_exponent must lie in (-1, 0), got {self.imq_exponent}")
        object.__setattr__(self, "bandwidth_sq", float(self.bandwidth_sq))
        object.__setattr__(self, "imq_offset", float(self.imq_offset))
        object.__setattr__(self, "imq_exponent", float(self.imq_exponent))

    @classmethod
    def rbf(cls, bandwidth_sq: float) -> "KernelSpec":
        return cls("rbf", bandwidth_sq)

    @classmethod
    def imq(cls, bandwidth_sq: float, offset: float = 1.0, exponent: float = -0.5) -> "KernelSpec":
        return cls("imq", bandwidth_sq, offset, exponent)

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self.family]

    def backend_args(self) -> tuple:
        return (self.code, self.bandwidth_sq, self.imq_offset, self.imq_exponent)

    def gram(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Dense kernel matrix ``K[i, j] = k(X[i], Y[j])``."""
        if X.shape[1] != Y.shape[1]:
            raise ValueError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
        return _backend.gram(X, Y, *self.backend_args())

    def to_dict(self) -> dict:
        out = {"family": self.family, "bandwidth_sq": self.bandwidth_sq}
        if self.family == "imq":
            out.update(imq_offset=self.imq_offset, imq_exponent=self.imq_exponent)
        return out


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x, y = _pair(x, y)
    z = float(np.sum((x - y) ** 2))
    if spec.family == "rbf":
        return float(np.exp(-z / (2.0 * spec.bandwidth_sq)))
    return float((spec.imq_offset + z / spec.bandwidth_sq) ** spec.imq_exponent)


def grad1_kernel(spec: KernelSpec, x, y) -> np.ndarray:
    """Gradient of ``k(x, y)`` in its first argument."""
    x, y = _pair(x, y)
    r = x - y
    z = float(r @ r)
    lam2 = spec.bandwidth_sq
    if spec.family == "rbf":
        return -r / lam2 * np.exp(-z / (2.0 * lam2))
    c2, beta = spec.imq_offset, spec.imq_exponent
    return 2.0 * beta / lam2 * (c2 + z / lam2) ** (beta - 1.0) * r


def grad12_trace(spec: KernelSpec, x, y) -> float:
    """``sum_j d^2 k / (dx_j dy_j)`` evaluated at ``(x, y)``."""
    x, y = _pair(x, y)
    r = x - y
    z = float(r @ r)
    d = x.shape[0]
    lam2 = spec.bandwidth_sq
    if spec.family == "rbf":
        return float(np.exp(-z / (2.0 * lam2)) * (d / lam2 - z / lam2**2))
    c2, beta = spec.imq_offset, spec.imq_exponent
    base = c2 + z / lam2
    return float(
        -4.0 * beta * (beta - 1.0) * base ** (beta - 2.0) * z / lam2**2
        - 2.0 * beta * d * base ** (beta - 1.0) / lam2
    )


def median_heuristic(*samples, max_points: int | None = None, seed: int = 0) -> float:
    """Median squared distance over distinct pairs of the pooled rows.

    For an even number of pairs the lower of the two middle order statistics
    is returned. ``max_points`` caps the pooled rows by a seeded subsample,
    keeping the quadratic pair count bounded on large inputs.
    """
    if not samples:
        raise ValueError("median_heuristic needs at least one sample matrix")
    parts = [as_samples(s, name=f"sample {i}") for i, s in enumerate(samples)]
    dims = {p.shape[1] for p in parts}
    if len(dims) != 1:
        raise ValueError(f"pooled samples disagree on dimension: {sorted(dims)}")
    pooled = np.concatenate(parts, axis=0)
    n = pooled.shape[0]
    if n < 2:
        raise ValueError("median_heuristic needs at least 2 rows")
    if max_points is not None and n > max_points:
        keep = np.random.default_rng(seed).choice(n, size=max_points, replace=False)
        pooled = pooled[np.sort(keep)]
        n = max_points
    dists = np.concatenate(
        [np.sum((pooled[i + 1 :] - pooled[i]) ** 2, axis=1) for i in range(n - 1)]
    )
    k = (dists.size - 1) // 2
    med = float(np.partition(dists, k)[k])
    if med <= 0.0:
        raise ValueError("median pairwise distance is zero; bandwidth would be 0")
    return med
