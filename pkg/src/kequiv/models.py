"""Target distributions exposed through their score functions, plus samplers.

Two concrete families are provided: the unit-covariance Gaussian and the
Gaussian-Bernoulli RBM. Anything else can be wrapped with ``CallableScore``.

The RBM uses the joint ``p(x, h) ~ exp(x'Bh + b'x + c'h - |x|^2 / 2)`` with
``h`` in ``{-1, +1}^d'``. Summing out ``h`` gives the marginal used by
``rbm_log_unnormalized_density`` and the score ``b - x + B tanh(B'x + c)``,
and the block-Gibbs conditionals are ``x | h ~ N(b + Bh, I)`` and
``P(h_j = +1 | x) = sigmoid(2 (B'x + c)_j)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from kequiv.kernels import as_samples

__all__ = [
    "CallableScore",
    "GaussianModel",
    "GbRbmModel",
    "gaussian_sample",
    "gaussian_score",
    "load_model",
    "model_from_dict",
    "rbm_gibbs_sample",
    "rbm_log_unnormalized_density",
    "rbm_score",
]


def _rows(x, dim):
    """Coerce ``x`` to ``(rows, squeeze)`` where rows is ``k x dim``."""
    arr = np.asarray(x, dtype=np.float64)
    squeeze = arr.ndim <= 1
    if arr.ndim == 0:
        arr = arr[None]
    arr = np.atleast_2d(arr)
    if arr.shape[1] != dim:
        raise ValueError(f"dimension mismatch: model has d={dim}, input has {arr.shape[1]}")
    return arr, squeeze


def _finite(name, arr):
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains NaN or infinite entries")
    return arr


@dataclass(frozen=True, eq=False)
class GaussianModel:
    """``N(mean, I)``."""

    mean: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        if mean.ndim != 1:
            raise ValueError("mean must be a vector")
        object.__setattr__(self, "mean", _finite("mean", mean))

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def score(self, x):
        return gaussian_score(self, x)

    def sample(self, n: int, seed) -> np.ndarray:
        return gaussian_sample(self, n, seed)

    def to_dict(self) -> dict:
        return {"gaussian": {"mean": self.mean.tolist()}}


@dataclass(frozen=True, eq=False)
class GbRbmModel:
    """Gaussian-Bernoulli RBM with weights ``B`` (d x d'), biases ``b`` and ``c``."""

    B: np.ndarray
    b: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        B = np.asarray(self.B, dtype=np.float64)
        b = np.atleast_1d(np.asarray(self.b, dtype=np.float64))
        c = np.atleast_1d(np.asarray(self.c, dtype=np.float64))
        if B.ndim != 2 or b.ndim != 1 or c.ndim != 1:
            raise ValueError("B must be a matrix and b, c vectors")
        if B.shape != (b.shape[0], c.shape[0]):
            raise ValueError(f"B has shape {B.shape}, expected ({b.shape[0]}, {c.shape[0]})")
        for name, arr in (("B", B), ("b", b), ("c", c)):
            object.__setattr__(self, name, _finite(name, arr))

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    @property
    def latent_dim(self) -> int:
        return self.c.shape[0]

    def score(self, x):
        return rbm_score(self, x)

    def sample(self, n: int, seed, burn_in: int = 2000, thin: int = 1, init=None) -> np.ndarray:
        return rbm_gibbs_sample(self, n, burn_in, thin, seed, init=init)

    def to_dict(self) -> dict:
        return {"rbm": {"B": self.B.tolist(), "b": self.b.tolist(), "c": self.c.tolist()}}

    @classmethod
    def random(cls, d: int, d_latent: int, seed) -> "GbRbmModel":
        """Entries of ``b`` and ``c`` standard normal; entries of ``B`` uniform on {-1, +1}."""
        rng = np.random.default_rng(seed)
        b = rng.standard_normal(d)
        c = rng.standard_normal(d_latent)
        B = rng.choice(np.array([-1.0, 1.0]), size=(d, d_latent))
        return cls(B, b, c)


class CallableScore:
    """Wrap a user-supplied ``score(rows) -> rows`` callable of dimension ``dim``."""

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray], dim: int):
        self.fn = fn
        self.dim = int(dim)

    def score(self, x):
        rows, squeeze = _rows(x, self.dim)
        out = np.asarray(self.fn(rows), dtype=np.float64).reshape(rows.shape)
        _finite("score", out)
        return out[0] if squeeze else out


def gaussian_score(model: GaussianModel, x):
    rows, squeeze = _rows(x, model.dim)
    out = model.mean - rows
    return out[0] if squeeze else out


def rbm_score(model: GbRbmModel, x):
    rows, squeeze = _rows(x, model.dim)
    out = model.b - rows + np.tanh(rows @ model.B + model.c) @ model.B.T
    return out[0] if squeeze else out


def rbm_log_unnormalized_density(model: GbRbmModel, x):
    """``b'x - |x|^2/2 + sum_j log(2 cosh((B'x + c)_j))``."""
    rows, squeeze = _rows(x, model.dim)
    a = rows @ model.B + model.c
    # log(2 cosh a) = |a| + log1p(exp(-2|a|))
    log2cosh = np.abs(a) + np.log1p(np.exp(-2.0 * np.abs(a)))
    out = rows @ model.b - 0.5 * np.sum(rows**2, axis=1) + log2cosh.sum(axis=1)
    return float(out[0]) if squeeze else out


def gaussian_sample(model: GaussianModel, n: int, seed) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    return model.mean + rng.standard_normal((n, model.dim))


def rbm_gibbs_sample(
    model: GbRbmModel, n: int, burn_in: int = 2000, thin: int = 1, seed=0, init=None
) -> np.ndarray:
    """Run one block-Gibbs chain and keep every ``thin``-th state after ``burn_in``.

    The chain starts at ``init`` (default ``b``) and alternates ``h | x`` then
    ``x | h``; the retained state is ``x``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if burn_in < 0:
        raise ValueError(f"burn_in must be >= 0, got {burn_in}")
    if thin < 1:
        raise ValueError(f"thin must be >= 1, got {thin}")
    rng = np.random.default_rng(seed)
    B, b, c = model.B, model.b, model.c
    x = b.copy() if init is None else np.asarray(init, dtype=np.float64).copy()
    if x.shape != b.shape:
        raise ValueError("init must have the model dimension")
    total = burn_in + n * thin
    # pre-draw all randomness so the chain is a pure function of the seed
    uniforms = rng.random((total, c.shape[0]))
    noise = rng.standard_normal((total, b.shape[0]))
    out = np.empty((n, b.shape[0]))
    kept = 0
    for t in range(total):
        p_plus = 1.0 / (1.0 + np.exp(-2.0 * (x @ B + c)))
        h = np.where(uniforms[t] < p_plus, 1.0, -1.0)
        x = b + B @ h + noise[t]
        if t >= burn_in and (t - burn_in) % thin == thin - 1:
            out[kept] = x
            kept += 1
    return out


def model_from_dict(doc: dict):
    """Build a model from ``{"gaussian": {...}}`` or ``{"rbm": {...}}``."""
    if not isinstance(doc, dict) or len(doc) != 1:
        raise ValueError("model document must have exactly one key: 'gaussian' or 'rbm'")
    (kind, params), = doc.items()
    if kind == "gaussian":
        return GaussianModel(np.asarray(params["mean"], dtype=np.float64))
    if kind == "rbm":
        return GbRbmModel(params["B"], params["b"], params["c"])
    raise ValueError(f"unknown model kind {kind!r}")


def load_model(path):
    with open(path) as fh:
        return model_from_dict(json.load(fh))


def draw(model, n: int, seed, **gibbs) -> np.ndarray:
    """Sample ``n`` rows from ``model`` with its natural sampler."""
    if isinstance(model, GaussianModel):
        return gaussian_sample(model, n, seed)
    if isinstance(model, GbRbmModel):
        return rbm_gibbs_sample(model, n, seed=seed, **gibbs)
    raise TypeError(f"no sampler for {type(model).__name__}")


def score_rows(model, X: np.ndarray) -> np.ndarray:
    """Score evaluated at every row of ``X``, validated finite."""
    X = as_samples(X)
    S = np.asarray(model.score(X), dtype=np.float64).reshape(X.shape)
    return np.ascontiguousarray(_finite("score", S))
