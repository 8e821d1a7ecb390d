"""Pure numpy implementations of the hot kernels in ``_core.pyx``.

Used when the compiled extension is unavailable, or when forced with
``KEQUIV_BACKEND=python``.  Work is blocked over rows so that peak memory
stays around ``_BLOCK_ELEMS`` doubles per temporary.
"""

import numpy as np

RBF = 0
IMQ = 1

_BLOCK_ELEMS = 1 << 21


def _profile(family, z, lam2, c2, beta):
    if family == RBF:
        e = np.exp(-z / (2.0 * lam2))
        return e, -e / (2.0 * lam2), e / (4.0 * lam2 * lam2)
    base = c2 + z / lam2
    t = 1.0 / np.sqrt(base) if beta == -0.5 else base**beta
    return (
        t,
        beta * t / (base * lam2),
        beta * (beta - 1.0) * t / (base * base * lam2 * lam2),
    )


def _rows_per_block(m, d):
    return max(1, _BLOCK_ELEMS // max(1, m * d))


def _stein_block(X, S, lo, hi, family, lam2, c2, beta):
    d = X.shape[1]
    r = X[lo:hi, None, :] - X[None, :, :]
    z = np.einsum("ijk,ijk->ij", r, r)
    ss = S[lo:hi] @ S.T
    sr = np.einsum("ijk,ijk->ij", S[None, :, :] - S[lo:hi, None, :], r)
    phi, d1, d2 = _profile(family, z, lam2, c2, beta)
    return phi * ss + 2.0 * d1 * sr - 4.0 * d2 * z - 2.0 * d * d1


def _kernel_block(X, Y, lo, hi, family, lam2, c2, beta):
    r = X[lo:hi, None, :] - Y[None, :, :]
    z = np.einsum("ijk,ijk->ij", r, r)
    if family == RBF:
        return np.exp(-z / (2.0 * lam2))
    return _profile(family, z, lam2, c2, beta)[0]


def gram(X, Y, family, lam2, c2, beta):
    n, m = X.shape[0], Y.shape[0]
    out = np.empty((n, m))
    step = _rows_per_block(m, X.shape[1])
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        out[lo:hi] = _kernel_block(X, Y, lo, hi, family, lam2, c2, beta)
    return out


def stein_gram(X, S, family, lam2, c2, beta):
    n = X.shape[0]
    out = np.empty((n, n))
    step = _rows_per_block(n, X.shape[1])
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        out[lo:hi] = _stein_block(X, S, lo, hi, family, lam2, c2, beta)
    # exact symmetry, matching the compiled path
    iu = np.triu_indices(n, 1)
    out[(iu[1], iu[0])] = out[iu]
    return out


def stein_matmat(X, S, V, family, lam2, c2, beta):
    """Return ``U @ V`` for the Stein Gram ``U`` without storing ``U``."""
    n = X.shape[0]
    out = np.empty((n, V.shape[1]))
    step = _rows_per_block(n, X.shape[1])
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        out[lo:hi] = _stein_block(X, S, lo, hi, family, lam2, c2, beta) @ V
    return out


def gram_matmat(X, Y, V, family, lam2, c2, beta, symmetric):
    """Return ``K(X, Y) @ V`` without storing the Gram matrix."""
    n = X.shape[0]
    out = np.empty((n, V.shape[1]))
    step = _rows_per_block(Y.shape[0], X.shape[1])
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        out[lo:hi] = _kernel_block(X, Y, lo, hi, family, lam2, c2, beta) @ V
    return out


def gram_row_col_sums(X, Y, family, lam2, c2, beta):
    """Row and column sums of ``K(X, Y)`` in one blocked pass."""
    n = X.shape[0]
    rows = np.empty(n)
    cols = np.zeros(Y.shape[0])
    step = _rows_per_block(Y.shape[0], X.shape[1])
    for lo in range(0, n, step):
        hi = min(n, lo + step)
        K = _kernel_block(X, Y, lo, hi, family, lam2, c2, beta)
        rows[lo:hi] = K.sum(axis=1)
        cols += K.sum(axis=0)
    return rows, cols
