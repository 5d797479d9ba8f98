"""Fixed-point ICA baseline with the tanh contrast.

Operates on whitened data with identity covariance. Deflation mode
extracts one row at a time with Gram-Schmidt re-orthogonalization;
symmetric mode updates all rows together and re-orthogonalizes the whole
matrix each sweep.
"""

from __future__ import annotations

import numpy as np

from .errors import NotConverged
from .mog import DataMatrix

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITERS = 1000


def _contrast_update(Z: np.ndarray, w: np.ndarray) -> np.ndarray:
    u = w @ Z
    g = np.tanh(u)
    g_prime = 1.0 - g * g
    return (Z * g).mean(axis=1) - g_prime.mean() * w


def _symmetric_orthogonalize(W: np.ndarray) -> np.ndarray:
    lam, E = np.linalg.eigh(W @ W.T)
    lam = np.maximum(lam, 1e-300)
    return (E / np.sqrt(lam)) @ E.T @ W


def _random_unit(q: int, rng: np.random.Generator) -> np.ndarray:
    while True:
        v = rng.standard_normal(q)
        nrm = np.linalg.norm(v)
        if nrm >= 1e-8:
            return v / nrm


def fica_extract(
    Z: DataMatrix,
    q: int,
    mode: str = "defl",
    rng: np.random.Generator | None = None,
    tol: float = DEFAULT_TOL,
    max_iters: int = DEFAULT_MAX_ITERS,
) -> np.ndarray:
    """Estimate q orthonormal extraction rows by tanh fixed-point sweeps.

    Convergence per row is |1 - |w_new @ w_old|| <= tol. On iteration
    exhaustion raises NotConverged carrying the partial row matrix and a
    per-row convergence mask, so callers can flag rather than crash.
    """
    if mode not in ("defl", "symm"):
        raise ValueError("mode must be 'defl' or 'symm'")
    if rng is None:
        rng = np.random.default_rng()
    if not 1 <= q <= Z.q:
        raise ValueError("need 1 <= q <= data dimension")
    data = Z.values
    dim = Z.q

    if mode == "defl":
        W = np.zeros((q, dim))
        converged = np.zeros(q, dtype=bool)
        for m in range(q):
            w = _random_unit(dim, rng)
            if m:
                w -= W[:m].T @ (W[:m] @ w)
                w /= np.linalg.norm(w)
            for _ in range(max_iters):
                w_new = _contrast_update(data, w)
                if m:
                    w_new -= W[:m].T @ (W[:m] @ w_new)
                nrm = np.linalg.norm(w_new)
                if nrm < 1e-12:
                    w_new = _random_unit(dim, rng)
                    if m:
                        w_new -= W[:m].T @ (W[:m] @ w_new)
                        w_new /= np.linalg.norm(w_new)
                else:
                    w_new /= nrm
                done = abs(1.0 - abs(w_new @ w)) <= tol
                w = w_new
                if done:
                    converged[m] = True
                    break
            W[m] = w
            if not converged[m]:
                raise NotConverged(
                    f"deflation stalled on source {m}", W=W, converged=converged
                )
        return W

    W = np.vstack([_random_unit(dim, rng) for _ in range(q)])
    W = _symmetric_orthogonalize(W)
    for _ in range(max_iters):
        W_new = np.vstack([_contrast_update(data, w) for w in W])
        W_new = _symmetric_orthogonalize(W_new)
        drift = np.abs(1.0 - np.abs(np.sum(W_new * W, axis=1)))
        W = W_new
        if np.max(drift) <= tol:
            return W
    raise NotConverged(
        "symmetric sweeps stalled", W=W, converged=np.zeros(q, dtype=bool)
    )
