"""Probabilistic-PCA mixing estimate and whitening transforms.

The ML mixing estimate for the isotropic-noise linear model comes from the
eigendecomposition of the sample covariance: the noise variance is the
mean of the trailing eigenvalues and the loading matrix is built from the
leading eigenpairs (up to a rotation that the source-extraction stage
resolves). Whitening maps observations into the q-dimensional coordinates
the mixture fit consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSpectrum, SingularCovariance
from .mog import DataMatrix


def _sorted_eigh(C: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of a symmetric matrix, eigenvalues descending, signs fixed
    so the largest-magnitude entry of each eigenvector is positive."""
    lam, U = np.linalg.eigh(C)
    order = np.argsort(-lam, kind="stable")
    lam = lam[order]
    U = U[:, order]
    for j in range(U.shape[1]):
        k = int(np.argmax(np.abs(U[:, j])))
        if U[k, j] < 0.0:
            U[:, j] = -U[:, j]
    return lam, U


@dataclass(frozen=True)
class PpcaFit:
    """ML mixing estimate: sample mean, noise variance, leading eigenpairs
    and the cached whitening map (Lambda_q - sigma2 I)^(-1/2) U_q^T."""

    mu_hat: np.ndarray
    sigma2_hat: float
    U_q: np.ndarray
    Lambda_q: np.ndarray
    whitener: np.ndarray

    @property
    def p(self) -> int:
        return self.U_q.shape[0]

    @property
    def q(self) -> int:
        return self.U_q.shape[1]

    @property
    def A_hat(self) -> np.ndarray:
        """Loading matrix with the rotation ambiguity fixed to the identity."""
        return self.U_q * np.sqrt(self.Lambda_q - self.sigma2_hat)


def ppca_fit(X: np.ndarray, q: int) -> PpcaFit:
    """Fit the isotropic-noise linear model by eigendecomposition.

    X is p x n with p <= n and 1 <= q <= p. For the square case q = p the
    noise variance is defined to be zero (there are no trailing
    eigenvalues; this is the noise-free limit).

    Raises DegenerateSpectrum when the q-th eigenvalue does not exceed the
    noise estimate, i.e. q is too large for the data.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise ValueError("X must be 2-D (p x n)")
    p, n = X.shape
    if not 1 <= q <= p:
        raise ValueError("need 1 <= q <= p")
    if p > n:
        raise ValueError("need at least as many samples as dimensions")
    if not np.all(np.isfinite(X)):
        raise ValueError("X must be finite")

    mu_hat = X.mean(axis=1)
    Xc = X - mu_hat[:, None]
    S = (Xc @ Xc.T) / n
    lam, U = _sorted_eigh(S)
    sigma2_hat = float(lam[q:].mean()) if q < p else 0.0
    sigma2_hat = max(sigma2_hat, 0.0)
    lam_q = lam[:q]
    if lam_q[-1] <= sigma2_hat + 1e-12:
        raise DegenerateSpectrum(
            f"eigenvalue {q} ({lam_q[-1]:.3e}) does not exceed the noise "
            f"estimate ({sigma2_hat:.3e}); reduce q"
        )
    whitener = (U[:, :q] / np.sqrt(lam_q - sigma2_hat)).T
    return PpcaFit(
        mu_hat=mu_hat,
        sigma2_hat=sigma2_hat,
        U_q=U[:, :q],
        Lambda_q=lam_q,
        whitener=whitener,
    )


def whiten(X: np.ndarray, fit: PpcaFit) -> DataMatrix:
    """Map observations into the fit's latent coordinates.

    The output has zero sample mean; its sample covariance is diagonal with
    entries lambda_i / (lambda_i - sigma2), which is the identity exactly
    when the noise estimate is zero.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != fit.p:
        raise ValueError("X must be p x n for the fitted p")
    return DataMatrix(fit.whitener @ (X - fit.mu_hat[:, None]))


def empirical_whiten(S: np.ndarray) -> np.ndarray:
    """Rotate and scale rows to exactly zero mean and identity covariance.

    Uses the eigendecomposition of the (1/n-normalized) sample covariance.
    Raises SingularCovariance when that covariance is rank deficient
    (including n < q).
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2:
        raise ValueError("S must be 2-D (q x n)")
    q, n = S.shape
    if n < 2 or n < q:
        raise SingularCovariance("need n >= 2 and n >= q samples")
    mu = S.mean(axis=1)
    Sc = S - mu[:, None]
    C = (Sc @ Sc.T) / n
    lam, U = _sorted_eigh(C)
    if lam[-1] <= 1e-12 * max(lam[0], 1e-300):
        raise SingularCovariance("sample covariance is singular")
    return (U / np.sqrt(lam)).T @ Sc


def reconstruct_sources(X: np.ndarray, fit: PpcaFit, W: np.ndarray) -> np.ndarray:
    """Least-squares sources: extraction rows applied to the whitened data."""
    W = np.asarray(W, dtype=float)
    return W @ whiten(X, fit).values
