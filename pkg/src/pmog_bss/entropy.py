"""Differential-entropy estimators and the source-correlation diagnostic.

Two entropy routes are provided: the mixture-based estimate (the negative
mean log density under a fitted 1-D mixture, which is what the projection
fit minimizes) and the classical near-Gaussian contrast approximation with
the tanh test function, included as the baseline's view of the same
quantity.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NumericalUnderflow, SingularCorrelation
from .mog import MogParams, mog_log_pdf

_LOG_2PI_E = float(np.log(2.0 * np.pi) + 1.0)

GAUSS_HERMITE_NODES = 64


def pmog_entropy(U: np.ndarray, params: MogParams) -> float:
    """Sample-average entropy estimate -(1/n) sum_i log p(u_i) under a
    fitted mixture. Exactly invariant under sample permutation (the sum is
    exactly rounded)."""
    U = np.asarray(U, dtype=float).ravel()
    if U.size == 0:
        raise ValueError("need at least one sample")
    logp = mog_log_pdf(U, params)
    if np.any(np.isneginf(logp)):
        raise NumericalUnderflow("mixture density underflowed for some sample")
    return -math.fsum(logp) / U.size


def _gaussian_expectation(f, sigma2: float, nodes: int = GAUSS_HERMITE_NODES):
    """E[f(nu)] for nu ~ N(0, sigma2) by Gauss-Hermite quadrature."""
    t, w = np.polynomial.hermite.hermgauss(nodes)
    x = np.sqrt(2.0 * sigma2) * t
    return float((w * f(x)).sum() / np.sqrt(np.pi))


def tanh_contrast_normalization(sigma2: float, nodes: int = GAUSS_HERMITE_NODES):
    """Constants (alpha1, alpha2, gamma, delta2) that orthonormalize the
    tanh test function against {1, x, x^2} under N(0, sigma2).

    Solves the three Gaussian moment conditions E[nu^k G(nu)] = 0,
    k = 0, 1, 2, for the polynomial correction, then fixes the scale from
    E[G(nu)^2] = 1. All expectations are evaluated by quadrature.
    """
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    m0 = _gaussian_expectation(np.tanh, sigma2, nodes)
    m1 = _gaussian_expectation(lambda x: x * np.tanh(x), sigma2, nodes)
    m2 = _gaussian_expectation(lambda x: x * x * np.tanh(x), sigma2, nodes)
    s2 = sigma2
    # Unknowns (alpha1, alpha2, gamma); Gaussian moments E[nu]=E[nu^3]=0,
    # E[nu^2]=s2, E[nu^4]=3 s2^2 close the linear system.
    M = np.array([[0.0, s2, 1.0], [s2, 0.0, 0.0], [0.0, 3.0 * s2 * s2, s2]])
    alpha1, alpha2, gamma = np.linalg.solve(M, -np.array([m0, m1, m2]))
    delta2 = _gaussian_expectation(
        lambda x: (np.tanh(x) + alpha1 * x + alpha2 * x * x + gamma) ** 2,
        sigma2,
        nodes,
    )
    return float(alpha1), float(alpha2), float(gamma), float(delta2)


def hyvarinen_entropy(U: np.ndarray, sigma2: float) -> float:
    """Near-Gaussian entropy approximation with the tanh test function.

    H ~ (1/2) log(2 pi e) + (1/2) log sigma2
        - (1 / (2 delta^2)) (mean tanh(u) - E[tanh(nu)])^2

    with nu ~ N(0, sigma2). Expects demeaned samples; sigma2 is the sample
    variance the caller attributes to them.
    """
    U = np.asarray(U, dtype=float).ravel()
    if U.size == 0:
        raise ValueError("need at least one sample")
    if sigma2 <= 0.0:
        raise ValueError("sigma2 must be positive")
    _, _, _, delta2 = tanh_contrast_normalization(sigma2)
    gauss_mean = _gaussian_expectation(np.tanh, sigma2)  # 0 up to quadrature noise
    gap = float(np.tanh(U).mean()) - gauss_mean
    return 0.5 * _LOG_2PI_E + 0.5 * float(np.log(sigma2)) - gap * gap / (2.0 * delta2)


def correlation_penalty(S_hat: np.ndarray) -> float:
    """-(1/2) log det of the row correlation matrix.

    Non-negative by concavity of log over the eigenvalues of a correlation
    matrix, and zero exactly when the rows are uncorrelated.
    """
    S_hat = np.asarray(S_hat, dtype=float)
    if S_hat.ndim != 2:
        raise ValueError("S_hat must be 2-D (q x n)")
    if np.any(np.var(S_hat, axis=1) <= 0.0):
        raise SingularCorrelation("a source row is constant")
    C = np.corrcoef(S_hat)
    if C.ndim == 0:  # single row
        return 0.0
    sign, logdet = np.linalg.slogdet(C)
    if sign <= 0.0 or logdet < np.log(1e-300):
        raise SingularCorrelation("source correlation matrix is singular")
    return max(-0.5 * float(logdet), 0.0)
