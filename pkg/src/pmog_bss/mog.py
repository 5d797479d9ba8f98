"""Value types and pure evaluations for the projected 1-D Gaussian mixture.

The model: samples ``z_i`` (columns of a q x n matrix) are projected by a
unit vector ``w`` into scalars ``u_i = w @ z_i`` which are assumed to follow
an R-component 1-D mixture of Gaussians. The fitting objective adds weak
priors on the mixing fractions (Dirichlet) and variances (inverse-Gamma)
whose only purpose is to keep a component from collapsing onto one point.

All functions here are pure and operate on immutable value objects; every
mixture evaluation happens in the log domain.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateSample, NumericalUnderflow

_LOG_2PI = float(np.log(2.0 * np.pi))


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


@dataclass(frozen=True)
class DataMatrix:
    """q x n matrix of column samples (rows = dimensions, columns = samples)."""

    values: np.ndarray

    def __post_init__(self):
        arr = _as_float_array(self.values, "values")
        if arr.ndim != 2:
            raise ValueError("values must be a 2-D array")
        q, n = arr.shape
        if q < 1:
            raise ValueError("need at least one dimension")
        if n < 2 or n < q:
            raise ValueError("need n >= 2 and n >= q samples")
        object.__setattr__(self, "values", arr)

    @property
    def q(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class MogParams:
    """1-D mixture parameters: fractions ``pi``, means ``mu``, variances ``sigma2``."""

    pi: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray

    def __post_init__(self):
        pi = _as_float_array(self.pi, "pi")
        mu = _as_float_array(self.mu, "mu")
        sigma2 = _as_float_array(self.sigma2, "sigma2")
        if not (pi.ndim == mu.ndim == sigma2.ndim == 1):
            raise ValueError("pi, mu, sigma2 must be 1-D")
        if not (pi.size == mu.size == sigma2.size >= 1):
            raise ValueError("pi, mu, sigma2 must share a common length >= 1")
        if abs(pi.sum() - 1.0) > 1e-12:
            raise ValueError("mixing fractions must sum to 1 within 1e-12")
        if np.any(pi < 0.0) or np.any(pi > 1.0):
            raise ValueError("mixing fractions must lie in [0, 1]")
        if np.any(sigma2 <= 0.0):
            raise ValueError("variances must be positive")
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma2", sigma2)

    @property
    def R(self) -> int:
        return self.pi.size


@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of the Dirichlet / inverse-Gamma priors.

    ``beta`` are the Dirichlet exponents on the fractions, ``theta`` and
    ``gamma`` shape the inverse-Gamma variance prior. ``gamma = inf`` turns
    the variance penalty off; ``beta = 1`` turns the fraction prior off
    (the boundary of the admissible range, kept for limiting checks).
    """

    beta: np.ndarray
    theta: np.ndarray
    gamma: np.ndarray

    def __post_init__(self):
        beta = _as_float_array(self.beta, "beta")
        theta = _as_float_array(self.theta, "theta")
        gamma = np.asarray(self.gamma, dtype=float)
        if not (beta.ndim == theta.ndim == gamma.ndim == 1):
            raise ValueError("beta, theta, gamma must be 1-D")
        if not (beta.size == theta.size == gamma.size >= 1):
            raise ValueError("beta, theta, gamma must share a common length >= 1")
        if np.any(beta < 1.0):
            raise ValueError("beta entries must be >= 1")
        if np.any(np.isnan(gamma)) or np.any(gamma <= 0.0):
            raise ValueError("gamma entries must be > 0 (inf allowed)")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "gamma", gamma)

    @property
    def R(self) -> int:
        return self.beta.size


def default_priors(R: int, init_projection_var: float) -> PriorConfig:
    """Weak anti-collapse priors scaled to the initial projection's variance.

    beta = 2 keeps the fraction bounds inactive, theta = 1 and
    gamma = 100 / var(u0) make the variance penalty negligible except for
    components shrinking toward a point mass.
    """
    if init_projection_var <= 0.0 or not np.isfinite(init_projection_var):
        raise ValueError("initial projection variance must be positive and finite")
    return PriorConfig(
        beta=np.full(R, 2.0),
        theta=np.full(R, 1.0),
        gamma=np.full(R, 100.0 / init_projection_var),
    )


@dataclass(frozen=True)
class Responsibilities:
    """R x n posterior component memberships; every column sums to 1."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = _as_float_array(self.alpha, "alpha")
        if alpha.ndim != 2:
            raise ValueError("alpha must be 2-D (components x samples)")
        if np.any(alpha < -1e-12) or np.any(alpha > 1.0 + 1e-12):
            raise ValueError("alpha entries must lie in [0, 1]")
        colsums = alpha.sum(axis=0)
        if np.any(np.abs(colsums - 1.0) > 1e-12):
            raise ValueError("alpha columns must sum to 1 within 1e-12")
        object.__setattr__(self, "alpha", alpha)

    @property
    def R(self) -> int:
        return self.alpha.shape[0]

    @property
    def n(self) -> int:
        return self.alpha.shape[1]


@dataclass(frozen=True)
class ConstraintSet:
    """Linear constraints G^T w = 0 plus the cached orthogonal projector.

    ``G`` is q x L with full column rank, L < q; ``P_G`` projects onto the
    orthogonal complement of span(G). L = 0 means no linear constraints
    (``P_G`` is the identity).
    """

    G: np.ndarray
    P_G: np.ndarray = field(init=False)

    def __post_init__(self):
        G = _as_float_array(self.G, "G")
        if G.ndim != 2:
            raise ValueError("G must be 2-D (q x L)")
        q, L = G.shape
        if L >= q:
            raise ValueError("need L < q constraint columns")
        if L == 0:
            P = np.eye(q)
        else:
            Q, R = np.linalg.qr(G)
            if np.min(np.abs(np.diag(R))) <= 1e-12 * max(1.0, np.max(np.abs(R))):
                raise ValueError("G must have full column rank")
            P = np.eye(q) - Q @ Q.T
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "P_G", P)

    @classmethod
    def unconstrained(cls, q: int) -> "ConstraintSet":
        return cls(np.zeros((q, 0)))

    @property
    def q(self) -> int:
        return self.G.shape[0]

    @property
    def L(self) -> int:
        return self.G.shape[1]


def component_log_pdf(u: np.ndarray, params: MogParams) -> np.ndarray:
    """Log of pi_k * N(u_i | mu_k, sigma2_k) as an (R, n) matrix.

    -inf entries are legal here (pi_k = 0); downstream reductions handle them.
    """
    u = np.atleast_1d(np.asarray(u, dtype=float))
    mu = params.mu[:, None]
    s2 = params.sigma2[:, None]
    with np.errstate(divide="ignore", over="ignore"):
        log_pi = np.log(params.pi)[:, None]
        dev2 = (u[None, :] - mu) ** 2  # may overflow to inf: density 0
    return log_pi - 0.5 * (_LOG_2PI + np.log(s2)) - dev2 / (2.0 * s2)


def mog_log_pdf(u, params: MogParams) -> np.ndarray:
    """Log mixture density at each point of ``u``."""
    return logsumexp(component_log_pdf(u, params), axis=0)


def mog_pdf(u: float, params: MogParams) -> float:
    """Mixture density at a scalar point."""
    return float(np.exp(mog_log_pdf(np.array([u]), params)[0]))


def log_likelihood_h1(Z: DataMatrix, w: np.ndarray, params: MogParams) -> float:
    """Log likelihood of the projected samples, sum_i log p(w @ z_i).

    Raises NumericalUnderflow if a sample's density is zero even in the
    log domain (a pathologically distant projection).
    """
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("w must be finite")
    u = w @ Z.values
    per_sample = mog_log_pdf(u, params)
    if np.any(np.isneginf(per_sample)):
        raise NumericalUnderflow("mixture density underflowed for some sample")
    return float(per_sample.sum())


def log_prior_h2(params: MogParams, priors: PriorConfig) -> float:
    """Log prior terms, normalizing constants dropped.

    sum_k (beta_k - 1) log pi_k + sum_k ( -(theta_k + 1) log sigma2_k
    - 1 / (gamma_k sigma2_k) ). A zero fraction with beta_k = 1 contributes
    0 (0 * log 0 limit); with beta_k > 1 it contributes -inf.
    """
    if params.R != priors.R:
        raise ValueError("params and priors disagree on component count")
    with np.errstate(divide="ignore"):
        log_pi = np.log(params.pi)
    bterm = np.where(priors.beta == 1.0, 0.0, (priors.beta - 1.0) * log_pi)
    inv_gamma = np.where(np.isinf(priors.gamma), 0.0, 1.0 / priors.gamma)
    sterm = -(priors.theta + 1.0) * np.log(params.sigma2) - inv_gamma / params.sigma2
    return float(bterm.sum() + sterm.sum())


def objective_h(Z: DataMatrix, w, params: MogParams, priors: PriorConfig) -> float:
    """Full fitting objective: log likelihood plus log prior."""
    return log_likelihood_h1(Z, w, params) + log_prior_h2(params, priors)


def e_step(Z: DataMatrix, w, params: MogParams) -> Responsibilities:
    """Posterior component memberships of each projected sample.

    alpha_ki = pi_k N(u_i | mu_k, sigma2_k) / sum_k' pi_k' N(u_i | ...),
    computed in the log domain and normalized per column.
    """
    w = np.asarray(w, dtype=float)
    u = w @ Z.values
    log_num = component_log_pdf(u, params)
    log_den = logsumexp(log_num, axis=0)
    if np.any(np.isneginf(log_den)):
        bad = int(np.argmax(np.isneginf(log_den)))
        raise DegenerateSample(f"all component densities underflowed for sample {bad}")
    alpha = np.exp(log_num - log_den[None, :])
    alpha /= alpha.sum(axis=0, keepdims=True)
    return Responsibilities(alpha)


def q_bound(alpha: Responsibilities, Z: DataMatrix, w, params: MogParams) -> float:
    """EM lower bound sum_ik alpha_ki log( pi_k N(u_i|...) / alpha_ki ).

    Entries with alpha_ki = 0 contribute 0. Used by the M-step acceptance
    check and the stationarity tests.
    """
    w = np.asarray(w, dtype=float)
    u = w @ Z.values
    log_num = component_log_pdf(u, params)
    a = alpha.alpha
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = a * (log_num - np.log(a))
    terms = np.where(a > 0.0, terms, 0.0)
    return float(terms.sum())
