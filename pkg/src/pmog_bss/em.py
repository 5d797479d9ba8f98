"""EM estimation of the projected mixture model.

Each EM iteration computes responsibilities for the current projection,
then maximizes the penalized objective in two alternating parts: closed
forms for the mixture parameters at fixed projection, and a damped Newton
solve of a cubic root system for the projection at fixed mixture. Because
the projection subproblem is non-concave, every M-step result is accepted
only if it did not decrease the fixed-responsibility bound; violations
trigger a randomized M-step restart.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateSample, EmptyComponent, SolveFailed
from .kmeans import kmeans_1d
from .mog import (
    ConstraintSet,
    DataMatrix,
    MogParams,
    PriorConfig,
    Responsibilities,
    default_priors,
    e_step,
    log_prior_h2,
    objective_h,
    q_bound,
)

VARIANCE_FLOOR_FRACTION = 1e-10  # of the current projection's variance

# Absolute threshold below which a root is treated as the inadmissible
# degenerate case (the unit-norm multiplier vanishes).
ADMISSIBILITY_TOL = 1e-12

CONSTRAINT_TOL = 1e-8


@dataclass(frozen=True)
class QuadraticForm:
    """Responsibility-weighted moments b (q-vector) and A (q x q, SPD for
    full-rank data) that make the projection subproblem independent of w."""

    b: np.ndarray
    A: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=float)
        A = np.asarray(self.A, dtype=float)
        if b.ndim != 1 or A.shape != (b.size, b.size):
            raise ValueError("b must be a q-vector and A a q x q matrix")
        scale = max(1.0, float(np.max(np.abs(A)))) if A.size else 1.0
        if np.max(np.abs(A - A.T), initial=0.0) > 1e-10 * scale:
            raise ValueError("A must be symmetric within 1e-10")
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "A", A)

    @property
    def q(self) -> int:
        return self.b.size


@dataclass(frozen=True)
class NewtonConfig:
    eta0: float = 1e-3
    eta_grow: float = 10.0
    eta_shrink: float = 0.1
    max_iters: int = 200
    residual_tol: float = 1e-9
    max_inner_retries: int = 8


@dataclass(frozen=True)
class KmeansConfig:
    max_iters: int = 50
    plusplus_seeding: bool = True


@dataclass(frozen=True)
class EmConfig:
    """Knobs of the EM fit; defaults follow the values used throughout."""

    R: int
    eps_rel: float = 1e-5
    eps_m: float = 1e-3
    max_em_iters: int = 500
    max_restarts: int = 20
    max_alternations: int = 100
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    kmeans: KmeansConfig = field(default_factory=KmeansConfig)
    seed: int = 42

    def __post_init__(self):
        if self.R < 1:
            raise ValueError("need at least one mixture component")
        for name in ("eps_rel", "eps_m"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class NewtonState:
    """Converged root-solve state: the root, its residual, the final damping,
    the unit-norm Lagrange multiplier and the iteration count."""

    w: np.ndarray
    residual: np.ndarray
    eta: float
    lambda1: float
    iterations: int


@dataclass(frozen=True)
class PmogFit:
    """Converged fit: mixture parameters, unit projection, objective trace."""

    params: MogParams
    w: np.ndarray
    objective_trace: np.ndarray
    restarts_used: int
    converged: bool
    restarts_exhausted: bool = False
    newton: NewtonState | None = None


def random_constrained_unit(cs: ConstraintSet, rng: np.random.Generator) -> np.ndarray:
    """Uniform draw on the unit sphere intersected with the constraint space."""
    for _ in range(100):
        v = cs.P_G @ rng.standard_normal(cs.q)
        nrm = np.linalg.norm(v)
        if nrm >= 1e-8:
            return v / nrm
    raise SolveFailed("could not draw a unit vector in the constraint space")


def update_pi(alpha: Responsibilities, beta: np.ndarray) -> np.ndarray:
    """Closed-form fraction update: (row mass + beta_k - 1) / (n + sum(beta - 1))."""
    beta = np.asarray(beta, dtype=float)
    row = alpha.alpha.sum(axis=1)
    pi = (row + beta - 1.0) / (alpha.n + (beta - 1.0).sum())
    return pi / pi.sum()


def update_mu(alpha: Responsibilities, Z: DataMatrix, w) -> np.ndarray:
    """Responsibility-weighted means of the projections."""
    u = np.asarray(w, dtype=float) @ Z.values
    row = alpha.alpha.sum(axis=1)
    if np.any(row < 1e-12):
        dead = int(np.argmin(row))
        raise EmptyComponent(f"component {dead} has no responsibility mass")
    return (alpha.alpha @ u) / row


def update_sigma2(
    alpha: Responsibilities, Z: DataMatrix, w, mu: np.ndarray, priors: PriorConfig
) -> np.ndarray:
    """Prior-regularized variance update, floored away from exact collapse."""
    u = np.asarray(w, dtype=float) @ Z.values
    row = alpha.alpha.sum(axis=1)
    if np.any(row < 1e-12):
        dead = int(np.argmin(row))
        raise EmptyComponent(f"component {dead} has no responsibility mass")
    resid2 = (u[None, :] - np.asarray(mu)[:, None]) ** 2
    wsum = (alpha.alpha * resid2).sum(axis=1)
    inv_gamma = np.where(np.isinf(priors.gamma), 0.0, 1.0 / priors.gamma)
    sigma2 = (2.0 * inv_gamma + wsum) / (2.0 * (priors.theta + 1.0) + row)
    floor = VARIANCE_FLOOR_FRACTION * float(np.var(u))
    return np.maximum(sigma2, max(floor, 1e-300))


def assemble_quadratic(
    alpha: Responsibilities, Z: DataMatrix, mu: np.ndarray, sigma2: np.ndarray
) -> QuadraticForm:
    """Collapse the responsibility sums into the w-independent moments.

    b = sum_ik (alpha_ki mu_k / sigma2_k) z_i,
    A = sum_ik (alpha_ki / sigma2_k) z_i z_i^T.
    """
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    c = (mu / sigma2) @ alpha.alpha        # per-sample b weights
    d = (1.0 / sigma2) @ alpha.alpha       # per-sample A weights
    b = Z.values @ c
    A = (Z.values * d) @ Z.values.T
    A = 0.5 * (A + A.T)
    return QuadraticForm(b=b, A=A)


def cubic_residual(w, qf: QuadraticForm, cs: ConstraintSet) -> np.ndarray:
    """Stationarity residual f(w) = P_G (b - A w) - (w@b - w@A@w) w."""
    w = np.asarray(w, dtype=float)
    Aw = qf.A @ w
    return cs.P_G @ (qf.b - Aw) - (w @ qf.b - w @ Aw) * w


def cubic_jacobian(w, qf: QuadraticForm, cs: ConstraintSet) -> np.ndarray:
    """Jacobian of the stationarity residual,
    -P_G A - w b^T - (b@w) I + (w@A@w) I + 2 w w^T A."""
    w = np.asarray(w, dtype=float)
    q = w.size
    Aw = qf.A @ w
    eye = np.eye(q)
    return (
        -cs.P_G @ qf.A
        - np.outer(w, qf.b)
        - (qf.b @ w) * eye
        + (w @ Aw) * eye
        + 2.0 * np.outer(w, Aw)
    )


def newton_init(qf: QuadraticForm, cs: ConstraintSet) -> np.ndarray:
    """Default start point: the projected, normalized unconstrained optimum."""
    v = cs.P_G @ np.linalg.solve(qf.A, qf.b)
    nrm = np.linalg.norm(v)
    if not np.all(np.isfinite(v)) or nrm < 1e-12:
        raise np.linalg.LinAlgError("degenerate init")
    return v / nrm


def solve_w(
    qf: QuadraticForm,
    cs: ConstraintSet,
    w_init: np.ndarray | None = None,
    newton: NewtonConfig | None = None,
    rng: np.random.Generator | None = None,
) -> NewtonState:
    """Find an admissible root of the cubic system by damped Newton steps.

    Steps solve (J + eta I) d = f; a step is kept only if it shrinks the
    residual norm, otherwise the damping grows and the step is retried.
    A root is admissible only when the unit-norm multiplier term
    w@b - w@A@w is bounded away from zero; such roots provably satisfy
    |w| = 1 and G^T w = 0, which is re-verified before returning.

    Raises SolveFailed on iteration exhaustion, a non-improvable step, or
    an inadmissible root; the caller restarts from a fresh random point.
    """
    cfg = newton or NewtonConfig()
    if w_init is None:
        try:
            w = newton_init(qf, cs)
        except np.linalg.LinAlgError:
            if rng is None:
                raise SolveFailed("singular init and no rng for a random fallback")
            w = random_constrained_unit(cs, rng)
    else:
        w = np.asarray(w_init, dtype=float).copy()

    f = cubic_residual(w, qf, cs)
    eta = cfg.eta0
    eye = np.eye(qf.q)
    iterations = 0
    while np.max(np.abs(f)) > cfg.residual_tol:
        if iterations >= cfg.max_iters:
            raise SolveFailed(f"no root within {cfg.max_iters} iterations")
        J = cubic_jacobian(w, qf, cs)
        fnorm = np.linalg.norm(f)
        accepted = False
        for _ in range(cfg.max_inner_retries + 1):
            try:
                step = np.linalg.solve(J + eta * eye, f)
            except np.linalg.LinAlgError:
                eta = (eta if eta > 0.0 else cfg.eta0) * cfg.eta_grow
                continue
            w_new = w - step
            f_new = cubic_residual(w_new, qf, cs)
            if np.all(np.isfinite(f_new)) and np.linalg.norm(f_new) < fnorm:
                accepted = True
                break
            eta = (eta if eta > 0.0 else cfg.eta0) * cfg.eta_grow
        if not accepted:
            # The damped family rotates toward -f as eta grows, which need
            # not descend the residual norm. The pure Newton direction
            # always does (for nonsingular J), so backtrack along it.
            try:
                d = np.linalg.solve(J, f)
            except np.linalg.LinAlgError:
                d = np.linalg.solve(J + cfg.eta0 * eye, f)
            t = 1.0
            for _ in range(40):
                w_new = w - t * d
                f_new = cubic_residual(w_new, qf, cs)
                if np.all(np.isfinite(f_new)) and np.linalg.norm(f_new) < fnorm:
                    accepted = True
                    break
                t *= 0.5
            eta = cfg.eta0
        if not accepted:
            raise SolveFailed("no step could reduce the residual")
        w, f = w_new, f_new
        eta *= cfg.eta_shrink
        iterations += 1

    gap = float(w @ qf.b - w @ qf.A @ w)
    if abs(gap) < ADMISSIBILITY_TOL:
        raise SolveFailed("root is degenerate (vanishing unit-norm multiplier)")
    if abs(np.linalg.norm(w) - 1.0) > CONSTRAINT_TOL:
        raise SolveFailed("root violates the unit-norm constraint")
    if cs.L and np.max(np.abs(cs.G.T @ w)) > CONSTRAINT_TOL:
        raise SolveFailed("root violates the linear constraints")
    return NewtonState(
        w=w, residual=f, eta=eta, lambda1=0.5 * gap, iterations=iterations
    )


def m_step(
    alpha: Responsibilities,
    Z: DataMatrix,
    cs: ConstraintSet,
    state_in: tuple[MogParams, np.ndarray],
    priors: PriorConfig,
    config: EmConfig,
    rng: np.random.Generator | None = None,
) -> tuple[MogParams, np.ndarray, NewtonState]:
    """One full M-step: alternate the closed-form part and the root solve
    until the objective stalls below eps_m. Returns candidate parameters;
    acceptance is the caller's job."""
    params, w = state_in
    w = np.asarray(w, dtype=float)
    prev_h = None
    newton_state = None
    for _ in range(config.max_alternations):
        pi = update_pi(alpha, priors.beta)
        mu = update_mu(alpha, Z, w)
        sigma2 = update_sigma2(alpha, Z, w, mu, priors)
        params = MogParams(pi=pi, mu=mu, sigma2=sigma2)
        qf = assemble_quadratic(alpha, Z, mu, sigma2)
        newton_state = solve_w(qf, cs, newton=config.newton, rng=rng)
        w = newton_state.w
        h = objective_h(Z, w, params, priors)
        if prev_h is not None and abs(h - prev_h) < config.eps_m:
            break
        prev_h = h
    return params, w, newton_state


def _kmeans_init(
    u0: np.ndarray, config: EmConfig, rng: np.random.Generator
) -> MogParams:
    """Mixture start values from a k-means split of the initial projections."""
    R = config.R
    centers, labels = kmeans_1d(
        u0, R, rng, max_iters=config.kmeans.max_iters,
        plusplus_seeding=config.kmeans.plusplus_seeding,
    )
    var_u = float(np.var(u0))
    floor = max(VARIANCE_FLOOR_FRACTION * var_u, 1e-300)
    pi = np.empty(R)
    sigma2 = np.empty(R)
    for j in range(R):
        mask = labels == j
        pi[j] = mask.mean()
        sigma2[j] = np.var(u0[mask]) if np.any(mask) else 0.0
    pi = np.maximum(pi, 1.0 / (10.0 * R))
    pi /= pi.sum()
    sigma2 = np.maximum(sigma2, floor)
    return MogParams(pi=pi, mu=centers, sigma2=sigma2)


def fit_pmog(
    Z: DataMatrix,
    cs: ConstraintSet,
    priors: PriorConfig | None,
    config: EmConfig,
    rng: np.random.Generator | None = None,
    w_init: np.ndarray | None = None,
) -> PmogFit:
    """Run the full EM loop and return the converged state.

    The projection starts at a random constrained unit vector (or the
    caller-supplied ``w_init``), the mixture at a k-means split of the
    initial projections. After every M-step the fixed-responsibility bound
    and the full objective must both be non-decreasing (1e-8 slack) or the
    M-step is restarted from a fresh random projection, up to
    ``max_restarts`` times; if all restarts fail, the best candidate is
    kept only when it does not break monotonicity, otherwise the fit stops
    at the last accepted state with ``restarts_exhausted`` set.

    Convergence: |H(t+1) - H(t)| <= eps_rel * mean_t |H(t)|.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    if Z.n <= config.R:
        raise ValueError("need more samples than mixture components")
    if cs.q != Z.q:
        raise ValueError("constraint set and data disagree on dimension")

    if w_init is not None:
        w = cs.P_G @ np.asarray(w_init, dtype=float)
        nrm = np.linalg.norm(w)
        if nrm < 1e-8:
            raise ValueError("w_init lies in the constraint space")
        w = w / nrm
    else:
        w = random_constrained_unit(cs, rng)

    u0 = w @ Z.values
    var_u0 = float(np.var(u0))
    if var_u0 <= 0.0:
        raise DegenerateSample("initial projections are constant")
    if priors is None:
        priors = default_priors(config.R, var_u0)

    params = _kmeans_init(u0, config, rng)
    h_cur = objective_h(Z, w, params, priors)
    trace = [h_cur]
    restarts_used = 0
    restarts_exhausted = False
    converged = False
    newton_last = None

    for _ in range(config.max_em_iters):
        alpha = e_step(Z, w, params)
        base_bound = q_bound(alpha, Z, w, params) + log_prior_h2(params, priors)

        accepted = None
        best = None
        w_try = w
        for attempt in range(config.max_restarts + 1):
            cand = None
            try:
                cand_params, cand_w, newton_state = m_step(
                    alpha, Z, cs, (params, w_try), priors, config, rng
                )
                cand_bound = q_bound(alpha, Z, cand_w, cand_params) + log_prior_h2(
                    cand_params, priors
                )
                cand_h = objective_h(Z, cand_w, cand_params, priors)
                cand = (cand_h, cand_params, cand_w, newton_state)
            except (SolveFailed, EmptyComponent, DegenerateSample):
                pass
            if cand is not None:
                if cand_bound >= base_bound - 1e-8 and cand_h >= h_cur - 1e-8:
                    accepted = cand
                    break
                if best is None or cand[0] > best[0]:
                    best = cand
            if attempt == config.max_restarts:
                break
            w_try = random_constrained_unit(cs, rng)
            restarts_used += 1

        if accepted is None:
            restarts_exhausted = True
            if best is not None and best[0] >= h_cur - 1e-8:
                accepted = best
            else:
                break  # nothing improves on the current state; stop here

        h_new, params, w, newton_last = accepted
        trace.append(h_new)
        eps_star = config.eps_rel * float(np.mean(np.abs(trace)))
        if abs(h_new - h_cur) <= eps_star:
            h_cur = h_new
            converged = True
            break
        h_cur = h_new

    return PmogFit(
        params=params,
        w=w,
        objective_trace=np.asarray(trace),
        restarts_used=restarts_used,
        converged=converged,
        restarts_exhausted=restarts_exhausted,
        newton=newton_last,
    )


def derived_config(config: EmConfig, stream_index: int) -> EmConfig:
    """Config for an independent fit stream (seed shifted by the stream index)."""
    return replace(config, seed=config.seed + stream_index)
