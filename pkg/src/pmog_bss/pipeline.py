"""Sequential source extraction on whitened data.

Sources are pulled out one projection at a time by the mixture fit.
Orthogonal mode constrains each new projection against all previous ones;
non-orthogonal mode only starts each search orthogonal to the previous
solutions and re-estimates when the converged projection duplicates one
already found. The fixed-point ICA baseline runs behind the same result
type for comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .em import EmConfig, derived_config, fit_pmog, random_constrained_unit
from .entropy import correlation_penalty, hyvarinen_entropy, pmog_entropy
from .errors import (
    ExtractionFailed,
    NotConverged,
    PmogError,
    SingularCorrelation,
)
from .fica import fica_extract
from .mog import ConstraintSet, DataMatrix, MogParams, PriorConfig

MODES = ("orthogonal", "nonorthogonal", "fica_defl", "fica_symm")

DUPLICATE_THRESHOLD = 0.98
FITS_PER_SOURCE = 3
MAX_DUPLICATE_RETRIES = 10


@dataclass(frozen=True)
class SourceDiagnostics:
    entropy_estimate: float
    pmog_params: MogParams | None
    restarts: int
    converged: bool
    objective_trace: np.ndarray | None = None


@dataclass(frozen=True)
class BssResult:
    """Unmixing rows, recovered sources and per-source diagnostics.

    ``W`` is q x q for a complete extraction (fewer rows in the partial
    result attached to an ExtractionFailed error).
    """

    W: np.ndarray
    S_hat: np.ndarray
    mode: str
    per_source: tuple[SourceDiagnostics, ...]
    correlation_penalty: float


def duplicate_check(w_new, W_prev, threshold: float = DUPLICATE_THRESHOLD) -> bool:
    """True when the candidate projection nearly repeats a previous row
    (max absolute cosine strictly above the threshold)."""
    W_prev = np.atleast_2d(np.asarray(W_prev, dtype=float))
    if W_prev.size == 0:
        return False
    return bool(np.max(np.abs(W_prev @ np.asarray(w_new, dtype=float))) > threshold)


def _best_fit(Z, cs, priors, config, stream, fits_per_source, w_init_cs=None):
    """Run independent fits on derived seed streams, keep the best final
    objective. Returns (fit or None, attempts_failed, next stream index)."""
    best = None
    failures = 0
    for _ in range(fits_per_source):
        cfg = derived_config(config, stream)
        stream += 1
        rng = np.random.default_rng(cfg.seed)
        w_init = None
        if w_init_cs is not None:
            w_init = random_constrained_unit(w_init_cs, rng)
        try:
            fit = fit_pmog(Z, cs, priors, cfg, rng=rng, w_init=w_init)
        except PmogError:
            failures += 1
            continue
        if best is None or fit.objective_trace[-1] > best.objective_trace[-1]:
            best = fit
    return best, failures, stream


def _partial_result(mode, rows, diags, Z) -> BssResult:
    W = np.vstack(rows) if rows else np.zeros((0, Z.q))
    S = W @ Z.values
    return BssResult(
        W=W,
        S_hat=S,
        mode=mode,
        per_source=tuple(diags),
        correlation_penalty=float("nan"),
    )


def _pmog_diag(Z, fit) -> SourceDiagnostics:
    u = fit.w @ Z.values
    return SourceDiagnostics(
        entropy_estimate=pmog_entropy(u, fit.params),
        pmog_params=fit.params,
        restarts=fit.restarts_used,
        converged=fit.converged,
        objective_trace=fit.objective_trace,
    )


def extract_sources(
    Z: DataMatrix,
    mode: str,
    em_config: EmConfig,
    priors: PriorConfig | None = None,
    rng: np.random.Generator | None = None,
    fits_per_source: int = FITS_PER_SOURCE,
    duplicate_threshold: float = DUPLICATE_THRESHOLD,
    max_duplicate_retries: int = MAX_DUPLICATE_RETRIES,
) -> BssResult:
    """Extract all q sources from whitened data.

    Every mixture fit runs ``fits_per_source`` times on independent seed
    streams derived from ``em_config.seed`` and the best final objective
    wins, so results are reproducible per seed regardless of scheduling.
    Raises ExtractionFailed (carrying the partial result) when a source
    exhausts its retry budget.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    q = Z.q

    if mode in ("fica_defl", "fica_symm"):
        if rng is None:
            rng = np.random.default_rng(em_config.seed)
        fica_mode = "defl" if mode == "fica_defl" else "symm"
        try:
            W = fica_extract(Z, q, fica_mode, rng)
            flags = np.ones(q, dtype=bool)
        except NotConverged as exc:
            W = exc.W
            flags = exc.converged
        S_hat = W @ Z.values
        try:
            penalty = correlation_penalty(S_hat)
        except SingularCorrelation:
            penalty = float("nan")  # unestimated rows in a flagged result
        diags = []
        for m in range(q):
            row = S_hat[m] - S_hat[m].mean()
            var = float(row.var())
            ent = hyvarinen_entropy(row, var) if var > 0.0 else float("nan")
            diags.append(
                SourceDiagnostics(
                    entropy_estimate=ent,
                    pmog_params=None,
                    restarts=0,
                    converged=bool(flags[m]),
                )
            )
        return BssResult(
            W=W,
            S_hat=S_hat,
            mode=mode,
            per_source=tuple(diags),
            correlation_penalty=penalty,
        )

    rows: list[np.ndarray] = []
    diags: list[SourceDiagnostics] = []
    stream = 0
    for m in range(q):
        G = np.column_stack(rows) if rows else np.zeros((q, 0))
        if mode == "orthogonal":
            cs = ConstraintSet(G)
            fit, _, stream = _best_fit(
                Z, cs, priors, em_config, stream, fits_per_source
            )
            if fit is None:
                raise ExtractionFailed(m, partial=_partial_result(mode, rows, diags, Z))
        else:
            cs = ConstraintSet.unconstrained(q)
            init_cs = ConstraintSet(G)
            fit = None
            for _ in range(max_duplicate_retries + 1):
                cand, _, stream = _best_fit(
                    Z, cs, priors, em_config, stream, fits_per_source,
                    w_init_cs=init_cs,
                )
                if cand is None:
                    continue
                if not duplicate_check(cand.w, rows, duplicate_threshold):
                    fit = cand
                    break
                init_cs = ConstraintSet.unconstrained(q)  # retries roam freely
            if fit is None:
                raise ExtractionFailed(m, partial=_partial_result(mode, rows, diags, Z))
        rows.append(fit.w)
        diags.append(_pmog_diag(Z, fit))

    W = np.vstack(rows)
    S_hat = W @ Z.values
    return BssResult(
        W=W,
        S_hat=S_hat,
        mode=mode,
        per_source=tuple(diags),
        correlation_penalty=correlation_penalty(S_hat),
    )
