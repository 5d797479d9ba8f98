"""Evaluation statistics: Match metric, normality transform, Welch t-test.

The Student-t tail probability is computed here from the regularized
incomplete beta function (continued-fraction evaluation) so p-values do
not depend on any external statistics library.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import exp, lgamma, log, sqrt

import numpy as np
from scipy.special import ndtri

from .errors import ConstantRow, ShapeMismatch, ZeroVariance

_TINY = 1e-300


def _betacf(a: float, b: float, x: float, tol: float = 1e-14, max_iter: int = 500):
    """Continued fraction for the incomplete beta (modified Lentz scheme)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _TINY:
            d = _TINY
        c = 1.0 + aa / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(x: float, a: float, b: float) -> float:
    """I_x(a, b), accurate to about 1e-13 absolute."""
    if a <= 0.0 or b <= 0.0:
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (
        lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log(1.0 - x)
    )
    front = exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, dof: float) -> float:
    """P(T <= t) for Student's t with ``dof`` degrees of freedom."""
    if dof <= 0.0:
        raise ValueError("dof must be positive")
    if t == 0.0:
        return 0.5
    tail = 0.5 * regularized_incomplete_beta(dof / (dof + t * t), 0.5 * dof, 0.5)
    return 1.0 - tail if t > 0.0 else tail


def student_t_two_sided_p(t: float, dof: float) -> float:
    """Two-sided p-value, P(|T| >= |t|)."""
    if dof <= 0.0:
        raise ValueError("dof must be positive")
    if t == 0.0:
        return 1.0
    return regularized_incomplete_beta(dof / (dof + t * t), 0.5 * dof, 0.5)


@dataclass(frozen=True)
class MatchReport:
    """Per-run Match values for two methods plus the paired comparison."""

    match_a: np.ndarray
    match_b: np.ndarray
    transformed_a: np.ndarray
    transformed_b: np.ndarray
    t_stat: float
    dof: float
    p_value: float
    note: str | None = None


def _standardized_rows(M: np.ndarray, which: str) -> np.ndarray:
    Mc = M - M.mean(axis=1, keepdims=True)
    sd = np.sqrt((Mc * Mc).mean(axis=1))
    if np.any(sd <= 0.0):
        raise ConstantRow(f"{which} has a constant row")
    return Mc / sd[:, None]


def match_score(A: np.ndarray, B: np.ndarray) -> float:
    """Mean over rows of A of the best absolute correlation with a row of B.

    Absolute correlations within 1e-12 of 1 are treated as exact matches
    (they are indistinguishable at double precision), so a signed row
    permutation of A scores exactly 1.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.shape[1] != B.shape[1]:
        raise ShapeMismatch("A and B must have the same number of columns")
    if A.shape[1] < 2:
        raise ValueError("need at least two samples per row")
    As = _standardized_rows(A, "A")
    Bs = _standardized_rows(B, "B")
    corr = np.abs(As @ Bs.T) / A.shape[1]
    corr = np.where(corr >= 1.0 - 1e-12, 1.0, corr)
    return float(np.mean(np.max(corr, axis=1)))


def _average_ranks(x: np.ndarray) -> np.ndarray:
    """1-based ranks with ties sharing the average rank."""
    m = x.size
    order = np.argsort(x, kind="stable")
    ranks = np.empty(m)
    sx = x[order]
    i = 0
    while i < m:
        j = i
        while j + 1 < m and sx[j + 1] == sx[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def to_normality(x: np.ndarray) -> np.ndarray:
    """Rank-based transform to normality.

    Rank r maps through the standard normal inverse CDF at (r - 0.5) / m;
    the result is rescaled to the sample mean and standard deviation of x.
    """
    x = np.asarray(x, dtype=float).ravel()
    m = x.size
    if m < 3:
        raise ValueError("need at least three values")
    y = ndtri((_average_ranks(x) - 0.5) / m)
    sd_y = float(y.std())
    if sd_y == 0.0:  # all values tied
        return np.full(m, float(x.mean()))
    return float(x.mean()) + float(x.std()) * (y - y.mean()) / sd_y


def welch_t_test(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    """Unequal-variance two-sample t-test.

    Returns (t, dof, two-sided p). Raises ZeroVariance when either sample
    has no spread, since the statistic is then undefined.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size < 2 or y.size < 2:
        raise ValueError("need at least two values per sample")
    vx = float(x.var(ddof=1))
    vy = float(y.var(ddof=1))
    if vx <= 0.0 or vy <= 0.0:
        raise ZeroVariance("a sample has zero variance")
    ax = vx / x.size
    ay = vy / y.size
    se2 = ax + ay
    t = (float(x.mean()) - float(y.mean())) / sqrt(se2)
    dof = se2 * se2 / (ax * ax / (x.size - 1) + ay * ay / (y.size - 1))
    return t, dof, student_t_two_sided_p(t, dof)


def compare_matches(match_a, match_b) -> MatchReport:
    """Transform both Match vectors to normality and compare their means.

    Degenerate inputs (zero spread, e.g. both methods perfect on every
    run) are reported with t = 0, p = 1 and an explanatory note instead of
    an error.
    """
    match_a = np.asarray(match_a, dtype=float).ravel()
    match_b = np.asarray(match_b, dtype=float).ravel()
    if match_a.size == 2:
        # the rank transform of two points reproduces them exactly
        ta, tb = match_a, match_b
    else:
        ta = to_normality(match_a)
        tb = to_normality(match_b)
    try:
        t, dof, p = welch_t_test(ta, tb)
        note = None
    except ZeroVariance:
        t, dof, p = 0.0, float("nan"), 1.0
        note = "degenerate: identical"
    return MatchReport(
        match_a=match_a,
        match_b=match_b,
        transformed_a=ta,
        transformed_b=tb,
        t_stat=t,
        dof=dof,
        p_value=p,
        note=note,
    )
