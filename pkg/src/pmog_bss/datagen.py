"""Synthetic data generation for the mixture-source benchmark.

Sources are 1-D Gaussian mixtures with fractions drawn uniform and
normalized, means uniform on (-10, 10) and variances uniform on (1, 5);
the whitened sources are then embedded by entrywise-uniform mixing
matrices, once per run. Mixing is noise free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mog import MogParams
from .ppca import empirical_whiten

MU_RANGE = (-10.0, 10.0)
SIGMA2_RANGE = (1.0, 5.0)


def draw_source_params(
    R: int,
    rng: np.random.Generator,
    mu_range=MU_RANGE,
    sigma2_range=SIGMA2_RANGE,
) -> MogParams:
    """Random mixture parameters from the benchmark's uniform ranges."""
    pi = rng.uniform(0.0, 1.0, size=R)
    pi /= pi.sum()
    mu = rng.uniform(*mu_range, size=R)
    sigma2 = rng.uniform(*sigma2_range, size=R)
    return MogParams(pi=pi, mu=mu, sigma2=sigma2)


def sample_mog(params: MogParams, n: int, rng: np.random.Generator) -> np.ndarray:
    """n draws from a 1-D mixture."""
    comp = rng.choice(params.R, size=n, p=params.pi)
    return params.mu[comp] + np.sqrt(params.sigma2[comp]) * rng.standard_normal(n)


def generate_whitened_sources(
    q: int,
    n: int,
    R: int,
    rng: np.random.Generator,
    mu_range=MU_RANGE,
    sigma2_range=SIGMA2_RANGE,
) -> tuple[np.ndarray, list[MogParams]]:
    """q independent mixture sources, empirically whitened to zero mean and
    identity covariance. Returns (q x n matrix, per-source parameters)."""
    params = [
        draw_source_params(R, rng, mu_range, sigma2_range) for _ in range(q)
    ]
    S = np.vstack([sample_mog(par, n, rng) for par in params])
    return empirical_whiten(S), params


def random_mixing(p: int, q: int, rng: np.random.Generator) -> np.ndarray:
    """p x q mixing matrix with entries uniform on (0, 1)."""
    return rng.uniform(0.0, 1.0, size=(p, q))


@dataclass(frozen=True)
class ExperimentData:
    """One whitened source set and its m mixed embeddings."""

    sources: np.ndarray            # q x n, whitened
    mixings: tuple[np.ndarray, ...]  # each p x q
    mixed: tuple[np.ndarray, ...]    # each p x n


def make_experiment_dataset(
    q: int,
    n: int,
    R: int,
    p: int,
    m_runs: int,
    seed: int,
    mu_range=MU_RANGE,
    sigma2_range=SIGMA2_RANGE,
) -> ExperimentData:
    """Sources from stream ``seed``; run j's mixing from stream seed + 1 + j,
    so runs can be regenerated independently."""
    if p < q:
        raise ValueError("need p >= q")
    rng = np.random.default_rng(seed)
    sources, _ = generate_whitened_sources(q, n, R, rng, mu_range, sigma2_range)
    mixings = []
    mixed = []
    for j in range(m_runs):
        A = random_mixing(p, q, np.random.default_rng(seed + 1 + j))
        mixings.append(A)
        mixed.append(A @ sources)
    return ExperimentData(
        sources=sources, mixings=tuple(mixings), mixed=tuple(mixed)
    )
