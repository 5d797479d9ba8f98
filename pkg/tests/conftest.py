"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from pmog_bss import DataMatrix, MogParams, Responsibilities
from pmog_bss.ppca import empirical_whiten


def random_mog_params(R, rng, mu_scale=3.0):
    pi = rng.uniform(0.2, 1.0, R)
    pi /= pi.sum()
    return MogParams(
        pi=pi,
        mu=rng.uniform(-mu_scale, mu_scale, R),
        sigma2=rng.uniform(0.3, 2.0, R),
    )


def random_responsibilities(R, n, rng):
    a = rng.uniform(0.05, 1.0, size=(R, n))
    a /= a.sum(axis=0, keepdims=True)
    return Responsibilities(a)


def planted_bimodal(q, n, seed, sep=2.0, width=0.3):
    """Whitened data with one bimodal row and q-1 Gaussian rows.

    Returns (whitened q x n matrix, the raw bimodal source row).
    """
    rng = np.random.default_rng(seed)
    s = np.where(rng.random(n) < 0.5, -sep, sep) + width * rng.standard_normal(n)
    rest = rng.standard_normal((q - 1, n))
    return empirical_whiten(np.vstack([s, rest])), s


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_data(rng):
    return DataMatrix(rng.standard_normal((3, 50)))
