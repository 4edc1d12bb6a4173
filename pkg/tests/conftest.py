import os

import numpy as np
import pytest
from scipy.special import logsumexp

from modelspace import Dataset, ModelIndex, log_bf_value, make_dataset, sse_direct
from modelspace.errors import DataError


def synth_dataset(N, p, active=(), betas=(), noise=1.0, seed=0) -> Dataset:
    """Gaussian design with a sparse true signal."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((N, p))
    beta = np.zeros(p)
    for j, b in zip(active, betas):
        beta[j] = b
    y = X @ beta + noise * rng.standard_normal(N)
    return make_dataset(y, X, [f"x{j}" for j in range(p)])


def naive_enumeration(data: Dataset, g: float):
    """Full-refit enumeration of all 2^p models: the independent oracle.

    Returns (log_bfs array indexed by bitmask, log-sum of BFs, exact
    inclusion probabilities, exact dimension posterior, hpm bitmask).
    Rank-deficient or saturated models get log BF -inf.
    """
    p = data.p
    n_models = 1 << p
    lbfs = np.full(n_models, -np.inf)
    for bits in range(n_models):
        m = ModelIndex.from_bits(bits)
        try:
            sse = sse_direct(data, m)
        except DataError:
            continue
        lbfs[bits] = log_bf_value(sse, m.k, data.sse0, data.N, g)
    log_total = logsumexp(lbfs)
    incl = np.empty(p)
    for l in range(p):
        members = [b for b in range(n_models) if (b >> l) & 1]
        incl[l] = np.exp(logsumexp(lbfs[members]) - log_total)
    dim = np.zeros(p + 1)
    for bits in range(n_models):
        if np.isfinite(lbfs[bits]):
            dim[bits.bit_count()] += np.exp(lbfs[bits] - log_total)
    finite = np.where(np.isfinite(lbfs))[0]
    hpm_bits = int(finite[np.lexsort((finite, -lbfs[finite]))[0]])
    return lbfs, float(log_total), incl, dim, hpm_bits


@pytest.fixture(scope="session")
def p10_data() -> Dataset:
    # moderate signal so no inclusion probability is pinned at 0 or 1
    return synth_dataset(
        N=50, p=10, active=(1, 4, 7), betas=(0.45, -0.55, 0.35), seed=20240601
    )


@pytest.fixture(scope="session")
def p8_data() -> Dataset:
    return synth_dataset(
        N=40, p=8, active=(0, 3, 6), betas=(0.5, -0.4, 0.35), seed=77
    )


@pytest.fixture(scope="session")
def p8_naive(p8_data):
    return naive_enumeration(p8_data, float(p8_data.N))


@pytest.fixture(scope="session")
def p10_naive(p10_data):
    return naive_enumeration(p10_data, float(p10_data.N))


def ozone_csv_path():
    path = os.environ.get("MODELSPACE_OZONE_CSV")
    if path and os.path.exists(path):
        return path
    here = os.path.join(os.path.dirname(__file__), "data", "ozone.csv")
    if os.path.exists(here):
        return here
    return None
