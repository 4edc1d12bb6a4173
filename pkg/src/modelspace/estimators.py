"""Empirical (Hansen-Hurwitz) and renormalized estimators of posterior
quantities, plus the derived summaries: inclusion probabilities, HPM, MPM,
dimension posterior, top-K mass, and model-averaged prediction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from .bayesfactor import NEG_INF, GPriorSpec
from .errors import UsageError
from .linmodel import Dataset, ModelIndex, fit_model
from .sampler import ChainTrace

LOG10 = math.log(10.0)


@dataclass(frozen=True)
class QuantityOfInterest:
    """A posterior expectation target: tau(a) = sum_gamma a(M) Pr(M | y)."""

    evaluator: Callable[[ModelIndex], float]
    label: str


def indicator_of_variable(l: int) -> QuantityOfInterest:
    return QuantityOfInterest(lambda m: float(m.contains(l)), f"include[{l}]")


def indicator_of_dimension(k: int) -> QuantityOfInterest:
    return QuantityOfInterest(lambda m: float(m.k == k), f"dimension[{k}]")


def indicator_of_model(target: ModelIndex) -> QuantityOfInterest:
    return QuantityOfInterest(
        lambda m: float(m.bits == target.bits), f"model[{target.to_hex()}]"
    )


@dataclass(frozen=True)
class EstimateWithSE:
    value: float
    se: float | None
    method: str  # "empirical" | "renormalized" | "exact"
    n_used: int


@dataclass
class PosteriorSummary:
    inclusion: list[EstimateWithSE]
    hpm: ModelIndex
    hpm_log_bf: float
    mpm: ModelIndex
    dimension: list[EstimateWithSE]
    top_models: list[tuple[ModelIndex, float]]
    mass_log10: float
    inclusion_renormalized: list[EstimateWithSE] = field(default_factory=list)


def hh_estimate(trace: ChainTrace, q: QuantityOfInterest) -> EstimateWithSE:
    """Hansen-Hurwitz estimate of tau(a) over a trace, with the unbiased
    variance estimate (1/(n(n-1))) sum (a_j - mean)^2."""
    if trace.n == 0:
        raise UsageError("empty trace")
    values = np.array([q.evaluator(m) for m in trace.models])
    return _hh_from_values(values)


def _hh_from_values(values: np.ndarray) -> EstimateWithSE:
    n = values.shape[0]
    mean = float(values.mean())
    if n == 1:
        return EstimateWithSE(mean, None, "empirical", 1)
    var = float(np.sum((values - mean) ** 2)) / (n * (n - 1))
    return EstimateWithSE(mean, math.sqrt(var), "empirical", n)


def _indicator_estimate(count: int, n: int) -> EstimateWithSE:
    q = count / n
    if n == 1:
        return EstimateWithSE(q, None, "empirical", 1)
    # For an indicator the var.tau formula collapses to q(1-q)/(n-1)
    return EstimateWithSE(q, math.sqrt(q * (1.0 - q) / (n - 1)), "empirical", n)


def hh_inclusion(trace: ChainTrace, p: int) -> list[EstimateWithSE]:
    """Per-variable inclusion frequencies q_hat_l with their SEs."""
    n = trace.n
    counts = [0] * p
    for m in trace.models:
        bits = m.bits
        j = 0
        while bits:
            if bits & 1:
                counts[j] += 1
            bits >>= 1
            j += 1
    return [_indicator_estimate(c, n) for c in counts]


def hh_dimension(trace: ChainTrace, p: int) -> list[EstimateWithSE]:
    """Posterior-dimension frequencies d_hat(k) for k = 0..p."""
    n = trace.n
    counts = [0] * (p + 1)
    for m in trace.models:
        counts[m.k] += 1
    return [_indicator_estimate(c, n) for c in counts]


def hh_predictive_mean(
    trace: ChainTrace,
    data: Dataset,
    xnew: np.ndarray,
    g: float | None = None,
) -> EstimateWithSE:
    """Model-averaged posterior predictive mean at a new covariate row.

    Per model, E(y_new | M, y) = ybar + (g/(1+g)) * xnew_centered[gamma] . beta_hat;
    the shrinkage factor uses the fixed g, or each draw's own g when g is None
    (hierarchical traces).
    """
    xnew = np.asarray(xnew, dtype=np.float64)
    if xnew.shape != (data.p,):
        raise UsageError(f"xnew must have {data.p} entries")
    xc = xnew - data.column_means

    # x . beta_hat is g-free; compute once per distinct model
    proj: dict[int, float] = {0: 0.0}

    def model_proj(m: ModelIndex) -> float:
        v = proj.get(m.bits)
        if v is None:
            state = fit_model(data, m)
            L = state.chol
            w = np.linalg.solve(L, state.xty)
            beta = np.linalg.solve(L.T, w)
            v = float(xc[state.active_array()] @ beta)
            proj[m.bits] = v
        return v

    gs = trace.g_draws if g is None else np.full(trace.n, float(g))
    values = np.array(
        [
            data.ybar + (gj / (1.0 + gj)) * model_proj(m)
            for m, gj in zip(trace.models, gs)
        ]
    )
    return _hh_from_values(values)


def dedupe_models(trace: ChainTrace) -> list[tuple[ModelIndex, float]]:
    """Distinct visited models with one cached log Bayes factor each.

    For hierarchical traces the cached value depends on the draw's g; the
    first visit's value is kept.
    """
    seen: dict[int, tuple[ModelIndex, float]] = {}
    for m, lbf in zip(trace.models, trace.log_bfs):
        if m.bits not in seen:
            seen[m.bits] = (m, float(lbf))
    return list(seen.values())


def renormalized_estimate(
    models: list[tuple[ModelIndex, float]],
    q: QuantityOfInterest,
    prior: GPriorSpec,
) -> EstimateWithSE:
    """Estimate of tau(a) weighting each distinct model by its Bayes factor
    renormalized within the visited set. No variance estimate exists for
    this estimator."""
    if not models:
        raise UsageError("empty model set")
    # uniform model prior: the prior term is a constant shift
    logw = np.array([lbf for _, lbf in models])
    total = logsumexp(logw)
    if not np.isfinite(total):
        raise UsageError("all models in the set are excluded (log BF = -inf)")
    w = np.exp(logw - total)
    value = float(sum(wi * q.evaluator(m) for (m, _), wi in zip(models, w)))
    return EstimateWithSE(value, None, "renormalized", len(models))


def find_hpm(models: list[tuple[ModelIndex, float]]) -> ModelIndex:
    """Model with the largest unnormalized log posterior; ties broken by
    ascending bitmask."""
    if not models:
        raise UsageError("empty model set")
    best = min(models, key=lambda t: (-t[1], t[0].bits))
    return best[0]


def find_mpm(inclusion: list[EstimateWithSE]) -> ModelIndex:
    """Median probability model: variables with inclusion strictly > 0.5."""
    bits = 0
    for l, est in enumerate(inclusion):
        if est.value > 0.5:
            bits |= 1 << l
    return ModelIndex.from_bits(bits)


def rank_models(
    models: list[tuple[ModelIndex, float]], K: int | None = None
) -> list[tuple[ModelIndex, float]]:
    """Distinct models sorted by decreasing log BF, ties by ascending bitmask."""
    ranked = sorted(models, key=lambda t: (-t[1], t[0].bits))
    return ranked if K is None else ranked[:K]


def topk_mass_log10(models: list[tuple[ModelIndex, float]], K: int) -> float:
    """Decimal log of the summed Bayes factors of the K best distinct models."""
    if not models:
        raise UsageError("empty model set")
    if K < 1:
        raise UsageError("K must be >= 1")
    top = rank_models(models, K)
    return float(logsumexp([lbf for _, lbf in top])) / LOG10


def summarize_trace(
    trace: ChainTrace, data: Dataset, prior: GPriorSpec, top_k: int = 1000
) -> PosteriorSummary:
    """Full posterior summary of one chain: empirical estimates with SEs,
    renormalized estimates over the deduplicated visited set, HPM/MPM and
    top-K mass."""
    p = data.p
    inclusion = hh_inclusion(trace, p)
    dimension = hh_dimension(trace, p)
    distinct = dedupe_models(trace)
    hpm = find_hpm(distinct)
    hpm_log_bf = next(lbf for m, lbf in distinct if m.bits == hpm.bits)
    mpm = find_mpm(inclusion)
    top = rank_models(distinct, top_k)
    mass = topk_mass_log10(distinct, top_k)
    renorm = [
        renormalized_estimate(distinct, indicator_of_variable(l), prior)
        for l in range(p)
    ]
    return PosteriorSummary(
        inclusion=inclusion,
        hpm=hpm,
        hpm_log_bf=hpm_log_bf,
        mpm=mpm,
        dimension=dimension,
        top_models=top,
        mass_log10=mass,
        inclusion_renormalized=renorm,
    )
