"""Closed-form privacy bounds and the Gaussian-DP accountant.

Covers: the tight and loose DP -> TV-stability conversions, the
mutual-information comparison line, subsampled-DP amplification, the CLT
Gaussian-DP parameter for Poisson-subsampled noisy SGD, mu <-> (eps, delta)
conversion, and the hypothesis-testing feasibility check for (eps, delta)-DP.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .numerics import std_normal_cdf


@dataclass(frozen=True)
class DpBudget:
    eps: float
    delta: float

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError(f"eps must be >= 0, got {self.eps}")
        if not 0 <= self.delta <= 1:
            raise ValueError(f"delta must be in [0, 1], got {self.delta}")


@dataclass(frozen=True)
class GdpGuarantee:
    """Gaussian DP, parameterized by a single mu >= 0 (0 is perfect privacy)."""
    mu: float

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")


@dataclass(frozen=True)
class PrivacyReport:
    budget: DpBudget
    gdp: GdpGuarantee | None
    tv_stability: float
    dg_bound: float
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        # TV stability transfers one-to-one to the distributional-
        # generalization bound.
        if abs(self.tv_stability - self.dg_bound) > 1e-12:
            raise ValueError("dg_bound must equal tv_stability")
        if not 0 <= self.tv_stability <= 1:
            raise ValueError("tv_stability must lie in [0, 1]")

    def to_json(self):
        return json.dumps({
            "eps": self.budget.eps,
            "delta": self.budget.delta,
            "gdp_mu": self.gdp.mu if self.gdp else None,
            "tv_stability": self.tv_stability,
            "dg_bound": self.dg_bound,
            "provenance": self.provenance,
        }, indent=2)


def tv_from_dp(b):
    """Tight TV stability of an (eps, delta)-DP algorithm:
    (e^eps - 1 + 2 delta) / (e^eps + 1)."""
    v = (math.exp(b.eps) - 1.0 + 2.0 * b.delta) / (math.exp(b.eps) + 1.0)
    assert 0.0 <= v <= 1.0
    return v


def tv_from_dp_loose(b):
    """Classical loose conversion e^eps - 1 + delta.

    Reported uncapped; values > 1 are vacuous (see :func:`is_vacuous`).
    """
    return math.exp(b.eps) - 1.0 + b.delta


def is_vacuous(tv_value):
    return tv_value > 1.0


def dg_bound_cmi(eps):
    """Mutual-information-style comparison line: the generalization bound is
    eps itself."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    return eps


def amplify_subsampled_dp(b, p_star):
    """Amplification by Poisson subsampling with max inclusion probability
    p_star: (ln(1 - p* + p* e^eps), p* delta)."""
    if not 0 <= p_star <= 1:
        raise ValueError(f"p_star must be in [0, 1], got {p_star}")
    eps = math.log(1.0 - p_star + p_star * math.exp(b.eps))
    return DpBudget(eps, p_star * b.delta)


def gdp_mu_dpsgd(pbar, sigma, steps):
    """CLT approximation for T-fold composition of the Poisson-subsampled
    Gaussian mechanism: mu = pbar * sqrt(T * (e^{1/sigma^2} - 1)).

    The clipping norm does not enter: the noise std is sigma * C against
    sensitivity C, so the ratio cancels.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not 0 <= pbar <= 1:
        raise ValueError(f"pbar must be in [0, 1], got {pbar}")
    mu = pbar * math.sqrt(steps * math.expm1(1.0 / sigma ** 2))
    return GdpGuarantee(mu)


def gdp_mu_dpis(plan, sigma, steps):
    """GDP guarantee for non-uniform Poisson subsampling: the uniform
    accountant evaluated at the maximum inclusion probability p*."""
    return gdp_mu_dpsgd(plan.p_star, sigma, steps)


def gdp_to_delta(g, eps):
    """delta(eps) = Phi(-eps/mu + mu/2) - e^eps * Phi(-eps/mu - mu/2),
    clamped to [0, 1]."""
    if eps < 0:
        raise ValueError(f"eps must be >= 0, got {eps}")
    mu = g.mu
    if mu == 0.0:
        return 0.0
    v = (std_normal_cdf(-eps / mu + mu / 2.0)
         - math.exp(eps) * std_normal_cdf(-eps / mu - mu / 2.0))
    return min(1.0, max(0.0, v))


def gdp_to_eps(g, delta, tol=1e-9):
    """Smallest eps >= 0 with gdp_to_delta(g, eps) <= delta, by bisection."""
    if not 0 < delta < 1:
        raise ValueError(f"delta must be in (0, 1), got {delta}")
    if g.mu == 0.0 or gdp_to_delta(g, 0.0) <= delta:
        return 0.0
    lo, hi = 0.0, 1.0
    while gdp_to_delta(g, hi) > delta:
        hi *= 2.0
        if hi > 1e6:
            raise ArithmeticError("failed to bracket eps")
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gdp_to_delta(g, mid) <= delta:
            hi = mid
        else:
            lo = mid
    return hi


def ht_region_ok(alpha, beta, b, tol=1e-12):
    """Feasibility of a hypothesis test with error rates (alpha, beta) under
    (eps, delta)-DP: alpha + e^eps beta >= 1 - delta and symmetrically."""
    if not 0 <= alpha <= 1 or not 0 <= beta <= 1:
        raise ValueError("alpha and beta must lie in [0, 1]")
    e = math.exp(b.eps)
    return (alpha + e * beta >= 1.0 - b.delta - tol
            and e * alpha + beta >= 1.0 - b.delta - tol)


def report_for_budget(budget, gdp=None, provenance=None):
    tv = tv_from_dp(budget)
    return PrivacyReport(budget, gdp, tv, tv, provenance or {})
