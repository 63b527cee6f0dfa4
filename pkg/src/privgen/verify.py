"""Theory-verification suite: checks the closed-form bounds against exact
enumeration oracles and Monte-Carlo estimates on toy learners.

Each claim reports (id, lhs, rhs, tolerance, pass); the suite is hermetic
(no files, no network).
"""

from __future__ import annotations

import math

import numpy as np

from . import mechanisms as mech
from . import privacy
from .numerics import RngStream

EPS_GRID = [0.01, 0.1, 0.5, 1.0, 2.0, 3.0]
DELTA_GRID = [0.0, 0.01, 0.1]


def _claim(cid, lhs, rhs, tol, ok):
    return {"claim": cid, "lhs": float(lhs), "rhs": float(rhs),
            "tolerance": float(tol), "pass": bool(ok)}


def claim_tight_tv_exact():
    worst = 0.0
    for eps in EPS_GRID:
        for delta in DELTA_GRID:
            m = mech.reduced_mechanism(eps, delta)
            tv = mech.tv_discrete(m.p0, m.p1)
            want = privacy.tv_from_dp(privacy.DpBudget(eps, delta))
            worst = max(worst, abs(tv - want))
    return _claim("reduced-mechanism-tv-matches-tight-bound",
                  worst, 0.0, 1e-12, worst <= 1e-12)


def claim_reduced_mech_is_dp():
    ok = all(
        mech.verify_dp(mech.reduced_mechanism(eps, delta),
                       privacy.DpBudget(eps, delta))
        for eps in EPS_GRID for delta in DELTA_GRID)
    return _claim("reduced-mechanism-satisfies-claimed-dp",
                  float(ok), 1.0, 0.0, ok)


def claim_reduced_mech_dp_is_exact(shrink=0.99):
    # Shrinking the budget must break the check (the guarantee is exact).
    ok = all(
        not mech.verify_dp(mech.reduced_mechanism(eps, delta),
                           privacy.DpBudget(shrink * eps, shrink * delta))
        for eps in EPS_GRID for delta in DELTA_GRID)
    return _claim("reduced-mechanism-dp-is-exact-at-budget",
                  float(ok), 1.0, 0.0, ok)


def claim_bound_ordering():
    eps_grid = np.linspace(0.02, 5.0, 250)
    ok = True
    for eps in eps_grid:
        b = privacy.DpBudget(float(eps), 0.0)
        tight = privacy.tv_from_dp(b)
        loose = privacy.tv_from_dp_loose(b)
        cmi = privacy.dg_bound_cmi(float(eps))
        ok &= tight < loose and tight < cmi
    return _claim("tight-bound-dominates-loose-and-cmi",
                  float(ok), 1.0, 0.0, ok)


def claim_dg_exact_rr_majority():
    learner = mech.rr_majority_learner(math.log(3.0), 3)
    gap = mech.dg_exact(learner, 0.5, mech.phi_zero_one)
    ok = abs(gap - 0.125) <= 1e-12 and gap <= math.tanh(math.log(3.0) / 2.0)
    return _claim("dg-exact-equals-enumeration-value", gap, 0.125, 1e-12, ok)


def claim_dg_monte_carlo_matches_exact(rng, trials=10_000):
    learner = mech.rr_majority_learner(math.log(3.0), 3)
    est, se = mech.dg_monte_carlo(learner, 0.5, 3, trials,
                                  mech.phi_zero_one, rng)
    ok = abs(est - 0.125) <= 3.0 * se
    return _claim("dg-monte-carlo-within-3se-of-exact", est, 0.125,
                  3.0 * se, ok)


def claim_strong_dg_markov(rng, trials=10_000, lam=4.0):
    learner = mech.rr_majority_learner(math.log(3.0), 5)
    est, se, gaps = mech.strong_dg_monte_carlo(
        learner, 0.5, 5, trials, mech.phi_zero_one, rng, return_samples=True)
    frac = float(np.mean(gaps > lam * est))
    bound = 1.0 / lam + 3.0 * se
    return _claim("strong-dg-markov-tail-bound", frac, bound, 0.0,
                  frac <= bound)


def claim_subgroup_dg_bound(rng, trials=10_000):
    eps = math.log(3.0)
    learner = mech.rr_majority_learner(eps, 5)
    dist = mech.group_label_mixture([0.7, 0.3], [0.5, 0.5])
    est, se = mech.subgroup_dg_monte_carlo(
        learner, dist, 1, 5, trials, mech.phi_zero_one, rng)
    bound = math.tanh(eps / 2.0) + 3.0 * se
    return _claim("subgroup-dg-within-tv-stability-bound", est, bound, 0.0,
                  est <= bound)


def claim_calibration_bound(rng, trials=10_000):
    learner = mech.rr_frequency_learner(math.log(3.0), 4)
    res = mech.calibration_bound_check(learner, 0.5, 4, 0.25, trials, rng)
    return _claim("calibration-gap-bounded-by-strong-dg-over-tau",
                  res["lhs"], res["rhs"], 3.0 * res["lhs_se"], res["pass"])


def claim_ht_region_equality():
    # The optimal test for the reduced mechanism sits exactly on one of the
    # feasibility constraints.
    ok = True
    worst = 0.0
    for eps in [0.5, 1.0, 2.0]:
        for delta in [0.0, 0.05]:
            b = privacy.DpBudget(eps, delta)
            m = mech.reduced_mechanism(eps, delta)
            alpha, beta = mech.optimal_test_errors(m)
            ok &= privacy.ht_region_ok(alpha, beta, b)
            e = math.exp(eps)
            slack = min(abs(alpha + e * beta - (1 - delta)),
                        abs(e * alpha + beta - (1 - delta)))
            worst = max(worst, slack)
    ok &= worst <= 1e-12
    return _claim("optimal-test-achieves-ht-constraint-equality",
                  worst, 0.0, 1e-12, ok)


def claim_tv_bound_on_random_mechanisms(rng, count=500):
    ok = True
    for _ in range(count):
        k = int(rng.integers(2, 6))
        p0 = rng.uniform(k) + 1e-3
        p1 = rng.uniform(k) + 1e-3
        p0, p1 = p0 / p0.sum(), p1 / p1.sum()
        m = mech.DiscreteMechanism(p0, p1)
        eps = float(rng.uniform() * 2.0)
        delta = float(rng.uniform() * 0.2)
        b = privacy.DpBudget(eps, delta)
        if mech.verify_dp(m, b):
            ok &= (mech.tv_discrete(p0, p1)
                   <= privacy.tv_from_dp(b) + 1e-12)
    return _claim("verified-dp-implies-tight-tv-bound",
                  float(ok), 1.0, 1e-12, ok)


def run_suite(seed=0):
    rng = RngStream(seed)
    streams = rng.split(6)
    claims = [
        claim_tight_tv_exact(),
        claim_reduced_mech_is_dp(),
        claim_reduced_mech_dp_is_exact(),
        claim_bound_ordering(),
        claim_dg_exact_rr_majority(),
        claim_dg_monte_carlo_matches_exact(streams[0]),
        claim_strong_dg_markov(streams[1]),
        claim_subgroup_dg_bound(streams[2]),
        claim_calibration_bound(streams[3]),
        claim_ht_region_equality(),
        claim_tv_bound_on_random_mechanisms(streams[4]),
    ]
    return claims
