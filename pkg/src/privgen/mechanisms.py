"""Exact finite-distribution calculus and toy learners for verifying the
stability-to-generalization theory.

A DiscreteMechanism maps a binary input to a finite outcome distribution;
differential privacy of such a mechanism is checked exactly by enumerating
all outcome subsets.  ToyLearners are finite learning rules over binary
labels, small enough that every dataset can be enumerated, giving an exact
oracle for the Monte-Carlo estimators.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .privacy import DpBudget


@dataclass(frozen=True)
class DiscreteMechanism:
    """Outcome distributions of a mechanism on the two neighboring inputs."""
    p0: np.ndarray
    p1: np.ndarray

    def __post_init__(self):
        p0 = np.asarray(self.p0, dtype=np.float64)
        p1 = np.asarray(self.p1, dtype=np.float64)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "p1", p1)
        for v in (p0, p1):
            if np.any(v < 0) or abs(v.sum() - 1.0) > 1e-12:
                raise ValueError("outcome vectors must be distributions")
        if p0.shape != p1.shape:
            raise ValueError("outcome vectors must have equal length")

    @property
    def k(self):
        return self.p0.size


def tv_discrete(p, q):
    """Exact total-variation distance (1/2) sum |p_i - q_i|."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError("distributions must have equal length")
    return float(0.5 * np.abs(p - q).sum())


def reduced_mechanism(eps, delta):
    """The 4-outcome mechanism that achieves the tight DP-to-TV bound with
    equality: mass delta on a perfectly distinguishing outcome, the rest in
    the e^eps : 1 likelihood-ratio pattern."""
    if eps < 0 or not 0 <= delta <= 1:
        raise ValueError("need eps >= 0 and delta in [0, 1]")
    e = math.exp(eps)
    a = (1.0 - delta) * e / (e + 1.0)
    b = (1.0 - delta) / (e + 1.0)
    return DiscreteMechanism([0.0, a, b, delta], [delta, b, a, 0.0])


def verify_dp(mech, budget, tol=1e-12):
    """Exact (eps, delta)-DP check by enumeration of all 2^k outcome subsets."""
    if mech.k > 20:
        raise ValueError("subset enumeration limited to k <= 20 outcomes")
    e = math.exp(budget.eps)
    # Vectorized over all subsets: bit j of mask selects outcome j.
    masks = np.arange(2 ** mech.k)
    sel = (masks[:, None] >> np.arange(mech.k)[None, :]) & 1
    m0 = sel @ mech.p0
    m1 = sel @ mech.p1
    ok01 = np.all(m0 <= e * m1 + budget.delta + tol)
    ok10 = np.all(m1 <= e * m0 + budget.delta + tol)
    return bool(ok01 and ok10)


def optimal_test_errors(mech):
    """(alpha, beta) of the likelihood-ratio test K = {i : p1 > p0} for
    deciding that the input was 1: alpha = p0(K), beta = 1 - p1(K)."""
    K = mech.p1 > mech.p0
    return float(mech.p0[K].sum()), float(1.0 - mech.p1[K].sum())


# --- Toy learners over finite data distributions ------------------------

@dataclass(frozen=True)
class FiniteDistribution:
    """Finite set of example atoms with probabilities.  Each atom is a
    (group, label) pair; single-group worlds use group 0."""
    atoms: tuple            # tuple of (group, label)
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", p)
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("atom probabilities must form a distribution")
        if len(self.atoms) != p.size:
            raise ValueError("atoms/probs length mismatch")

    def sample(self, rng, size):
        idx = rng.choice(self.probs.size, size=size, p=self.probs)
        return [self.atoms[i] for i in np.atleast_1d(idx)]

    def group_conditional(self, g):
        mask = np.array([a[0] == g for a in self.atoms])
        mass = self.probs[mask].sum()
        if mass == 0:
            raise ValueError(f"group {g} has zero probability")
        atoms = tuple(a for a in self.atoms if a[0] == g)
        return FiniteDistribution(atoms, self.probs[mask] / mass)


def bernoulli_labels(q):
    """Single-group world with P(label 1) = q."""
    return FiniteDistribution(((0, 0), (0, 1)), [1.0 - q, q])


def group_label_mixture(group_probs, label_probs):
    """Mixture world: group g with probability group_probs[g], label 1 with
    probability label_probs[g] within the group."""
    atoms, probs = [], []
    for g, (qg, lp) in enumerate(zip(group_probs, label_probs)):
        atoms += [(g, 0), (g, 1)]
        probs += [qg * (1.0 - lp), qg * lp]
    return FiniteDistribution(tuple(atoms), probs)


@dataclass(frozen=True)
class ToyLearner:
    """Finite randomized learning rule: ``rule(labels)`` maps the tuple of
    training labels to a probability vector over ``outputs``."""
    n: int
    outputs: tuple
    rule: object            # callable: tuple of labels -> prob vector

    def output_dist(self, labels):
        p = np.asarray(self.rule(tuple(labels)), dtype=np.float64)
        if p.shape != (len(self.outputs),) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("rule must return a distribution over outputs")
        return p

    def sample_output(self, labels, rng):
        p = self.output_dist(labels)
        return self.outputs[int(rng.choice(p.size, p=p))]


def rr_majority_learner(eps, n):
    """Constant-classifier learner: output the majority training label,
    flipped with the randomized-response probability 1 / (1 + e^eps).

    Satisfies (eps, 0)-DP: one label change moves the majority by at most
    one likelihood-ratio step.
    """
    if n % 2 == 0:
        raise ValueError("n must be odd (unique majority)")
    if n > 20:
        raise ValueError("enumeration oracle limited to n <= 20")
    rho = 0.0 if math.isinf(eps) else 1.0 / (1.0 + math.exp(eps))

    def rule(labels):
        maj = 1 if sum(labels) * 2 > len(labels) else 0
        p = np.full(2, rho)
        p[maj] = 1.0 - rho
        return p

    return ToyLearner(n, (0, 1), rule)


def rr_frequency_learner(eps, n):
    """Probabilistic-classifier learner: output the empirical frequency of
    label 1 as a constant predicted probability, flipped to its complement
    with the randomized-response probability 1 / (1 + e^eps)."""
    rho = 0.0 if math.isinf(eps) else 1.0 / (1.0 + math.exp(eps))
    freqs = tuple(k / n for k in range(n + 1))
    outputs = tuple(sorted(set(freqs) | {1.0 - f for f in freqs}))
    index = {f: i for i, f in enumerate(outputs)}

    def rule(labels):
        f = sum(labels) / len(labels)
        p = np.zeros(len(outputs))
        p[index[f]] += 1.0 - rho
        p[index[1.0 - f]] += rho
        return p

    return ToyLearner(n, outputs, rule)


# --- Test functions -----------------------------------------------------

def phi_zero_one(z, theta):
    """0/1 loss of a constant classifier theta on atom z = (group, label)."""
    return float(theta != z[1])


def phi_constant(z, theta):
    return 0.5


def phi_calibration(p_edge, tau):
    """Bin test function: 1{f in [p, p + tau)} * (y - p), final bin closed."""
    def phi(z, theta):
        f = float(theta)
        if p_edge + tau >= 1.0 - 1e-12:
            inside = p_edge <= f <= 1.0
        else:
            inside = p_edge <= f < p_edge + tau
        return (z[1] - p_edge) if inside else 0.0
    return phi


def _test_mean(dist, theta, phi):
    return float(sum(p * phi(z, theta)
                     for z, p in zip(dist.atoms, dist.probs)))


# --- Exact and Monte-Carlo distributional-generalization estimators -----

def dg_exact(learner, dist, phi):
    """Exact train-vs-test gap |E_{S, z~S} phi - E_{S, z~D} phi| by
    enumerating every dataset and every learner output."""
    if isinstance(dist, float):
        dist = bernoulli_labels(dist)
    n = learner.n
    if len(dist.atoms) ** n > 2 ** 21:
        raise ValueError("dataset space too large to enumerate")
    train_total = 0.0
    test_total = 0.0
    atom_probs = dict(zip(dist.atoms, dist.probs))
    for S in itertools.product(dist.atoms, repeat=n):
        p_S = math.prod(atom_probs[z] for z in S)
        if p_S == 0.0:
            continue
        out = learner.output_dist([z[1] for z in S])
        for theta, p_t in zip(learner.outputs, out):
            if p_t == 0.0:
                continue
            w = p_S * p_t
            train_total += w * (sum(phi(z, theta) for z in S) / n)
            test_total += w * _test_mean(dist, theta, phi)
    return abs(train_total - test_total)


def dg_monte_carlo(learner, dist, n, trials, phi, rng):
    """Sampling estimator of the DG gap: per trial, a fresh dataset and
    learner output give the train average of phi, and one fresh example
    gives the test value.  Returns (estimate, standard error)."""
    if isinstance(dist, float):
        dist = bernoulli_labels(dist)
    if trials < 100:
        raise ValueError("need at least 100 trials")
    diffs = np.empty(trials)
    for t in range(trials):
        S = dist.sample(rng, n)
        theta = learner.sample_output([z[1] for z in S], rng)
        train_val = sum(phi(z, theta) for z in S) / n
        z_fresh = dist.sample(rng, 1)[0]
        diffs[t] = train_val - phi(z_fresh, theta)
    est = float(diffs.mean())
    se = float(diffs.std(ddof=1) / math.sqrt(trials))
    return abs(est), se


def strong_dg_monte_carlo(learner, dist, n, trials, phi, rng,
                          return_samples=False):
    """Monte-Carlo over datasets of the absolute per-dataset gap
    |E_{z~S} phi - E_{z~D} phi|, with the test expectation exact."""
    if isinstance(dist, float):
        dist = bernoulli_labels(dist)
    if trials < 100:
        raise ValueError("need at least 100 trials")
    gaps = np.empty(trials)
    for t in range(trials):
        S = dist.sample(rng, n)
        theta = learner.sample_output([z[1] for z in S], rng)
        train_val = sum(phi(z, theta) for z in S) / n
        gaps[t] = abs(train_val - _test_mean(dist, theta, phi))
    est = float(gaps.mean())
    se = float(gaps.std(ddof=1) / math.sqrt(trials))
    if return_samples:
        return est, se, gaps
    return est, se


class InsufficientTrialsError(RuntimeError):
    pass


def subgroup_dg_monte_carlo(learner, dist, group, n, trials, phi, rng,
                            min_conditioned=100):
    """Estimator of the group-conditional DG gap: the train expectation is
    restricted to group examples and conditioned on the group being
    represented; the test expectation (exact, group-conditional) is
    unconditional over datasets."""
    if trials < 100:
        raise ValueError("need at least 100 trials")
    cond = dist.group_conditional(group)
    train_vals = []
    test_vals = np.empty(trials)
    for t in range(trials):
        S = dist.sample(rng, n)
        theta = learner.sample_output([z[1] for z in S], rng)
        Sg = [z for z in S if z[0] == group]
        if Sg:
            train_vals.append(sum(phi(z, theta) for z in Sg) / len(Sg))
        test_vals[t] = _test_mean(cond, theta, phi)
    if len(train_vals) < min_conditioned:
        raise InsufficientTrialsError(
            f"only {len(train_vals)} trials had group-{group} examples")
    train_vals = np.array(train_vals)
    est = abs(float(train_vals.mean()) - float(test_vals.mean()))
    se = math.sqrt(train_vals.var(ddof=1) / train_vals.size
                   + test_vals.var(ddof=1) / trials)
    return est, se


def calibration_bound_check(learner, dist, n, tau, trials, rng):
    """Check that the train/test gap of the expected binned calibration gap
    is within delta / tau, where delta is the learner's measured strong-DG
    parameter over the per-bin test family.

    Returns a dict with lhs, rhs, their standard errors, and pass/fail at
    3 combined standard errors of slack.
    """
    if isinstance(dist, float):
        dist = bernoulli_labels(dist)
    k = round(1.0 / tau)
    if abs(k * tau - 1.0) > 1e-9:
        raise ValueError(f"tau must be a unit fraction, got {tau}")
    edges = [i * tau for i in range(k)]
    phis = [phi_calibration(p, tau) for p in edges]

    # Strong-DG parameter of the bin family: max over bins.
    delta = 0.0
    delta_se = 0.0
    for phi in phis:
        est, se = strong_dg_monte_carlo(learner, dist, n, trials, phi, rng)
        if est > delta:
            delta, delta_se = est, se

    # Expected binned calibration gap on train vs test, over fresh runs.
    train_cgaps = np.empty(trials)
    test_cgaps = np.empty(trials)
    for t in range(trials):
        S = dist.sample(rng, n)
        theta = learner.sample_output([z[1] for z in S], rng)
        tr = 0.0
        te = 0.0
        for phi in phis:
            tr += abs(sum(phi(z, theta) for z in S) / n)
            te += abs(_test_mean(dist, theta, phi))
        train_cgaps[t] = tr
        test_cgaps[t] = te
    lhs = abs(float(train_cgaps.mean()) - float(test_cgaps.mean()))
    lhs_se = math.sqrt(train_cgaps.var(ddof=1) / trials
                       + test_cgaps.var(ddof=1) / trials)
    rhs = delta / tau
    rhs_se = delta_se / tau
    combined_se = math.sqrt(lhs_se ** 2 + rhs_se ** 2)
    return {
        "lhs": lhs, "lhs_se": lhs_se,
        "rhs": rhs, "rhs_se": rhs_se,
        "pass": lhs <= rhs + 3.0 * combined_se,
    }
