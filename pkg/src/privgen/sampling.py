"""Batch construction: uniform and non-uniform Poisson subsampling,
importance resampling, and importance weights.

Group-aware sampling probabilities follow p(z) = pbar / (m * q_g), which
keeps the expected batch size at pbar * n when the empirical group fractions
equal q, while upweighting minority groups.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class InfeasiblePlanError(ValueError):
    """Some example would need inclusion probability > 1; the caller must
    lower pbar (capping would silently change p* and the privacy accounting)."""


@dataclass(frozen=True)
class SamplingPlan:
    probs: np.ndarray      # per-example inclusion probabilities
    pbar: float            # nominal mean rate

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        object.__setattr__(self, "probs", probs)
        if np.any(probs < 0) or np.any(probs > 1):
            raise ValueError("inclusion probabilities must lie in [0, 1]")

    @property
    def p_star(self):
        return float(self.probs.max())

    @property
    def expected_batch_size(self):
        return float(self.probs.sum())


def uniform_plan(n, pbar):
    """Every example included with probability pbar (standard DP-SGD)."""
    if not 0 <= pbar <= 1:
        raise ValueError(f"pbar must be in [0, 1], got {pbar}")
    return SamplingPlan(np.full(n, float(pbar)), float(pbar))


def is_sampling_probs(groups, q, pbar):
    """Importance-sampling plan: p(z_i) = pbar / (m * q_{g_i})."""
    groups = np.asarray(groups, dtype=np.int64)
    q = np.asarray(q, dtype=np.float64)
    if pbar <= 0:
        raise ValueError(f"pbar must be > 0, got {pbar}")
    if np.any(q <= 0):
        raise ValueError("all group probabilities must be > 0")
    m = q.size
    per_group = pbar / (m * q)
    if np.any(per_group > 1):
        g = int(np.argmax(per_group))
        raise InfeasiblePlanError(
            f"group {g} (q={q[g]:g}) would need inclusion probability "
            f"{per_group[g]:g} > 1; reduce pbar")
    return SamplingPlan(per_group[groups], float(pbar))


def poisson_sample(plan, rng):
    """Independent Bernoulli inclusion per index; may return an empty set."""
    u = rng.uniform(plan.probs.size)
    return np.flatnonzero(u < plan.probs)


def importance_weights(groups, q):
    """Per-example weights w_i = 1 / (m * q_{g_i})."""
    groups = np.asarray(groups, dtype=np.int64)
    q = np.asarray(q, dtype=np.float64)
    if np.any(q <= 0):
        raise ValueError("all group probabilities must be > 0")
    return 1.0 / (q.size * q[groups])


def importance_resample(groups, q, batch_size, rng):
    """batch_size draws with replacement, example i with probability
    proportional to 1 / (m * q_{g_i})."""
    if batch_size < 1:
        raise ValueError(f"batch_size must be >= 1, got {batch_size}")
    w = importance_weights(groups, q)
    p = w / w.sum()
    return rng.choice(p.size, size=batch_size, p=p)
