"""Numerical foundation: seeded random streams, Gaussian sampling, normal CDF,
and a finite-difference gradient oracle.

All vectors and matrices are dense float64 numpy arrays.  Everything that
consumes randomness goes through :class:`RngStream`, so a run is a pure
function of its inputs and the seed.
"""

from __future__ import annotations

import math

import numpy as np


class RngStream:
    """Seeded random stream with deterministic splitting.

    Identical seed gives an identical sample sequence.  ``split(k)`` derives
    k statistically independent child streams with distinct deterministic
    sub-seeds (numpy ``SeedSequence.spawn``).
    """

    def __init__(self, seed, _seq=None):
        if _seq is not None:
            self._seq = _seq
        else:
            self._seq = np.random.SeedSequence(seed)
        self.gen = np.random.Generator(np.random.Philox(self._seq))

    @property
    def seed_entropy(self):
        return self._seq.entropy

    def split(self, k):
        """Derive k independent child streams."""
        return [RngStream(None, _seq=s) for s in self._seq.spawn(k)]

    def uniform(self, size=None):
        return self.gen.random(size)

    def integers(self, low, high=None, size=None):
        return self.gen.integers(low, high, size=size)

    def normal(self, size=None):
        return self.gen.standard_normal(size)

    def choice(self, n, size=None, p=None, replace=True):
        return self.gen.choice(n, size=size, p=p, replace=replace)

    def permutation(self, n):
        return self.gen.permutation(n)


def std_normal_cdf(x):
    """Standard normal CDF via erf; absolute error well below 1e-10.

    Saturates to exactly 0/1 for |x| > 40.
    """
    if x > 40.0:
        return 1.0
    if x < -40.0:
        return 0.0
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def gaussian_vector(rng, dim, std):
    """dim i.i.d. N(0, std^2) samples. std = 0 gives an exact zero vector."""
    if std < 0:
        raise ValueError(f"std must be >= 0, got {std}")
    if std == 0.0:
        return np.zeros(dim)
    return std * rng.normal(dim)


def finite_diff_grad(f, x, h=1e-5):
    """Central-difference gradient (f(x + h e_i) - f(x - h e_i)) / (2h)."""
    if h <= 0:
        raise ValueError(f"h must be > 0, got {h}")
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g
