"""Training algorithms: the SGD family (plain / importance-sampled /
importance-weighted, each with optional Gaussian gradient noise), DP-SGD,
DP-IS-SGD, and PGD adversarial training.

Conventions, recorded in every RunRecord:
  - The parameter update is descent, theta <- theta - lr * g.
  - DP noise with std sigma * C is added to the *averaged* clipped gradient.
  - The averaging divisor is the constant expected batch size (sum of the
    plan's inclusion probabilities), never the realized batch size: a
    data-dependent divisor would make the sensitivity data-dependent and
    break the accounting.  An empty Poisson batch is a pure-noise step and
    still consumes one accounting step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict

import numpy as np

from . import metrics, models, sampling
from .numerics import gaussian_vector
from .privacy import DpBudget, GdpGuarantee, gdp_mu_dpis, gdp_to_eps, report_for_budget

ALGORITHMS = ("SGD", "IS_SGD", "IW_SGD", "DP_SGD", "DP_IS_SGD", "ADV_PGD")


@dataclass(frozen=True)
class PgdConfig:
    gamma: float
    attack_steps: int = 10
    attack_step_size: float | None = None   # default gamma / 4
    random_start: bool = False


@dataclass(frozen=True)
class TrainConfig:
    algorithm: str
    lr: float
    steps: int
    batch_size: int | None = None     # with-replacement algorithms
    pbar: float | None = None         # Poisson algorithms
    clip: float | None = None         # DP algorithms: C > 0
    sigma: float | None = None        # DP noise multiplier (times C)
    sigma_n: float = 0.0              # plain additive gradient-noise std
    weight_decay: float = 0.0
    pgd: PgdConfig | None = None
    delta: float | None = None        # DP report target; default 1/(2n)
    seed: int = 0
    eval_every: int | None = None     # default ceil(steps / 50)

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm in ("DP_SGD", "DP_IS_SGD"):
            if not (self.clip and self.clip > 0):
                raise ValueError("DP algorithms require clip C > 0")
            if not (self.sigma and self.sigma > 0):
                raise ValueError("DP algorithms require sigma > 0")
            if self.pbar is None:
                raise ValueError("DP algorithms require a sampling rate pbar")
        if self.sigma_n < 0:
            raise ValueError("sigma_n must be >= 0")
        if self.algorithm == "ADV_PGD" and self.pgd is None:
            raise ValueError("ADV_PGD requires a pgd config")


@dataclass
class RunRecord:
    config: dict
    seed: int
    trajectory: list = field(default_factory=list)
    privacy: dict | None = None
    conventions: dict = field(default_factory=lambda: {
        "update_sign": "descent",
        "noise_applied_to": "averaged_gradient",
        "noise_std": "sigma*C",
        "divisor": "expected_batch_size",
        "accounting_unit": "steps",
    })

    def to_json(self):
        return json.dumps({
            "config": self.config, "seed": self.seed,
            "conventions": self.conventions,
            "privacy": self.privacy, "trajectory": self.trajectory,
        }, indent=2)

    def trajectory_csv(self):
        if not self.trajectory:
            return ""
        cols = list(self.trajectory[0])
        lines = [",".join(cols)]
        for row in self.trajectory:
            lines.append(",".join("" if row[c] is None else f"{row[c]}"
                                  for c in cols))
        return "\n".join(lines) + "\n"


def clip_grad(g, C):
    """Rescale g to norm at most C: g * 1/max{1, ||g|| / C}."""
    if C <= 0:
        raise ValueError(f"clip norm must be > 0, got {C}")
    norm = float(np.linalg.norm(g))
    if norm <= C:
        return g
    return g * (C / norm)


def _clip_rows(grads, C):
    norms = np.linalg.norm(grads, axis=1)
    factors = np.minimum(1.0, C / np.maximum(norms, 1e-300))
    return grads * factors[:, None]


def _eval_point(step, p, train_ds, test_ds, cfg):
    row = {"step": step}
    for name, ds in (("train", train_ds), ("test", test_ds)):
        if ds is None:
            continue
        gr = metrics.group_report(p, ds, num_groups=train_ds.num_groups)
        row[f"{name}_acc"] = gr.overall_acc
        for g in range(gr.group_acc.size):
            v = gr.group_acc[g]
            row[f"{name}_acc_g{g}"] = None if np.isnan(v) else float(v)
        try:
            _, wl = metrics.worst_group_loss(gr)
            row[f"{name}_worst_group_acc"] = 1.0 - wl
        except metrics.UndefinedMetricError:
            row[f"{name}_worst_group_acc"] = None
        try:
            row[f"{name}_disparity"] = metrics.disparity(gr)
        except metrics.UndefinedMetricError:
            row[f"{name}_disparity"] = None
        if p.arch.classes == 2:
            row[f"{name}_cgap"] = metrics.cgap_binned(p, ds, 0.1)
        if cfg.algorithm == "ADV_PGD":
            pg = cfg.pgd
            row[f"{name}_robust_acc"] = metrics.robust_accuracy(
                p, ds, pg.gamma, pg.attack_steps, pg.attack_step_size)
    return row


def _eval_cadence(cfg):
    return cfg.eval_every or max(1, math.ceil(cfg.steps / 50))


def _maybe_noise(theta_dim, std, rng):
    if std > 0:
        return gaussian_vector(rng, theta_dim, std)
    return 0.0


def _run_loop(data, cfg, rng, test_data, init, batch_fn, grad_fn,
              privacy_fn=None):
    arch = init.arch
    theta = init.theta.copy()
    record = RunRecord(config=_config_dict(cfg), seed=cfg.seed)
    cadence = _eval_cadence(cfg)
    p = models.ModelParams(arch, theta)
    for t in range(1, cfg.steps + 1):
        idx = batch_fn(rng)
        g = grad_fn(p, idx, rng)
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p.theta
        theta = p.theta - cfg.lr * g
        p = models.ModelParams(arch, theta)
        if t % cadence == 0 or t == cfg.steps:
            record.trajectory.append(_eval_point(t, p, data, test_data, cfg))
    if privacy_fn is not None:
        record.privacy = privacy_fn(data)
    return p, record


def _config_dict(cfg):
    d = asdict(cfg)
    return d


def _initial_params(data, cfg):
    classes = data.num_classes
    return models.init_params(models.logreg(data.d, classes))


def _dp_privacy_report(data, cfg, plan):
    delta = cfg.delta if cfg.delta is not None else 1.0 / (2 * data.n)
    mu = gdp_mu_dpis(plan, cfg.sigma, cfg.steps)
    eps = gdp_to_eps(mu, delta)
    rep = report_for_budget(
        DpBudget(eps, delta), gdp=mu,
        provenance={
            "gdp_mu": "CLT-approx",
            "eps": "GDP bisection",
            "tv_stability": "tight DP->TV bound",
            "p_star": plan.p_star,
            "accounting_steps": cfg.steps,
        })
    return json.loads(rep.to_json())


def _dp_core(data, cfg, rng, test_data, init, plan):
    C = cfg.clip
    divisor = plan.expected_batch_size
    noise_std = cfg.sigma * C

    def batch_fn(r):
        return sampling.poisson_sample(plan, r)

    def grad_fn(p, idx, r):
        if idx.size:
            _, grads = models.per_sample_loss_grads(
                p, data.features[idx], data.labels[idx])
            g = _clip_rows(grads, C).sum(axis=0) / divisor
        else:
            g = np.zeros(p.theta.size)
        return g + _maybe_noise(p.theta.size, noise_std, r)

    return _run_loop(data, cfg, rng, test_data, init, batch_fn, grad_fn,
                     privacy_fn=lambda d: _dp_privacy_report(d, cfg, plan))


def dp_is_sgd(data, cfg, rng, test_data=None, init=None):
    """Noisy clipped SGD with group-aware non-uniform Poisson subsampling."""
    q = data.group_probs
    if q is None:
        from .data import empirical_group_probs
        q = empirical_group_probs(data)
    plan = sampling.is_sampling_probs(data.groups, q, cfg.pbar)
    init = init or _initial_params(data, cfg)
    return _dp_core(data, cfg, rng, test_data, init, plan)


def dp_sgd(data, cfg, rng, test_data=None, init=None):
    """Standard DP-SGD: uniform Poisson subsampling at rate pbar."""
    plan = sampling.uniform_plan(data.n, cfg.pbar)
    init = init or _initial_params(data, cfg)
    return _dp_core(data, cfg, rng, test_data, init, plan)


def _weighted_sgd(data, cfg, rng, test_data, init, weights, batch_fn):
    def grad_fn(p, idx, r):
        _, grads = models.per_sample_loss_grads(
            p, data.features[idx], data.labels[idx])
        if weights is not None:
            grads = grads * weights[idx][:, None]
        g = grads.mean(axis=0)
        return g + _maybe_noise(p.theta.size, cfg.sigma_n, r)

    return _run_loop(data, cfg, rng, test_data, init, batch_fn, grad_fn)


def sgd(data, cfg, rng, test_data=None, init=None):
    """Uniform with-replacement minibatch SGD, optional gradient noise."""
    init = init or _initial_params(data, cfg)
    b = cfg.batch_size
    if not b or b < 1:
        raise ValueError("batch_size must be >= 1")
    batch_fn = lambda r: r.integers(0, data.n, size=b)
    return _weighted_sgd(data, cfg, rng, test_data, init, None, batch_fn)


def is_sgd(data, cfg, rng, test_data=None, init=None):
    """Importance-resampled batches, unweighted loss."""
    init = init or _initial_params(data, cfg)
    b = cfg.batch_size
    if not b or b < 1:
        raise ValueError("batch_size must be >= 1")
    q = data.group_probs
    if q is None:
        from .data import empirical_group_probs
        q = empirical_group_probs(data)
    batch_fn = lambda r: sampling.importance_resample(data.groups, q, b, r)
    return _weighted_sgd(data, cfg, rng, test_data, init, None, batch_fn)


def iw_sgd(data, cfg, rng, test_data=None, init=None, weights=None):
    """Uniform batches with per-example loss weights 1 / (m * q_g)."""
    init = init or _initial_params(data, cfg)
    b = cfg.batch_size
    if not b or b < 1:
        raise ValueError("batch_size must be >= 1")
    if weights is None:
        q = data.group_probs
        if q is None:
            from .data import empirical_group_probs
            q = empirical_group_probs(data)
        weights = sampling.importance_weights(data.groups, q)
    batch_fn = lambda r: r.integers(0, data.n, size=b)
    return _weighted_sgd(data, cfg, rng, test_data, init, weights, batch_fn)


def pgd_attack_batch(p, x, y, gamma, steps=10, step_size=None, rng=None,
                     random_start=False):
    """L-infinity PGD with keep-best iterates, vectorized over a batch.

    Sign-gradient ascent on the loss, projected onto the gamma-ball around
    the clean inputs after every step.  The clean input is always a
    candidate, so the returned loss never drops below the clean loss.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).ravel()
    if gamma == 0.0 or steps <= 0:
        return x.copy()
    if step_size is None:
        step_size = gamma / 4.0
    if random_start and rng is not None:
        cur = x + gamma * (2.0 * rng.uniform(x.shape) - 1.0)
    else:
        cur = x.copy()
    best = x.copy()
    best_loss, _ = models.per_sample_loss_grads(p, x, y)
    for _ in range(steps):
        losses, _ = models.per_sample_loss_grads(p, cur, y)
        improved = losses > best_loss
        best[improved] = cur[improved]
        best_loss = np.maximum(best_loss, losses)
        gx = _input_grads(p, cur, y)
        cur = cur + step_size * np.sign(gx)
        cur = np.clip(cur, x - gamma, x + gamma)
    losses, _ = models.per_sample_loss_grads(p, cur, y)
    improved = losses > best_loss
    best[improved] = cur[improved]
    return best


def pgd_attack(p, x, y, gamma, steps=10, step_size=None):
    """Single-example convenience wrapper around :func:`pgd_attack_batch`."""
    out = pgd_attack_batch(p, np.asarray(x)[None, :], [y], gamma, steps,
                           step_size)
    return out[0]


def _input_grads(p, x, y):
    """d loss / d x for each example (analytic, both architectures)."""
    a = p.arch
    if a.classes == 2:
        z = models._logits(p, x)
        dz = models._sigmoid(z) - y
        if a.kind == "logreg":
            w = p.theta[:a.d]
            return dz[:, None] * w[None, :]
        w1, b1, w2, _ = models._unpack_mlp(p)
        pre = x @ w1.T + b1
        dpre = (dz[:, None] * w2[0][None, :]) * (1.0 - np.tanh(pre) ** 2)
        return dpre @ w1
    probs = models.predict_proba_batch(p, x)
    dz = probs.copy()
    dz[np.arange(x.shape[0]), y] -= 1.0
    if a.kind == "logreg":
        wb = p.theta.reshape(a.classes, a.d + 1)
        return dz @ wb[:, :a.d]
    w1, b1, w2, _ = models._unpack_mlp(p)
    pre = x @ w1.T + b1
    dpre = (dz @ w2) * (1.0 - np.tanh(pre) ** 2)
    return dpre @ w1


def adv_train(data, cfg, rng, test_data=None, init=None):
    """PGD adversarial training with optional gradient noise."""
    init = init or _initial_params(data, cfg)
    b = cfg.batch_size
    if not b or b < 1:
        raise ValueError("batch_size must be >= 1")
    pg = cfg.pgd

    batch_fn = lambda r: r.integers(0, data.n, size=b)

    def grad_fn(p, idx, r):
        x, y = data.features[idx], data.labels[idx]
        x_adv = pgd_attack_batch(p, x, y, pg.gamma, pg.attack_steps,
                                 pg.attack_step_size, rng=r,
                                 random_start=pg.random_start)
        _, grads = models.per_sample_loss_grads(p, x_adv, y)
        g = grads.mean(axis=0)
        return g + _maybe_noise(p.theta.size, cfg.sigma_n, r)

    return _run_loop(data, cfg, rng, test_data, init, batch_fn, grad_fn)


TRAINERS = {
    "SGD": sgd,
    "IS_SGD": is_sgd,
    "IW_SGD": iw_sgd,
    "DP_SGD": dp_sgd,
    "DP_IS_SGD": dp_is_sgd,
    "ADV_PGD": adv_train,
}


def train(data, cfg, rng, test_data=None, init=None):
    """Dispatch on cfg.algorithm."""
    return TRAINERS[cfg.algorithm](data, cfg, rng, test_data=test_data,
                                   init=init)
