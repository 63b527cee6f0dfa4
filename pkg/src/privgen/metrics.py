"""Evaluation quantities: per-group reports, loss disparity, worst-group
loss and its train/test gap, a max-over-test-functions generalization-gap
estimate, binned calibration gap, and robust accuracy.

Group losses are 0/1 misclassification rates throughout, so "accuracy
disparity" and "loss disparity" coincide.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import models


class UndefinedMetricError(ValueError):
    pass


@dataclass(frozen=True)
class GroupReport:
    group_acc: np.ndarray      # nan for absent groups
    group_loss: np.ndarray
    group_sizes: np.ndarray
    overall_acc: float

    @property
    def present(self):
        return self.group_sizes > 0


def group_report(p, ds, num_groups=None):
    """Per-group 0/1 accuracy/loss; absent groups are marked with nan."""
    m = num_groups or ds.num_groups
    pred = models.predict_labels(p, ds.features)
    correct = (pred == ds.labels).astype(np.float64)
    sizes = np.bincount(ds.groups, minlength=m)
    acc = np.full(m, np.nan)
    for g in range(m):
        mask = ds.groups == g
        if mask.any():
            acc[g] = correct[mask].mean()
    overall = float(correct.mean())
    return GroupReport(acc, 1.0 - acc, sizes, overall)


def disparity(gr):
    """Max pairwise absolute difference of per-group losses."""
    losses = gr.group_loss[gr.present]
    if losses.size < 2:
        raise UndefinedMetricError("disparity needs at least two groups present")
    return float(losses.max() - losses.min())


def worst_group_loss(gr):
    """(group id, loss) of the highest-loss group; ties -> lowest id."""
    losses = np.where(gr.present, gr.group_loss, -np.inf)
    g = int(np.argmax(losses))
    if not np.isfinite(losses[g]):
        raise UndefinedMetricError("no group present")
    return g, float(losses[g])


def wggap(train_gr, test_gr):
    """Worst-group train loss minus worst-group test loss, plus a flag for
    whether the worst group coincides on the two splits (the proxy form is
    only exact when it does)."""
    g_tr, l_tr = worst_group_loss(train_gr)
    g_te, l_te = worst_group_loss(test_gr)
    return {
        "gap": l_tr - l_te,
        "accuracy_gap": l_te - l_tr,
        "train_worst_group": g_tr,
        "test_worst_group": g_te,
        "same_worst_group": g_tr == g_te,
    }


def dg_gap_estimate(run_pairs, family="group_loss"):
    """Lower bound on the distributional-generalization gap: the max over a
    finite family of test functions of |mean train value - mean test value|
    across runs.

    ``run_pairs`` is a list of (train GroupReport, test GroupReport); the
    default family is the per-group 0/1 losses.
    """
    if not run_pairs:
        raise ValueError("need at least one run")
    if family != "group_loss":
        raise ValueError(f"unknown test-function family {family!r}")
    m = run_pairs[0][0].group_loss.size
    gaps = []
    for g in range(m):
        tr = [p[0].group_loss[g] for p in run_pairs]
        te = [p[1].group_loss[g] for p in run_pairs]
        if np.any(np.isnan(tr)) or np.any(np.isnan(te)):
            continue
        gaps.append(abs(np.mean(tr) - np.mean(te)))
    return float(max(gaps))


def binned_cgap_from_scores(scores, labels, tau):
    """tau-binned calibration gap of predicted probabilities against binary
    labels: sum over bin left edges p of |mean of 1{score in [p, p+tau)} *
    (y - p)|, final bin closed at 1.

    The comparison point is the bin's left edge, following the population
    definition exactly (not the bin-average confidence as in ECE folklore).
    """
    k = round(1.0 / tau)
    if abs(k * tau - 1.0) > 1e-9 or k < 1:
        raise ValueError(f"tau must be 1/k for integer k >= 1, got {tau}")
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n = scores.size
    total = 0.0
    for i in range(k):
        p = i * tau
        if i < k - 1:
            mask = (scores >= p) & (scores < p + tau)
        else:
            mask = (scores >= p) & (scores <= 1.0)
        total += abs(np.sum((labels[mask] - p)) / n)
    return float(total)


def cgap_binned(p, ds, tau):
    """Binned calibration gap of a binary model on a dataset."""
    if p.arch.classes != 2:
        raise ValueError("cgap_binned requires a binary task")
    scores = models.positive_proba(p, ds.features)
    return binned_cgap_from_scores(scores, ds.labels, tau)


def robust_accuracy(p, ds, gamma, attack_steps=10, attack_step_size=None):
    """Accuracy on PGD-perturbed inputs (keep-best attack, so robust
    accuracy never exceeds clean accuracy)."""
    from .trainers import pgd_attack_batch
    x_adv = pgd_attack_batch(p, ds.features, ds.labels, gamma,
                             attack_steps, attack_step_size)
    pred = models.predict_labels(p, x_adv)
    return float(np.mean(pred == ds.labels))
