"""Evaluation metrics: fit scores, center-recovery rates, detector curves."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import rankdata

from .errors import UsageError
from .mixture import FiniteMixture, eval_density, quadratic_norm


@dataclass
class EvalReport:
    """What `eval` hands back: the cross-information fit score, the
    center-recovery rates at the tight (1e-4) and loose (1e-2) squared
    thresholds, an optional entropy read-out, and free-form notes."""

    ce: float
    vr_tight: float
    vr_loose: float
    h2: Optional[float] = None
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for name, v in (("vr_tight", self.vr_tight), ("vr_loose", self.vr_loose)):
            if not 0.0 <= v <= 1.0:
                raise UsageError(f"{name} must lie in [0, 1], got {v}")


DensityEvaluator = Union[FiniteMixture, tuple[Callable[[np.ndarray], np.ndarray], float]]


def ce_score(model: DensityEvaluator, data: np.ndarray) -> float:
    """Normalized cross information, mean_model(data) / sqrt(int model^2).

    ``model`` is either a :class:`FiniteMixture` (norm in closed form) or a
    pair ``(density_callable, squared_norm)`` for anything else. A perfect
    model of the sampling density scores sqrt(int p^2) in the large-sample
    limit; higher is better.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if isinstance(model, FiniteMixture):
        values = eval_density(model, data)
        norm = quadratic_norm(model)
    else:
        fn, norm = model
        values = np.asarray(fn(data), dtype=float)
    if not norm > 0.0:
        raise UsageError(f"model squared norm must be positive, got {norm}")
    return float(values.mean() / np.sqrt(norm))


def validation_rate(
    means: np.ndarray,
    weights: np.ndarray,
    centers: np.ndarray,
    threshold: float,
) -> float:
    """Weight fraction of components whose squared distance to the nearest
    true center is below ``threshold``.

    The threshold applies to the squared Euclidean distance, so 1e-4 means
    "within 0.01 of a center" and 1e-2 means "within 0.1".
    """
    means = np.atleast_2d(np.asarray(means, dtype=float))
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    weights = np.asarray(weights, dtype=float).reshape(-1)
    if means.shape[0] != weights.shape[0]:
        raise UsageError("means and weights disagree on component count")
    if means.shape[1] != centers.shape[1]:
        raise UsageError("means and centers disagree on dimension")
    if not threshold > 0.0:
        raise UsageError("threshold must be positive")
    total = weights.sum()
    if not total > 0.0:
        raise UsageError("total weight must be positive")
    sq = ((means[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    hit = sq.min(axis=1) < threshold
    return float(weights[hit].sum() / total)


def auroc(scores_in: np.ndarray, scores_out: np.ndarray) -> float:
    """Probability that an out-of-distribution score ranks above an
    in-distribution one, ties counted half. Rank-based (Mann-Whitney), so
    monotone transforms of the scores change nothing."""
    scores_in = np.asarray(scores_in, dtype=float).reshape(-1)
    scores_out = np.asarray(scores_out, dtype=float).reshape(-1)
    if scores_in.size == 0 or scores_out.size == 0:
        raise UsageError("both score sets must be non-empty")
    ranks = rankdata(np.concatenate([scores_in, scores_out]))
    r_out = ranks[scores_in.size:].sum()
    n_out, n_in = scores_out.size, scores_in.size
    u = r_out - n_out * (n_out + 1) / 2.0
    return float(u / (n_in * n_out))


def auprc(scores_in: np.ndarray, scores_out: np.ndarray) -> float:
    """Area under precision-recall with the out-of-distribution set as the
    positive class, by the usual step interpolation over thresholds."""
    scores_in = np.asarray(scores_in, dtype=float).reshape(-1)
    scores_out = np.asarray(scores_out, dtype=float).reshape(-1)
    scores = np.concatenate([scores_in, scores_out])
    labels = np.concatenate([np.zeros(scores_in.size), np.ones(scores_out.size)])
    order = np.argsort(-scores, kind="stable")
    labels = labels[order]
    tp = np.cumsum(labels)
    fp = np.cumsum(1.0 - labels)
    precision = tp / (tp + fp)
    recall = tp / labels.sum()
    # integrate precision over recall increments
    prev_recall = 0.0
    area = 0.0
    for p, r in zip(precision, recall):
        area += p * (r - prev_recall)
        prev_recall = r
    return float(area)


def fpr_at_tpr(scores_in: np.ndarray, scores_out: np.ndarray, tpr: float = 0.8) -> float:
    """False positive rate at the lowest threshold reaching the given true
    positive rate (out-of-distribution = positive)."""
    scores_in = np.asarray(scores_in, dtype=float).reshape(-1)
    scores_out = np.asarray(scores_out, dtype=float).reshape(-1)
    if not 0.0 < tpr <= 1.0:
        raise UsageError("tpr must be in (0, 1]")
    thresh = np.quantile(scores_out, 1.0 - tpr)
    return float((scores_in >= thresh).mean())


def conditional_ce_score(
    conditional: Callable[[float | np.ndarray], FiniteMixture],
    pairs: np.ndarray,
    x_dim: int = 1,
) -> float:
    """Conditional analogue of :func:`ce_score` on (x, y) pairs:

        mean_i g(y_i | x_i) / sqrt(mean_i int g(. | x_i)^2)

    with the inner norm in closed form per conditioning point. ``conditional``
    maps one x to the conditional mixture over y.
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    if pairs.shape[1] <= x_dim:
        raise UsageError("pairs must hold x and y columns")
    num = 0.0
    den = 0.0
    for row in pairs:
        mix = conditional(row[:x_dim])
        num += float(eval_density(mix, row[x_dim:][None, :])[0])
        den += quadratic_norm(mix)
    n = pairs.shape[0]
    if not den > 0.0:
        raise UsageError("conditional norms vanished on every pair")
    return float((num / n) / np.sqrt(den / n))
