"""Reference fits to compare the trained models against.

A plain expectation-maximization fit of a diagonal-covariance Gaussian
mixture, and the exact conditional of a fitted joint mixture. Nothing clever
on purpose: these are the baselines.
"""

from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from .errors import UsageError
from .mixture import FiniteMixture

logger = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


def _log_resp(data, weights, means, vars_):
    """log w_k + log N(x_n; m_k, A_k) for all (k, n)."""
    k, d = means.shape
    out = np.tile(np.log(weights)[:, None], (1, data.shape[0]))
    for j in range(d):
        s = vars_[:, j][:, None]
        diff = means[:, j][:, None] - data[:, j][None, :]
        out -= 0.5 * (np.log(s) + _LOG_2PI + diff * diff / s)
    return out


def em_fit(
    data: np.ndarray,
    n_components: int,
    iters: int = 100,
    var_floor: float = 1e-6,
    seed: int = 0,
    return_trace: bool = False,
):
    """Maximum-likelihood diagonal Gaussian mixture via EM.

    Means start at distinct random data points, variances at the per-axis
    data variance, weights uniform. Responsibilities are formed in the log
    domain (log-sum-exp), so distant points cannot zero out a whole E-step.
    A component whose responsibility mass collapses is reseeded at a random
    datum and the event is logged. The data log-likelihood is non-decreasing
    across iterations up to reseeding events, which the tests check.
    """
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n, d = data.shape
    if n_components < 1 or n_components > n:
        raise UsageError(f"need 1 <= n_components <= {n}, got {n_components}")
    if iters < 1:
        raise UsageError("iters must be positive")
    rng = np.random.default_rng(seed)
    means = data[rng.choice(n, size=n_components, replace=False)].copy()
    vars_ = np.tile(np.maximum(data.var(axis=0), var_floor), (n_components, 1))
    weights = np.full(n_components, 1.0 / n_components)

    trace = []
    for _ in range(iters):
        log_wp = _log_resp(data, weights, means, vars_)           # (K, n)
        log_px = np.logaddexp.reduce(log_wp, axis=0)              # (n,)
        trace.append(float(log_px.sum()))
        resp = np.exp(log_wp - log_px[None, :])                   # (K, n)
        mass = resp.sum(axis=1)                                   # (K,)
        dead = mass < n * 1e-10
        if np.any(dead):
            for k in np.flatnonzero(dead):
                logger.warning("em_fit: reseeding empty component %d", k)
                means[k] = data[rng.integers(n)]
                vars_[k] = np.maximum(data.var(axis=0), var_floor)
                mass[k] = 1.0
                resp[k] = 1.0 / n
        weights = mass / mass.sum()
        means = (resp @ data) / mass[:, None]
        second = (resp @ (data * data)) / mass[:, None]
        vars_ = np.maximum(second - means * means, var_floor)

    mixture = FiniteMixture.from_arrays(weights, means, vars_)
    if return_trace:
        return mixture, trace
    return mixture


def gmm_conditional(
    m: FiniteMixture,
    x: np.ndarray,
    x_dims: Sequence[int],
    y_dims: Sequence[int],
) -> FiniteMixture:
    """Exact conditional of a joint mixture given the x block.

    The conditional of a diagonal-covariance mixture is again a mixture over
    the y block with the same per-component means and variances, reweighted
    by each component's marginal density at x. The reweighting happens in
    the log domain: even when every marginal density underflows, the largest
    component still wins instead of everything collapsing to zero mass.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    x_dims, y_dims = list(x_dims), list(y_dims)
    if sorted(x_dims + y_dims) != list(range(m.dim)):
        raise UsageError(
            f"x_dims {x_dims} and y_dims {y_dims} must partition range({m.dim})"
        )
    if x.shape != (len(x_dims),):
        raise UsageError(f"x has shape {x.shape}, expected ({len(x_dims)},)")
    log_w = np.log(m.weights)
    for j, dim in enumerate(x_dims):
        s = m.vars[:, dim]
        diff = m.means[:, dim] - x[j]
        log_w -= 0.5 * (np.log(s) + _LOG_2PI + diff * diff / s)
    log_w -= log_w.max()  # softmax shift; exp never all-underflows
    w = np.exp(log_w)
    # components whose responsibility underflowed relative to the winner
    # carry exactly zero mass; drop them rather than keep unrepresentable rows
    keep = w > 0.0
    w = w[keep]
    return FiniteMixture.from_arrays(
        w / w.sum(), m.means[keep][:, y_dims], m.vars[keep][:, y_dims]
    )
