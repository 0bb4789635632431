"""Finite Gaussian mixtures with diagonal covariances, and the second-order
information quantities that are available for them in closed form.

The whole package leans on one identity: the integral of a product of two
Gaussians is again a Gaussian evaluated at the difference of the means,

    integral N(x - m_i, A_i) N(x - m_j, A_j) dx = N(m_i - m_j, A_i + A_j),

which turns every quadratic functional of a mixture (norms, inner products,
second-order Renyi entropy, the Cauchy-Schwarz dependence measure) into a
finite double sum over components. Only diagonal covariances are supported;
that keeps every formula a product over dimensions and is all the estimators
emit.

Weights are stored exactly as given and are NOT implicitly normalized;
normalization is an explicit operation returning a new mixture. Quantities
that are only meaningful for probability densities (entropy, the dependence
measure) normalize internally and say so in their docstrings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateModelError, DimensionMismatchError, UsageError

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GaussianComponent:
    """One weighted Gaussian bump with a diagonal covariance.

    Parameters
    ----------
    w : float
        Component weight, strictly positive. Weights across a mixture need
        not sum to one.
    mean : ndarray, shape (d,)
    var : ndarray, shape (d,)
        Diagonal of the covariance, every entry strictly positive.
    """

    w: float
    mean: np.ndarray
    var: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=float)))
        object.__setattr__(self, "var", np.atleast_1d(np.asarray(self.var, dtype=float)))
        if self.mean.ndim != 1 or self.var.shape != self.mean.shape:
            raise DimensionMismatchError(
                f"mean shape {self.mean.shape} and var shape {self.var.shape} must be equal 1-D"
            )
        if not self.w > 0.0:
            raise UsageError(f"component weight must be positive, got {self.w}")
        if not np.all(self.var > 0.0):
            raise UsageError("component variances must be strictly positive")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]


class FiniteMixture:
    """An ordered collection of :class:`GaussianComponent`.

    Internally the components are stored as stacked arrays (``weights``
    ``(K,)``, ``means`` ``(K, d)``, ``vars`` ``(K, d)``) so that every
    pairwise formula vectorizes. The component list view is reconstructed on
    demand.
    """

    def __init__(self, components: Sequence[GaussianComponent]):
        if len(components) == 0:
            raise UsageError("a mixture needs at least one component")
        d = components[0].dim
        for c in components:
            if c.dim != d:
                raise DimensionMismatchError(
                    f"components live in different dimensions ({c.dim} vs {d})"
                )
        self.weights = np.array([c.w for c in components], dtype=float)
        self.means = np.stack([c.mean for c in components]).astype(float)
        self.vars = np.stack([c.var for c in components]).astype(float)

    @classmethod
    def from_arrays(cls, weights, means, vars) -> "FiniteMixture":
        """Build directly from stacked arrays without the per-component hop."""
        self = cls.__new__(cls)
        weights = np.asarray(weights, dtype=float).reshape(-1)
        means = np.asarray(means, dtype=float)
        vars = np.asarray(vars, dtype=float)
        if means.ndim == 1:
            means = means[:, None]
        if vars.ndim == 1:
            vars = vars[:, None]
        if not (weights.shape[0] == means.shape[0] == vars.shape[0]):
            raise DimensionMismatchError("weights/means/vars disagree on component count")
        if means.shape != vars.shape:
            raise DimensionMismatchError("means and vars disagree on dimension")
        if weights.shape[0] == 0:
            raise UsageError("a mixture needs at least one component")
        if not np.all(weights > 0.0):
            raise UsageError("all mixture weights must be positive")
        if not np.all(vars > 0.0):
            raise UsageError("all mixture variances must be strictly positive")
        self.weights = weights.copy()
        self.means = means.astype(float).copy()
        self.vars = vars.astype(float).copy()
        return self

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def total_weight(self) -> float:
        return float(self.weights.sum())

    @property
    def components(self) -> list[GaussianComponent]:
        return [
            GaussianComponent(float(w), m.copy(), v.copy())
            for w, m, v in zip(self.weights, self.means, self.vars)
        ]

    def __repr__(self) -> str:
        return f"FiniteMixture(K={self.n_components}, d={self.dim}, mass={self.total_weight:.6g})"


# ---------------------------------------------------------------------------
# pairwise overlap machinery
# ---------------------------------------------------------------------------

_CHUNK = 2048  # pairwise matrices are built at most this many rows at a time


def _log_overlap_matrix(means_a, vars_a, means_b, vars_b) -> np.ndarray:
    """log N(m_a - m_b, A_a + A_b) for every (a, b) pair, accumulated per
    dimension in the log domain so distant pairs underflow to -inf gracefully
    instead of corrupting the sum."""
    ka, d = means_a.shape
    kb = means_b.shape[0]
    out = np.zeros((ka, kb))
    for k in range(d):
        s = vars_a[:, k, None] + vars_b[None, :, k]
        diff = means_a[:, k, None] - means_b[None, :, k]
        out -= 0.5 * (np.log(s) + _LOG_2PI + diff * diff / s)
    return out


def _weighted_pair_sum(wa, ma, va, wb, mb, vb) -> float:
    """w_a^T K w_b without ever holding more than a row chunk of K."""
    total = 0.0
    for lo in range(0, ma.shape[0], _CHUNK):
        hi = lo + _CHUNK
        kmat = np.exp(_log_overlap_matrix(ma[lo:hi], va[lo:hi], mb, vb))
        total += wa[lo:hi] @ kmat @ wb
    return float(total)


def pairwise_overlap(a: GaussianComponent, b: GaussianComponent) -> float:
    """Integral of the product of two unit-mass Gaussians (weights ignored)."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dims differ: {a.dim} vs {b.dim}")
    log_k = _log_overlap_matrix(a.mean[None, :], a.var[None, :], b.mean[None, :], b.var[None, :])
    return float(np.exp(log_k[0, 0]))


def quadratic_norm(m: FiniteMixture) -> float:
    """Integral of the squared mixture, using the weights as stored."""
    return _weighted_pair_sum(m.weights, m.means, m.vars, m.weights, m.means, m.vars)


def cross_inner(a: FiniteMixture, b: FiniteMixture) -> float:
    """Integral of the product of two mixtures, using weights as stored."""
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dims differ: {a.dim} vs {b.dim}")
    return _weighted_pair_sum(a.weights, a.means, a.vars, b.weights, b.means, b.vars)


def eval_density(m: FiniteMixture, points: np.ndarray) -> np.ndarray:
    """Weighted sum of component densities at ``points`` ``(n, d)``.

    If the stored weights do not sum to one this is an unnormalized measure,
    on purpose; callers modelling probability densities should
    :func:`normalize` first.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if points.shape[1] != m.dim:
        raise DimensionMismatchError(
            f"points have dim {points.shape[1]}, mixture has dim {m.dim}"
        )
    # log-domain per component, then weighted exp-sum; chunked over points
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], _CHUNK):
        chunk = points[lo:lo + _CHUNK]
        log_k = np.zeros((m.n_components, chunk.shape[0]))
        for k in range(m.dim):
            s = m.vars[:, k][:, None]
            diff = m.means[:, k][:, None] - chunk[:, k][None, :]
            log_k -= 0.5 * (np.log(s) + _LOG_2PI + diff * diff / s)
        out[lo:lo + _CHUNK] = m.weights @ np.exp(log_k)
    return out


def normalize(m: FiniteMixture) -> FiniteMixture:
    """New mixture whose weights sum to one."""
    total = m.weights.sum()
    if not np.isfinite(total) or total <= 0.0:
        raise DegenerateModelError(f"cannot normalize mixture with total weight {total}")
    return FiniteMixture.from_arrays(m.weights / total, m.means, m.vars)


def marginalize(m: FiniteMixture, dims: Sequence[int]) -> FiniteMixture:
    """Marginal mixture over the given dimensions (in the given order).

    Diagonal covariances make this a column selection.
    """
    dims = list(dims)
    if len(dims) == 0:
        raise UsageError("marginalize needs at least one dimension")
    if len(set(dims)) != len(dims) or min(dims) < 0 or max(dims) >= m.dim:
        raise UsageError(f"bad dimension subset {dims} for a {m.dim}-D mixture")
    return FiniteMixture.from_arrays(m.weights, m.means[:, dims], m.vars[:, dims])


def product_mixture(a: FiniteMixture, b: FiniteMixture) -> FiniteMixture:
    """Tensor product of two mixtures over the concatenation of their axes.

    The result has ``K_a * K_b`` components; component ``(i, j)`` has weight
    ``w_i * w_j``. Used to realize the product of marginals as an explicit
    mixture (e.g. for quadrature cross-checks); the dependence measure itself
    exploits the factorized structure instead of expanding this object.
    """
    ka, kb = a.n_components, b.n_components
    w = (a.weights[:, None] * b.weights[None, :]).reshape(ka * kb)
    means = np.concatenate(
        [np.repeat(a.means, kb, axis=0), np.tile(b.means, (ka, 1))], axis=1
    )
    vars_ = np.concatenate(
        [np.repeat(a.vars, kb, axis=0), np.tile(b.vars, (ka, 1))], axis=1
    )
    return FiniteMixture.from_arrays(w, means, vars_)


def sample(m: FiniteMixture, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n`` points: a categorical draw over normalized weights, then a
    diagonal-Gaussian draw per point. Deterministic given the generator."""
    if n < 0:
        raise UsageError("n must be nonnegative")
    p = m.weights / m.weights.sum()
    idx = rng.choice(m.n_components, size=n, p=p)
    return m.means[idx] + rng.standard_normal((n, m.dim)) * np.sqrt(m.vars[idx])


# ---------------------------------------------------------------------------
# information quantities
# ---------------------------------------------------------------------------

def renyi2_entropy(m: FiniteMixture) -> float:
    """Second-order Renyi entropy, -log integral p^2, in nats.

    Normalizes first; entropy of an unnormalized measure is not a thing.
    """
    norm = quadratic_norm(normalize(m))
    if norm <= 0.0:
        raise DegenerateModelError("squared norm underflowed to zero")
    return float(-np.log(norm))


def cs_qmi(m: FiniteMixture, x_dims: Sequence[int], y_dims: Sequence[int]) -> float:
    """Cauchy-Schwarz dependence measure between two axis blocks, in bits.

    Normalizes the joint, forms both marginals, and evaluates

        -log2 <p_xy, p_x p_y> + 1/2 log2 <p_x p_y, p_x p_y>
                              + 1/2 log2 <p_xy, p_xy>.

    All three inner products are closed-form double sums. Because diagonal
    covariances factor across the two blocks, each inner product against the
    product of marginals reduces to expressions in the per-block overlap
    matrices; the values are identical to materializing
    :func:`product_mixture` and calling the generic inner products, just
    without the K^2-component intermediate.

    Nonnegative up to roundoff, and zero exactly when the joint factorizes.
    """
    x_dims, y_dims = list(x_dims), list(y_dims)
    if sorted(x_dims + y_dims) != list(range(m.dim)):
        raise UsageError(
            f"x_dims {x_dims} and y_dims {y_dims} must partition range({m.dim})"
        )
    p = normalize(m)
    w = p.weights
    mx_, vx = p.means[:, x_dims], p.vars[:, x_dims]
    my_, vy = p.means[:, y_dims], p.vars[:, y_dims]
    # one chunked pass accumulates every kernel contraction the three inner
    # products need, so no (K, K) matrix is ever materialized
    kx_w = np.empty_like(w)
    ky_w = np.empty_like(w)
    joint = 0.0
    for lo in range(0, w.size, _CHUNK):
        hi = lo + _CHUNK
        kx = np.exp(_log_overlap_matrix(mx_[lo:hi], vx[lo:hi], mx_, vx))
        ky = np.exp(_log_overlap_matrix(my_[lo:hi], vy[lo:hi], my_, vy))
        kx_w[lo:hi] = kx @ w
        ky_w[lo:hi] = ky @ w
        joint += w[lo:hi] @ ((kx * ky) @ w)   # <p_xy, p_xy> rows
    cross = float(w @ (kx_w * ky_w))          # <p_xy, p_x p_y>
    marg = float((w @ kx_w) * (w @ ky_w))     # <p_x p_y, p_x p_y>
    if min(cross, marg, joint) <= 0.0:
        raise DegenerateModelError("an inner product underflowed to zero")
    return float(-np.log2(cross) + 0.5 * np.log2(marg) + 0.5 * np.log2(float(joint)))


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def to_json(m: FiniteMixture) -> str:
    """JSON text for a mixture.

    Floats go through Python's shortest round-trip repr, so parsing the text
    back reproduces every parameter bit-exactly.
    """
    obj = {
        "dim": m.dim,
        "components": [
            {"w": float(w), "mean": [float(x) for x in mean], "var": [float(v) for v in var]}
            for w, mean, var in zip(m.weights, m.means, m.vars)
        ],
    }
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def from_json(text: str) -> FiniteMixture:
    obj = json.loads(text)
    try:
        dim = int(obj["dim"])
        comps = obj["components"]
        weights = [c["w"] for c in comps]
        means = [c["mean"] for c in comps]
        vars_ = [c["var"] for c in comps]
    except (KeyError, TypeError) as exc:
        raise UsageError(f"malformed mixture JSON: {exc}") from exc
    m = FiniteMixture.from_arrays(np.array(weights), np.array(means), np.array(vars_))
    if m.dim != dim:
        raise DimensionMismatchError(
            f"declared dim {dim} but components have dim {m.dim}"
        )
    return m


def save_mixture(m: FiniteMixture, path) -> None:
    with open(path, "w") as fh:
        fh.write(to_json(m))


def load_mixture(path) -> FiniteMixture:
    with open(path) as fh:
        return from_json(fh.read())
