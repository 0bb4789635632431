"""Synthetic dataset recipes, their ground-truth specs, and file I/O.

Three generators, all seeded and bit-reproducible:

* :func:`gen_mog` - planar Gaussian mixtures with tight random bumps;
* :func:`gen_generalized` - same skeleton, but each center carries a
  Gaussian, Laplace, or uniform bump, so a Gaussian-mixture fit is
  misspecified on most of them;
* :func:`gen_markov` - a ten-state chain on [0, 1] observed through
  Gaussian emission kernels, pooled into (x_t, x_{t+1}) pairs.

Every generator returns both the samples and a spec object capable of
evaluating its own density (or conditional density), so oracles can score
any fit against the truth. Specs serialize to a JSON sidecar next to the
data CSV.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import UsageError
from .mixture import FiniteMixture

FAMILIES = ("gaussian", "laplace", "uniform")


@dataclass
class MixtureSpec:
    """Ground truth for the planar recipes.

    scales holds, per center and dimension: the variance for a Gaussian
    bump, the scale b for a Laplace bump, the full interval length for a
    uniform bump. Weights are unnormalized, as drawn.
    """

    centers: np.ndarray          # (K, d)
    families: list[str]          # len K
    scales: np.ndarray           # (K, d)
    weights: np.ndarray          # (K,)

    def __post_init__(self):
        self.centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        self.scales = np.atleast_2d(np.asarray(self.scales, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if not all(f in FAMILIES for f in self.families):
            raise UsageError(f"unknown family in {self.families}")
        k, d = self.centers.shape
        if self.scales.shape != (k, d) or self.weights.shape != (k,) or len(self.families) != k:
            raise UsageError("spec arrays disagree on component count or dimension")

    @property
    def dim(self) -> int:
        return self.centers.shape[1]

    @property
    def n_centers(self) -> int:
        return self.centers.shape[0]

    def pdf(self, points: np.ndarray) -> np.ndarray:
        """Normalized density at points (n, d)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != self.dim:
            raise UsageError(f"points have dim {points.shape[1]}, spec has {self.dim}")
        pi = self.weights / self.weights.sum()
        out = np.zeros(points.shape[0])
        for k in range(self.n_centers):
            dens = np.ones(points.shape[0])
            for j in range(self.dim):
                x = points[:, j] - self.centers[k, j]
                s = self.scales[k, j]
                if self.families[k] == "gaussian":
                    dens *= np.exp(-0.5 * x * x / s) / np.sqrt(2.0 * np.pi * s)
                elif self.families[k] == "laplace":
                    dens *= np.exp(-np.abs(x) / s) / (2.0 * s)
                else:
                    dens *= (np.abs(x) <= s / 2.0) / s
            out += pi[k] * dens
        return out

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        pi = self.weights / self.weights.sum()
        idx = rng.choice(self.n_centers, size=n, p=pi)
        out = np.empty((n, self.dim))
        for k in range(self.n_centers):
            rows = idx == k
            m = int(rows.sum())
            if m == 0:
                continue
            c, s = self.centers[k], self.scales[k]
            if self.families[k] == "gaussian":
                out[rows] = c + rng.standard_normal((m, self.dim)) * np.sqrt(s)
            elif self.families[k] == "laplace":
                out[rows] = c + rng.laplace(0.0, s, size=(m, self.dim))
            else:
                out[rows] = c + rng.uniform(-0.5, 0.5, size=(m, self.dim)) * s
        return out

    def as_finite_mixture(self) -> FiniteMixture:
        """Closed-form view; only exists when every bump is Gaussian."""
        if any(f != "gaussian" for f in self.families):
            raise UsageError("spec has non-Gaussian bumps; no closed-form mixture view")
        return FiniteMixture.from_arrays(self.weights, self.centers, self.scales)

    def box(self) -> list[tuple[float, float]]:
        """A bounding box holding all but a negligible sliver of mass, for
        quadrature oracles. Reach per family: 10 sigma, 30 b, 0.55 L."""
        reach = np.empty_like(self.scales)
        for k, fam in enumerate(self.families):
            if fam == "gaussian":
                reach[k] = 10.0 * np.sqrt(self.scales[k])
            elif fam == "laplace":
                reach[k] = 30.0 * self.scales[k]
            else:
                reach[k] = 0.55 * self.scales[k]
        lo = (self.centers - reach).min(axis=0)
        hi = (self.centers + reach).max(axis=0)
        return [(float(a), float(b)) for a, b in zip(lo, hi)]

    def to_dict(self) -> dict:
        return {
            "type": "planar_mixture",
            "dim": self.dim,
            "centers": self.centers.tolist(),
            "families": list(self.families),
            "scales": self.scales.tolist(),
            "weights": self.weights.tolist(),
        }


@dataclass
class MarkovSpec:
    """Ground truth for the chain recipe: a row-stochastic transition matrix
    over ten latent states with shuffled destination labels, state centers on
    a regular grid in [0, 1], and one Gaussian emission kernel per center."""

    transition: np.ndarray       # (S, S), rows sum to 1
    centers: np.ndarray          # (S,)
    variances: np.ndarray        # (S,)
    n_starts: int
    traj_len: int

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.centers = np.asarray(self.centers, dtype=float).reshape(-1)
        self.variances = np.asarray(self.variances, dtype=float).reshape(-1)
        s = self.centers.shape[0]
        if self.transition.shape != (s, s) or self.variances.shape != (s,):
            raise UsageError("spec arrays disagree on state count")
        if not np.allclose(self.transition.sum(axis=1), 1.0):
            raise UsageError("transition rows must sum to one")

    @property
    def n_states(self) -> int:
        return self.centers.shape[0]

    def state(self, x) -> np.ndarray:
        """Bin continuous positions into states."""
        x = np.asarray(x, dtype=float)
        return np.clip((x * self.n_states).astype(int), 0, self.n_states - 1)

    def conditional_mixture(self, x: float) -> FiniteMixture:
        """Exact p(y | x): the x-state's transition row over the emission
        kernels."""
        row = self.transition[int(self.state(np.atleast_1d(x))[0])]
        keep = row > 0.0
        return FiniteMixture.from_arrays(
            row[keep], self.centers[keep], self.variances[keep]
        )

    def conditional_pdf(self, y: np.ndarray, x: float) -> np.ndarray:
        from .mixture import eval_density

        return eval_density(self.conditional_mixture(x), np.atleast_1d(y)[:, None])

    def y_box(self) -> tuple[float, float]:
        reach = 10.0 * np.sqrt(self.variances.max())
        return (float(self.centers.min() - reach), float(self.centers.max() + reach))

    def bin_leakage(self) -> np.ndarray:
        """Leak[j, k] = P(an emission from state j lands in bin k). Emission
        kernels are narrow but not narrow enough to stay inside their own
        bin, so the state read back from a position differs from the
        emitting state with nonvanishing probability."""
        from scipy.stats import norm

        s = self.n_states
        edges = np.arange(1, s) / s
        stds = np.sqrt(self.variances)
        inner = norm.cdf((edges[None, :] - self.centers[:, None]) / stds[:, None])
        cdf = np.concatenate([np.zeros((s, 1)), inner, np.ones((s, 1))], axis=1)
        return np.diff(cdf, axis=1)

    def x_marginal(self) -> FiniteMixture:
        """Long-run distribution of pooled pre-transition positions: the
        emission mixture under the stationary law of the emitting state.
        That state evolves by Leak then transition, so the stationary vector
        solves rho (Leak T) = rho. The simulator's uniform warm start decays
        geometrically and is negligible over the pooled trajectory."""
        m = self.bin_leakage() @ self.transition
        eigvals, eigvecs = np.linalg.eig(m.T)
        idx = int(np.argmin(np.abs(eigvals - 1.0)))
        rho = np.real(eigvecs[:, idx])
        rho = np.abs(rho) / np.abs(rho).sum()
        return FiniteMixture.from_arrays(rho, self.centers, self.variances)

    def joint_pdf(self, points: np.ndarray) -> np.ndarray:
        """p(x, y) = p(x) p(y | x) under the stationary x marginal; rows of
        ``points`` are (x, y)."""
        from .mixture import eval_density

        points = np.atleast_2d(np.asarray(points, dtype=float))
        if points.shape[1] != 2:
            raise UsageError("joint_pdf takes (x, y) rows")
        px = eval_density(self.x_marginal(), points[:, :1])
        out = np.empty(points.shape[0])
        states = self.state(points[:, 0])
        for s in np.unique(states):
            rows = self.transition[s]
            keep = rows > 0.0
            cond = FiniteMixture.from_arrays(
                rows[keep], self.centers[keep], self.variances[keep]
            )
            mask = states == s
            out[mask] = eval_density(cond, points[mask, 1:])
        return px * out

    def to_dict(self) -> dict:
        return {
            "type": "chain",
            "transition": self.transition.tolist(),
            "centers": self.centers.tolist(),
            "variances": self.variances.tolist(),
            "n_starts": self.n_starts,
            "traj_len": self.traj_len,
        }


# ---------------------------------------------------------------------------
# recipes
# ---------------------------------------------------------------------------

def gen_mog(
    seed: int,
    n_samples: int = 200_000,
    n_centers: int = 20,
    dim: int = 2,
) -> tuple[MixtureSpec, np.ndarray]:
    """Tight planar Gaussian mixture: centers uniform on [0.2, 0.8]^d,
    per-axis variances uniform on [1e-4, 2e-3], weights uniform on
    [0.5, 1.5]."""
    rng = np.random.default_rng(seed)
    spec = MixtureSpec(
        centers=rng.uniform(0.2, 0.8, size=(n_centers, dim)),
        families=["gaussian"] * n_centers,
        scales=rng.uniform(1e-4, 2e-3, size=(n_centers, dim)),
        weights=rng.uniform(0.5, 1.5, size=n_centers),
    )
    return spec, spec.sample(n_samples, rng)


def gen_generalized(
    seed: int,
    n_samples: int = 200_000,
    n_centers: int = 20,
    dim: int = 2,
) -> tuple[MixtureSpec, np.ndarray]:
    """Same skeleton as :func:`gen_mog` but each center draws its bump family
    uniformly from {gaussian, laplace, uniform}. Scale draws per family:
    variances U(1e-4, 2e-3), Laplace scales U(0.01, 0.2), uniform interval
    lengths U(0.01, 0.2); one draw per dimension."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(0.2, 0.8, size=(n_centers, dim))
    families = [FAMILIES[i] for i in rng.integers(0, 3, size=n_centers)]
    scales = np.empty((n_centers, dim))
    for k, fam in enumerate(families):
        if fam == "gaussian":
            scales[k] = rng.uniform(1e-4, 2e-3, size=dim)
        else:
            scales[k] = rng.uniform(0.01, 0.2, size=dim)
    weights = rng.uniform(0.5, 1.5, size=n_centers)
    spec = MixtureSpec(centers, families, scales, weights)
    return spec, spec.sample(n_samples, rng)


def gen_markov(
    seed: int,
    n_starts: int = 100,
    traj_len: int = 1000,
    n_states: int = 10,
) -> tuple[MarkovSpec, np.ndarray]:
    """Chain data: the transition matrix starts as 0.7 on the diagonal and
    (0.3 / (S-1)) elsewhere, then each row's destination labels get an
    independent seeded shuffle. States sit at (k + 1/2) / S; each has a 1-D
    Gaussian emission kernel with variance U(5e-4, 2e-3). ``n_starts``
    uniform starting points each run ``traj_len`` transitions; all
    (x_t, x_{t+1}) pairs are pooled."""
    rng = np.random.default_rng(seed)
    s = n_states
    base_row = np.full(s, 0.3 / (s - 1))
    transition = np.empty((s, s))
    for i in range(s):
        row = base_row.copy()
        row[i] = 0.7
        transition[i] = rng.permutation(row)
    centers = (np.arange(s) + 0.5) / s
    variances = rng.uniform(5e-4, 2e-3, size=s)
    spec = MarkovSpec(transition, centers, variances, n_starts, traj_len)

    x = rng.uniform(0.0, 1.0, size=n_starts)
    cum = transition.cumsum(axis=1)
    pairs = np.empty((n_starts * traj_len, 2))
    for t in range(traj_len):
        states = spec.state(x)
        u = rng.random(n_starts)
        dest = (cum[states] < u[:, None]).sum(axis=1)
        y = centers[dest] + rng.standard_normal(n_starts) * np.sqrt(variances[dest])
        pairs[t * n_starts:(t + 1) * n_starts, 0] = x
        pairs[t * n_starts:(t + 1) * n_starts, 1] = y
        x = y
    return spec, pairs


# ---------------------------------------------------------------------------
# probe sets for the adversarial mode
# ---------------------------------------------------------------------------

def two_moons(n: int, rng: np.random.Generator, noise: float = 0.08) -> np.ndarray:
    """The usual pair of interleaved half circles."""
    n_top = n // 2
    n_bot = n - n_top
    t_top = rng.uniform(0.0, np.pi, n_top)
    t_bot = rng.uniform(0.0, np.pi, n_bot)
    pts = np.concatenate([
        np.stack([np.cos(t_top), np.sin(t_top)], axis=1),
        np.stack([1.0 - np.cos(t_bot), 0.5 - np.sin(t_bot)], axis=1),
    ])
    return pts + rng.standard_normal((n, 2)) * noise


def ring(
    n: int,
    rng: np.random.Generator,
    center: tuple[float, float] = (0.5, 0.25),
    radius: float = 1.9,
    noise: float = 0.05,
) -> np.ndarray:
    """A circle of probe points; the default parameters encircle the moons
    well outside their support."""
    t = rng.uniform(0.0, 2.0 * np.pi, n)
    pts = np.stack([np.cos(t), np.sin(t)], axis=1) * radius + np.asarray(center)
    return pts + rng.standard_normal((n, 2)) * noise


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def save_samples(path, samples: np.ndarray) -> None:
    """CSV, one point per row, floats as shortest round-trip repr."""
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(samples.shape[1])])
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def load_samples(path) -> np.ndarray:
    import os

    if not os.path.exists(path):
        raise UsageError(f"data file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    if not rows:
        raise UsageError(f"no data rows in {path}")
    out = np.array(rows, dtype=float)
    if out.shape[1] != len(header):
        raise UsageError(f"ragged CSV {path}")
    return out


def save_spec(path, spec) -> None:
    with open(path, "w") as fh:
        json.dump(spec.to_dict(), fh, sort_keys=True, indent=2)
        fh.write("\n")


def load_spec(path):
    import os

    if not os.path.exists(path):
        raise UsageError(f"spec file not found: {path}")
    with open(path) as fh:
        obj = json.load(fh)
    kind = obj.get("type")
    if kind == "planar_mixture":
        return MixtureSpec(
            np.array(obj["centers"], dtype=float),
            list(obj["families"]),
            np.array(obj["scales"], dtype=float),
            np.array(obj["weights"], dtype=float),
        )
    if kind == "chain":
        return MarkovSpec(
            np.array(obj["transition"], dtype=float),
            np.array(obj["centers"], dtype=float),
            np.array(obj["variances"], dtype=float),
            int(obj["n_starts"]),
            int(obj["traj_len"]),
        )
    raise UsageError(f"unknown spec type {kind!r} in {path}")
