"""Brute-force integration oracles.

Everything here exists to cross-check closed-form and Monte Carlo results
produced elsewhere in the package. Nothing in this module is fast or
differentiable; it is deliberately the dumbest correct thing we could write,
so that agreement with it means something.

Densities are passed as callables mapping an ``(n, d)`` array of points to an
``(n,)`` array of values. Bounds are a sequence of ``(lo, hi)`` pairs, one per
axis.
"""

from __future__ import annotations

from typing import Callable, Sequence, Tuple

import numpy as np
from scipy.stats import qmc

from .errors import OracleConvergenceError, SupportViolationError, UsageError

Density = Callable[[np.ndarray], np.ndarray]
Bounds = Sequence[Tuple[float, float]]

MIN_RESOLUTION = 101


def _midpoint_axes(bounds: Bounds, resolution: int):
    """Midpoint nodes per axis and the cell volume."""
    axes = []
    volume = 1.0
    for lo, hi in bounds:
        if not hi > lo:
            raise UsageError(f"empty integration interval ({lo}, {hi})")
        step = (hi - lo) / resolution
        axes.append(lo + step * (np.arange(resolution) + 0.5))
        volume *= step
    return axes, volume


def _grid_points(bounds: Bounds, resolution: int) -> Tuple[np.ndarray, float]:
    axes, volume = _midpoint_axes(bounds, resolution)
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.stack([m.ravel() for m in mesh], axis=1)
    return points, volume


def _midpoint_sum(f: Density, bounds: Bounds, resolution: int) -> float:
    points, volume = _grid_points(bounds, resolution)
    values = np.asarray(f(points), dtype=float)
    if values.shape != (points.shape[0],):
        raise UsageError(
            f"integrand returned shape {values.shape}, expected ({points.shape[0]},)"
        )
    if not np.all(np.isfinite(values)):
        raise UsageError("integrand produced non-finite values on the grid")
    return float(values.sum() * volume)


def grid_integrate(
    f: Density,
    bounds: Bounds,
    resolution: int = 1001,
    check: bool = True,
    rtol: float = 1e-4,
) -> float:
    """Midpoint-rule integral of ``f`` over a box.

    With ``check=True`` the integral is also evaluated at half the
    resolution; if doubling the resolution moves the result by more than
    ``rtol`` relative, an :class:`OracleConvergenceError` is raised instead
    of returning a number nobody should trust.
    """
    if resolution < MIN_RESOLUTION:
        raise UsageError(f"resolution {resolution} < {MIN_RESOLUTION}")
    fine = _midpoint_sum(f, bounds, resolution)
    if check:
        coarse = _midpoint_sum(f, bounds, resolution // 2)
        scale = max(abs(fine), 1e-300)
        rel = abs(fine - coarse) / scale
        if rel > rtol:
            raise OracleConvergenceError(coarse, fine, rel)
    return fine


def oracle_d2(
    p: Density,
    q: Density,
    bounds: Bounds,
    resolution: int = 1001,
    check: bool = True,
    rtol: float = 1e-4,
) -> float:
    """log of the chi-square-like integral of p^2 / q over a box.

    Grid cells where ``p`` carries no mass are dropped. Cells where ``p``
    carries mass but ``q`` has underflowed to zero are an absolute-continuity
    violation and raise :class:`SupportViolationError`: the target quantity
    is infinite there, not merely hard to compute.
    """

    def integrate(res: int) -> float:
        points, volume = _grid_points(bounds, res)
        pv = np.asarray(p(points), dtype=float)
        qv = np.asarray(q(points), dtype=float)
        live = pv > pv.max() * 1e-15
        if np.any(qv[live] <= 0.0):
            raise SupportViolationError(
                "q vanishes on grid cells where p has mass; p^2/q is not integrable"
            )
        ratio = np.zeros_like(pv)
        ratio[live] = pv[live] ** 2 / qv[live]
        return float(ratio.sum() * volume)

    if resolution < MIN_RESOLUTION:
        raise UsageError(f"resolution {resolution} < {MIN_RESOLUTION}")
    fine = integrate(resolution)
    if check:
        coarse = integrate(resolution // 2)
        rel = abs(fine - coarse) / max(abs(fine), 1e-300)
        if rel > rtol:
            raise OracleConvergenceError(coarse, fine, rel)
    if fine <= 0.0:
        raise UsageError("integral of p^2/q is non-positive; p has no mass on the box")
    return float(np.log(fine))


def oracle_conditional_norm(
    p_joint: Density,
    bounds: Bounds,
    resolution: int = 1001,
    mass_tol: float = 1e-6,
) -> float:
    """Nested quadrature of the squared conditional, averaged over the first axis.

    Computes the double integral of ``p(x, y)^2 / p(x)`` over the box, where
    ``p(x)`` is itself obtained by quadrature along the second axis. Columns
    whose marginal mass underflows are skipped; if the skipped columns hold
    more than ``mass_tol`` of the total marginal mass the answer would be
    meaningless and a :class:`UsageError` is raised.
    """
    if len(bounds) != 2:
        raise UsageError("oracle_conditional_norm expects exactly two axes (x, y)")
    if resolution < MIN_RESOLUTION:
        raise UsageError(f"resolution {resolution} < {MIN_RESOLUTION}")
    (x_axis, y_axis), _ = _midpoint_axes(bounds, resolution)
    x_step = (bounds[0][1] - bounds[0][0]) / resolution
    y_step = (bounds[1][1] - bounds[1][0]) / resolution

    xg, yg = np.meshgrid(x_axis, y_axis, indexing="ij")
    points = np.stack([xg.ravel(), yg.ravel()], axis=1)
    pv = np.asarray(p_joint(points), dtype=float).reshape(resolution, resolution)

    marginal = pv.sum(axis=1) * y_step            # p(x) per column
    column_sq = (pv ** 2).sum(axis=1) * y_step    # integral of p(x,y)^2 dy per column
    live = marginal > marginal.max() * 1e-13
    skipped_mass = float(marginal[~live].sum() * x_step)
    total_mass = float(marginal.sum() * x_step)
    if total_mass <= 0.0:
        raise UsageError("joint density has no mass on the box")
    if skipped_mass > mass_tol * total_mass:
        raise UsageError(
            f"skipped {skipped_mass:.3e} marginal mass (> {mass_tol:.1e} relative); "
            "enlarge the box or raise the resolution"
        )
    return float((column_sq[live] / marginal[live]).sum() * x_step)


def qmc_integrate(
    f: Density,
    bounds: Bounds,
    n: int = 1 << 16,
    seed: int = 0,
    replicates: int = 16,
) -> Tuple[float, float]:
    """Randomized quasi-Monte Carlo integral with a standard error.

    For three and more dimensions a grid is wasteful; scrambled Sobol points
    converge much faster and the scramble randomization yields an honest
    error bar: the integral is estimated on ``replicates`` independently
    scrambled point sets and the spread of those estimates is reported.
    """
    d = len(bounds)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    volume = float(np.prod(hi - lo))
    m = max(int(np.ceil(np.log2(max(n // replicates, 2)))), 4)
    estimates = np.empty(replicates)
    for r in range(replicates):
        sampler = qmc.Sobol(d=d, scramble=True, seed=seed * replicates + r)
        u = sampler.random_base2(m=m)
        points = lo + u * (hi - lo)
        estimates[r] = np.asarray(f(points), dtype=float).mean() * volume
    value = float(estimates.mean())
    stderr = float(estimates.std(ddof=1) / np.sqrt(replicates))
    return value, stderr
