"""Variational second-order costs and their per-batch statistics.

All three costs share one shape: a numerator statistic k (an expectation of
the model under data) and a denominator statistic v (a quadratic norm of the
model), combined as J = k / sqrt(v). J is maximized by the target density
(or density ratio) and its supremum encodes the information quantity:

    density      J_p      sup = sqrt(int p^2)          H2 = -2 log sup
    divergence   J_{p,q}  sup = sqrt(int p^2 / q)      D2 = +2 log sup
    conditional  J_{Y|X}  sup = sqrt(int int p^2(y|x) p(x))

Both statistics are noisy per batch, and the ascent direction of J is a
ratio of their expectations, so each is smoothed with a bias-corrected
exponential filter (:class:`AdpFilter`) and the gradient combines raw
per-batch gradients with the filtered scalars
(:func:`variance_reduced_grad`). J is invariant to scaling the model output
by any positive constant, and so is the resulting update; tests pin that
down to roundoff.

k and v for a batch are exact closed-form double sums over the emitted
Gaussian components (no samples are drawn from the model), which is what
makes the whole scheme tractable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DegenerateModelError, TrainingDivergedError, UsageError
from .network import ImogNetwork, RatioNetwork, ScanInput

TELEMETRY_FIELDS = ("step", "k_raw", "v_raw", "k_hat", "v_hat", "J", "H2_estimate")


class AdpFilter:
    """Bias-corrected exponential moving average.

    update(x) returns ema / (1 - beta^step); the first update returns x
    itself exactly. Non-finite inputs abort: by the time a NaN reaches the
    filter the run is unrecoverable and the step index is what you want.
    """

    def __init__(self, beta: float):
        if not 0.0 < beta < 1.0:
            raise UsageError(f"filter beta must be in (0, 1), got {beta}")
        self.beta = float(beta)
        self.biased = 0.0
        self.step = 0

    def update(self, raw: float) -> float:
        raw = float(raw)
        if not np.isfinite(raw):
            raise TrainingDivergedError(
                f"non-finite statistic {raw} entered the filter", step=self.step + 1
            )
        self.step += 1
        self.biased = self.beta * self.biased + (1.0 - self.beta) * raw
        return self.biased / (1.0 - self.beta ** self.step)

    @property
    def value(self) -> float:
        if self.step == 0:
            raise UsageError("filter has not seen any values")
        return self.biased / (1.0 - self.beta ** self.step)


def adp_update(filt: AdpFilter, raw: float) -> float:
    return filt.update(raw)


@dataclass
class CostBatchStats:
    """Raw statistics of one batch and their parameter gradients."""

    k_raw: float
    v_raw: float
    k_grad: np.ndarray
    v_grad: np.ndarray


def _scan_grid(n_slots: int, noise_batch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """All (slot, noise draw) combinations in a fixed order: noise-major,
    slots contiguous. Reduction order is part of the determinism contract."""
    m = noise_batch.shape[0]
    idx = np.tile(np.arange(n_slots), m)
    noise = np.repeat(noise_batch, n_slots, axis=0)
    return idx, noise


def density_stats(
    net: ImogNetwork,
    data_batch: np.ndarray,
    noise_batch: np.ndarray,
    tape: ad.GradTape,
) -> CostBatchStats:
    """Batch statistics of the density cost J_p.

    Emits all n_slots x M_noise components, then

        v_raw = mean over all (N M)^2 component pairs of w w' N(m - m', A + A')
        k_raw = mean over all N M components x M_data points of w N(m - x, A)

    both with exact pairwise overlaps, no model sampling.
    """
    data_batch = np.atleast_2d(np.asarray(data_batch, dtype=float))
    noise_batch = np.atleast_2d(np.asarray(noise_batch, dtype=float))
    if data_batch.shape[1] != net.out_dim:
        raise UsageError(f"data dim {data_batch.shape[1]} != model dim {net.out_dim}")
    idx, noise = _scan_grid(net.n_slots, noise_batch)
    n_comp = idx.shape[0]
    n_data = data_batch.shape[0]
    ones = np.ones(n_data)
    zeros = np.zeros_like(data_batch)
    with tape:
        w, mu, va = net.emit(ScanInput(idx, noise))
        v_expr = ad.mul(ad.mog_cross(w, mu, va, w, mu, va), 1.0 / n_comp**2)
        k_expr = ad.mul(ad.mog_cross(w, mu, va, ones, data_batch, zeros),
                        1.0 / (n_comp * n_data))
    return CostBatchStats(
        k_raw=k_expr.item(),
        v_raw=v_expr.item(),
        k_grad=ad.backward(tape, k_expr),
        v_grad=ad.backward(tape, v_expr),
    )


def divergence_stats(
    net: RatioNetwork,
    p_batch: np.ndarray,
    q_batch: np.ndarray,
    tape: ad.GradTape,
) -> CostBatchStats:
    """Batch statistics of the divergence cost J_{p,q}:
    k = mean of T over the p batch, v = mean of T^2 over the q batch."""
    p_batch = np.atleast_2d(np.asarray(p_batch, dtype=float))
    q_batch = np.atleast_2d(np.asarray(q_batch, dtype=float))
    with tape:
        t_p = net.forward(p_batch)
        t_q = net.forward(q_batch)
        k_expr = ad.tmean(t_p)
        v_expr = ad.tmean(ad.mul(t_q, t_q))
    if v_expr.item() <= 0.0:
        raise DegenerateModelError("normalizer E_q[T^2] vanished; T underflowed on q")
    return CostBatchStats(
        k_raw=k_expr.item(),
        v_raw=v_expr.item(),
        k_grad=ad.backward(tape, k_expr),
        v_grad=ad.backward(tape, v_expr),
    )


def conditional_stats(
    net: ImogNetwork,
    pair_batch: np.ndarray,
    tape: ad.GradTape,
    *,
    draws: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray],
) -> CostBatchStats:
    """Batch statistics of the conditional cost J_{Y|X}.

    Each pair (x_i, y_i) gets two independent scan draws (slot index +
    noise), passed in as ``draws = (idx1, noise1, idx2, noise2)`` so the
    caller owns the randomness. The two draws at the same x_i pair up for
    the normalizer,

        v_raw = mean_i w_i w'_i N(m_i - m'_i, A_i + A'_i)
        k_raw = mean over both draws of w N(m - y_i, A),

    which is unbiased because the uniform slot draw supplies the 1/N weights
    implicitly.
    """
    pair_batch = np.atleast_2d(np.asarray(pair_batch, dtype=float))
    dx, dy = net.cond_dim, net.out_dim
    if pair_batch.shape[1] != dx + dy:
        raise UsageError(
            f"pair batch has dim {pair_batch.shape[1]}, expected {dx}+{dy}"
        )
    x, y = pair_batch[:, :dx], pair_batch[:, dx:]
    m = pair_batch.shape[0]
    idx1, noise1, idx2, noise2 = draws
    if not (len(idx1) == len(idx2) == noise1.shape[0] == noise2.shape[0] == m):
        raise UsageError("draws do not match the pair batch size")
    ones = np.ones(m)
    zeros = np.zeros_like(y)
    with tape:
        w1, mu1, va1 = net.emit(ScanInput(idx1, noise1, x))
        w2, mu2, va2 = net.emit(ScanInput(idx2, noise2, x))
        v_expr = ad.mul(ad.mog_pair(w1, mu1, va1, w2, mu2, va2), 1.0 / m)
        k1 = ad.mog_pair(w1, mu1, va1, ones, y, zeros)
        k2 = ad.mog_pair(w2, mu2, va2, ones, y, zeros)
        k_expr = ad.mul(ad.add(k1, k2), 0.5 / m)
    return CostBatchStats(
        k_raw=k_expr.item(),
        v_raw=v_expr.item(),
        k_grad=ad.backward(tape, k_expr),
        v_grad=ad.backward(tape, v_expr),
    )


def variance_reduced_grad(
    stats: CostBatchStats, k_filtered: float, v_filtered: float
) -> np.ndarray:
    """Ascent direction for J = k / sqrt(v): raw per-batch gradients, filtered
    scalars,

        grad = k_grad / sqrt(v_hat) - (k_hat / 2) v_grad / v_hat^{3/2}.

    Scaling the model output by beta scales k_grad and k_hat by beta, v_grad
    and v_hat by beta^2; the expression above is then invariant, so a
    reparameterized model walks the same trajectory.
    """
    if not v_filtered > 0.0:
        raise DegenerateModelError(f"filtered normalizer must be positive, got {v_filtered}")
    root = np.sqrt(v_filtered)
    return stats.k_grad / root - 0.5 * k_filtered * stats.v_grad / (v_filtered * root)


def h2_estimate(k_filtered: float, v_filtered: float) -> float:
    """-2 log(k / sqrt(v)): the entropy read-out of a converged density run."""
    if not (k_filtered > 0.0 and v_filtered > 0.0):
        raise UsageError(
            f"entropy read-out needs positive statistics, got k={k_filtered}, v={v_filtered}"
        )
    return float(-2.0 * np.log(k_filtered / np.sqrt(v_filtered)))


def write_telemetry(path, rows: Sequence[dict]) -> None:
    """Telemetry CSV: one row per step, columns TELEMETRY_FIELDS. Floats use
    shortest round-trip repr so reruns are byte-identical."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TELEMETRY_FIELDS)
        for row in rows:
            writer.writerow(
                [row["step"]] + [repr(float(row[f])) for f in TELEMETRY_FIELDS[1:]]
            )
