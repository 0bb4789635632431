"""Training loops for the four estimation modes, and the mutual-information
pipeline built on top of them.

Every loop is the same stochastic ascent: per step, draw a minibatch, form
the exact closed-form batch statistics (k, v) and their gradients, update
the two bias-corrected filters, and take one step along the
variance-reduced direction. The loops differ only in what k and v are; see
:mod:`sgm.costs`.

Determinism contract: given a config (which includes the seed), reruns
produce bit-identical telemetry and final parameters. All randomness flows
through one generator per run in a fixed call order, and every reduction is
an ordered numpy sum.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .costs import (
    AdpFilter,
    conditional_stats,
    density_stats,
    divergence_stats,
    h2_estimate,
    variance_reduced_grad,
)
from .errors import TrainingDivergedError, UsageError
from .mixture import FiniteMixture, cs_qmi
from .network import (
    GeneratorNetwork,
    ImogNetwork,
    RatioNetwork,
    ScanInput,
    add_to_params,
)

MODES = ("density", "conditional", "ratio", "adversarial")

_COLD_START_LIMIT = 50
_LN2 = float(np.log(2.0))


@dataclass
class TrainConfig:
    """Everything a run needs; hashable content, JSON-friendly.

    n_components is the slot count N of the scan; batch is both the data
    minibatch size and the noise draw count M; lr is the ascent rate r;
    beta1 and beta2 smooth the normalizer and numerator statistics.
    """

    mode: str
    n_components: int = 300
    batch: int = 8
    lr: float = 0.05
    beta1: float = 0.99
    beta2: float = 0.99
    steps: int = 2000
    var_floor: float = 1e-6
    seed: int = 0
    hidden: tuple = (64, 64)
    noise_dim: int = 1
    weight_cap: float = 4.0
    weight_scale: float = 1.0
    x_dim: int = 1
    disc_steps: int = 5
    init_spread: float = 0.35

    def __post_init__(self):
        if self.mode not in MODES:
            raise UsageError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.n_components < 1 or self.batch < 2 or self.steps < 1:
            raise UsageError("n_components, batch, steps must be positive (batch >= 2)")
        if not self.lr > 0.0:
            raise UsageError("lr must be positive")
        for b in (self.beta1, self.beta2):
            if not 0.0 < b < 1.0:
                raise UsageError(f"filter betas must be in (0, 1), got {b}")
        if self.var_floor <= 0.0 or self.noise_dim < 1 or self.x_dim < 1:
            raise UsageError("bad var_floor / noise_dim / x_dim")
        if self.disc_steps < 1:
            raise UsageError("disc_steps must be at least 1")
        if not 0.0 < self.init_spread <= 1.0:
            raise UsageError("init_spread must be in (0, 1]")
        if len(tuple(self.hidden)) != 2:
            raise UsageError("hidden must name the two layer widths")
        self.hidden = tuple(int(h) for h in self.hidden)


@dataclass
class TrainReport:
    """Outcome of one run: telemetry (one row per executed step), the final
    filtered statistics and their read-outs, the trained network, and the
    wall-clock spent (kept out of every serialized artifact)."""

    mode: str
    telemetry: list[dict]
    j_final: float
    k_hat: float
    v_hat: float
    network: object
    wall_clock: float
    h2: Optional[float] = None
    d2: Optional[float] = None
    checkpoint_path: Optional[str] = None
    extras: dict = field(default_factory=dict)


def _telemetry_row(step: int, stats, k_hat: float, v_hat: float) -> dict:
    j = k_hat / np.sqrt(v_hat) if v_hat > 0.0 else 0.0
    return {
        "step": step,
        "k_raw": stats.k_raw,
        "v_raw": stats.v_raw,
        "k_hat": k_hat,
        "v_hat": v_hat,
        "J": j,
        "H2_estimate": float(-2.0 * np.log(j)) if j > 0.0 else float("nan"),
    }


def _check_grad(grad: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergedError("non-finite gradient", step=step)


class _ColdStartGuard:
    """Aborts after too many consecutive zero numerators: the model has no
    mass anywhere near the data and the gradient carries no signal."""

    def __init__(self, limit: int = _COLD_START_LIMIT):
        self.limit = limit
        self.run = 0

    def observe(self, k_raw: float, step: int) -> None:
        self.run = self.run + 1 if k_raw == 0.0 else 0
        if self.run >= self.limit:
            raise TrainingDivergedError(
                f"k underflowed to zero for {self.limit} consecutive steps; "
                "the model carries no mass near the data (cold start). "
                "Initialize with a data summary or widen the initial variances.",
                step=step,
            )


def train_density(config: TrainConfig, data: np.ndarray) -> TrainReport:
    """Fit the scan mixture to samples by ascending J_p; the converged
    read-out -2 log J estimates the second-order entropy of the data."""
    if config.mode != "density":
        raise UsageError(f"config mode is {config.mode!r}, expected 'density'")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n = data.shape[0]
    if n < 2:
        raise UsageError("need at least two data points")
    rng = np.random.default_rng(config.seed)
    net = ImogNetwork(
        config.n_components, data.shape[1], config.noise_dim, 0, config.hidden,
        config.var_floor, config.weight_cap, config.weight_scale,
        data=data, seed=config.seed, init_spread=config.init_spread,
    )
    v_filter = AdpFilter(config.beta1)
    k_filter = AdpFilter(config.beta2)
    guard = _ColdStartGuard()
    telemetry: list[dict] = []
    t0 = time.perf_counter()
    for step in range(1, config.steps + 1):
        batch = data[rng.integers(0, n, size=config.batch)]
        noise = rng.uniform(0.0, 1.0, size=(config.batch, config.noise_dim))
        tape = ad.GradTape(net.params)
        stats = density_stats(net, batch, noise, tape)
        v_hat = v_filter.update(stats.v_raw)
        k_hat = k_filter.update(stats.k_raw)
        guard.observe(stats.k_raw, step)
        grad = variance_reduced_grad(stats, k_hat, v_hat)
        _check_grad(grad, step)
        add_to_params(net, config.lr * grad)
        telemetry.append(_telemetry_row(step, stats, k_hat, v_hat))
    wall = time.perf_counter() - t0
    return TrainReport(
        mode="density", telemetry=telemetry,
        j_final=k_hat / np.sqrt(v_hat), k_hat=k_hat, v_hat=v_hat,
        network=net, wall_clock=wall, h2=h2_estimate(k_hat, v_hat),
    )


def train_conditional(config: TrainConfig, pairs: np.ndarray) -> TrainReport:
    """Fit the conditional scan mixture to (x, y) pairs by ascending J_{Y|X};
    -2 log J at convergence estimates the conditional second-order entropy."""
    if config.mode != "conditional":
        raise UsageError(f"config mode is {config.mode!r}, expected 'conditional'")
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    n, d = pairs.shape
    if d <= config.x_dim:
        raise UsageError(f"pairs of dim {d} leave no y columns after x_dim={config.x_dim}")
    if n < 2:
        raise UsageError("need at least two pairs")
    dx = config.x_dim
    rng = np.random.default_rng(config.seed)
    net = ImogNetwork(
        config.n_components, d - dx, config.noise_dim, dx, config.hidden,
        config.var_floor, config.weight_cap, config.weight_scale,
        data=pairs[:, dx:], seed=config.seed, init_spread=config.init_spread,
    )
    v_filter = AdpFilter(config.beta1)
    k_filter = AdpFilter(config.beta2)
    guard = _ColdStartGuard()
    telemetry: list[dict] = []
    t0 = time.perf_counter()
    m = config.batch
    for step in range(1, config.steps + 1):
        batch = pairs[rng.integers(0, n, size=m)]
        draws = (
            rng.integers(0, config.n_components, size=m),
            rng.uniform(0.0, 1.0, size=(m, config.noise_dim)),
            rng.integers(0, config.n_components, size=m),
            rng.uniform(0.0, 1.0, size=(m, config.noise_dim)),
        )
        tape = ad.GradTape(net.params)
        stats = conditional_stats(net, batch, tape, draws=draws)
        v_hat = v_filter.update(stats.v_raw)
        k_hat = k_filter.update(stats.k_raw)
        guard.observe(stats.k_raw, step)
        if v_hat <= 0.0:
            raise TrainingDivergedError("conditional normalizer underflowed", step=step)
        grad = variance_reduced_grad(stats, k_hat, v_hat)
        _check_grad(grad, step)
        add_to_params(net, config.lr * grad)
        telemetry.append(_telemetry_row(step, stats, k_hat, v_hat))
    wall = time.perf_counter() - t0
    return TrainReport(
        mode="conditional", telemetry=telemetry,
        j_final=k_hat / np.sqrt(v_hat), k_hat=k_hat, v_hat=v_hat,
        network=net, wall_clock=wall, h2=h2_estimate(k_hat, v_hat),
    )


def train_ratio(
    config: TrainConfig, p_samples: np.ndarray, q_samples: np.ndarray
) -> TrainReport:
    """Fit a positive scalar network to the density ratio p/q by ascending
    J_{p,q}; +2 log J at convergence estimates the second-order divergence."""
    if config.mode != "ratio":
        raise UsageError(f"config mode is {config.mode!r}, expected 'ratio'")
    p_samples = np.atleast_2d(np.asarray(p_samples, dtype=float))
    q_samples = np.atleast_2d(np.asarray(q_samples, dtype=float))
    if p_samples.shape[1] != q_samples.shape[1]:
        raise UsageError("p and q samples disagree on dimension")
    if min(p_samples.shape[0], q_samples.shape[0]) < 2:
        raise UsageError("need at least two samples on each side")
    rng = np.random.default_rng(config.seed)
    net = RatioNetwork(
        p_samples.shape[1], config.hidden,
        output_scale=config.weight_scale, seed=config.seed,
    )
    v_filter = AdpFilter(config.beta1)
    k_filter = AdpFilter(config.beta2)
    telemetry: list[dict] = []
    t0 = time.perf_counter()
    for step in range(1, config.steps + 1):
        p_batch = p_samples[rng.integers(0, p_samples.shape[0], size=config.batch)]
        q_batch = q_samples[rng.integers(0, q_samples.shape[0], size=config.batch)]
        tape = ad.GradTape(net.params)
        stats = divergence_stats(net, p_batch, q_batch, tape)
        v_hat = v_filter.update(stats.v_raw)
        k_hat = k_filter.update(stats.k_raw)
        grad = variance_reduced_grad(stats, k_hat, v_hat)
        _check_grad(grad, step)
        add_to_params(net, config.lr * grad)
        telemetry.append(_telemetry_row(step, stats, k_hat, v_hat))
    wall = time.perf_counter() - t0
    j_final = k_hat / np.sqrt(v_hat)
    return TrainReport(
        mode="ratio", telemetry=telemetry,
        j_final=j_final, k_hat=k_hat, v_hat=v_hat,
        network=net, wall_clock=wall, d2=float(2.0 * np.log(j_final)),
    )


def train_adversarial(
    config: TrainConfig,
    data: np.ndarray,
    ood_probe: Optional[np.ndarray] = None,
) -> tuple[TrainReport, TrainReport]:
    """Toy planar adversarial mode.

    The critic ascends J_{g,p} (numerator on generated points, normalizer on
    data), the generator descends the same objective; at the critic's
    optimum its output is proportional to the density ratio g/p, so after
    training it scores off-data points high and on-data points low. Each
    generator step is preceded by ``config.disc_steps`` critic steps.

    Returns (generator report, critic report). The critic report's extras
    carry its scores on a held-out slice of the data and on ``ood_probe``
    (default: a synthesized ring around the data), plus the resulting
    detection AUROC.
    """
    if config.mode != "adversarial":
        raise UsageError(f"config mode is {config.mode!r}, expected 'adversarial'")
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if data.shape[1] != 2:
        raise UsageError("the adversarial mode is the planar toy; data must be 2-D")
    rng = np.random.default_rng(config.seed)
    shuffled = data[rng.permutation(data.shape[0])]
    n_held = max(32, data.shape[0] // 5)
    held_in, train = shuffled[:n_held], shuffled[n_held:]
    if train.shape[0] < config.batch:
        raise UsageError("not enough data left after the held-out split")

    disc = RatioNetwork(2, config.hidden, seed=config.seed)
    # the generator is deliberately low-capacity. Its ratio against the data
    # is the critic's whole signal; a generator strong enough to match the
    # data erases that signal, which at image scale never happens but on a
    # planar toy takes a few hundred steps
    gen = GeneratorNetwork(2, noise_dim=2, hidden=(8, 8),
                           data=train, seed=config.seed + 1)
    v_filter = AdpFilter(config.beta1)
    k_filter = AdpFilter(config.beta2)
    disc_rows: list[dict] = []
    gen_rows: list[dict] = []
    # replay buffer of earlier fakes: half of every critic batch revisits
    # them, so the ratio surface stays pinned over everything the generator
    # has ever produced instead of only its latest, narrowest output
    replay: list[np.ndarray] = []
    warned_collapse = False
    t0 = time.perf_counter()
    for step in range(1, config.steps + 1):
        for _ in range(config.disc_steps):
            u = rng.uniform(0.0, 1.0, size=(config.batch, gen.noise_dim))
            fake = gen.forward(u).data
            replay.append(fake)
            old = replay[rng.integers(0, len(replay))]
            half = config.batch // 2
            fake = np.concatenate([fake[: config.batch - half], old[:half]])
            batch = train[rng.integers(0, train.shape[0], size=config.batch)]
            tape = ad.GradTape(disc.params)
            stats = divergence_stats(disc, fake, batch, tape)
            v_hat = v_filter.update(stats.v_raw)
            k_hat = k_filter.update(stats.k_raw)
            grad = variance_reduced_grad(stats, k_hat, v_hat)
            _check_grad(grad, len(disc_rows) + 1)
            # the update magnitude rides k, which climbs toward the output
            # cap as the critic separates the clouds; a norm clip bounds the
            # step without touching its direction
            gnorm = float(np.linalg.norm(grad))
            if gnorm > 1.0:
                grad = grad / gnorm
            add_to_params(disc, config.lr * grad)
            # the cost fixes the critic only up to a scale, so two gauge
            # pins keep the dynamics in the live range. The output offset is
            # leakily recentered so data pre-activations stay off the tanh
            # rails, and the output scale is renormalized toward v = 1 so
            # the 1/v^(3/2) factor in the update never explodes when the
            # critic pushes in-distribution scores toward zero.
            disc.b3.data -= 0.1 * disc.pre_scores(batch).mean()
            disc.output_scale *= float(np.clip(v_hat ** -0.25, 0.8, 1.25))
            disc_rows.append(_telemetry_row(len(disc_rows) + 1, stats, k_hat, v_hat))
        u = rng.uniform(0.0, 1.0, size=(config.batch, gen.noise_dim))
        tape = ad.GradTape(gen.params)
        with tape:
            fake_t = gen.forward(ad.Tensor(u))
            # log of the mean score: same minimizer, but the step size no
            # longer rides the critic's exponential output scale
            objective = ad.log(ad.tmean(disc.forward(fake_t)))
        # two time scales: the critic runs much hotter than the generator,
        # so the ratio surface tracks the fakes instead of chasing them
        gen_grad = ad.backward(tape, objective)
        _check_grad(gen_grad, step)
        add_to_params(gen, -0.05 * config.lr * gen_grad)
        if not warned_collapse and fake_t.data.var(axis=0).max() < 1e-6:
            warnings.warn("generator output variance below 1e-6: mode collapse")
            warned_collapse = True
        row = _telemetry_row(step, stats, k_hat, v_hat)
        row["k_raw"] = objective.item()
        gen_rows.append(row)
    wall = time.perf_counter() - t0

    if ood_probe is None:
        center = train.mean(axis=0)
        radius = 1.5 * np.quantile(np.linalg.norm(train - center, axis=1), 0.99)
        t = rng.uniform(0.0, 2.0 * np.pi, n_held)
        ood_probe = center + radius * np.stack([np.cos(t), np.sin(t)], axis=1)
    scores_in = disc.forward(held_in).data
    scores_out = disc.forward(np.atleast_2d(ood_probe)).data
    from .metrics import auroc  # local import; metrics does not know training

    extras = {
        "scores_in": scores_in,
        "scores_out": scores_out,
        "auroc": auroc(scores_in, scores_out),
    }
    j_final = k_hat / np.sqrt(v_hat)
    disc_report = TrainReport(
        mode="adversarial", telemetry=disc_rows,
        j_final=j_final, k_hat=k_hat, v_hat=v_hat,
        network=disc, wall_clock=wall, d2=float(2.0 * np.log(j_final)),
        extras=extras,
    )
    gen_report = TrainReport(
        mode="adversarial", telemetry=gen_rows,
        j_final=j_final, k_hat=k_hat, v_hat=v_hat,
        network=gen, wall_clock=wall,
    )
    return gen_report, disc_report


# ---------------------------------------------------------------------------
# materialization and the mutual-information pipeline
# ---------------------------------------------------------------------------

def materialize_mixture(
    net: ImogNetwork, n_draws: int, rng: np.random.Generator
) -> FiniteMixture:
    """Freeze the continuum model into a finite mixture: all slots crossed
    with ``n_draws`` noise draws, each component weighted w / (N n_draws)."""
    if net.cond_dim != 0:
        raise UsageError("conditional networks materialize per conditioning point")
    noise = rng.uniform(0.0, 1.0, size=(n_draws, net.noise_dim))
    idx = np.tile(np.arange(net.n_slots), n_draws)
    noise_rows = np.repeat(noise, net.n_slots, axis=0)
    w, mu, va = net.emit(ScanInput(idx, noise_rows))
    return FiniteMixture.from_arrays(w.data / idx.shape[0], mu.data, va.data)


def materialize_conditional(
    net: ImogNetwork, x: np.ndarray, n_draws: int, rng: np.random.Generator
) -> FiniteMixture:
    """Freeze the conditional model at one conditioning point x into a finite
    mixture over y."""
    if net.cond_dim == 0:
        raise UsageError("network is unconditional")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (net.cond_dim,):
        raise UsageError(f"x has shape {x.shape}, expected ({net.cond_dim},)")
    noise = rng.uniform(0.0, 1.0, size=(n_draws, net.noise_dim))
    idx = np.tile(np.arange(net.n_slots), n_draws)
    noise_rows = np.repeat(noise, net.n_slots, axis=0)
    cond = np.tile(x, (idx.shape[0], 1))
    w, mu, va = net.emit(ScanInput(idx, noise_rows, cond))
    return FiniteMixture.from_arrays(w.data / idx.shape[0], mu.data, va.data)


def mi_pipeline(
    pairs: np.ndarray,
    config: TrainConfig,
    material_draws: int = 10,
    with_reports: bool = False,
) -> dict:
    """Three dependence estimates from one paired sample.

    (a) ``qmi_sgm``: fit the joint density, freeze it to a finite mixture,
        and evaluate the closed-form Cauchy-Schwarz dependence measure.
    (b) ``renyi_mi_ratio``: fit the density ratio between the pairs and a
        y-shuffled copy (shuffling destroys dependence, keeps marginals);
        report the divergence read-out 2 log J in bits.
    (c) ``iq_hat``: plug the same trained ratio into
        -1/2 log2(E_shuffled[r] / E_paired[r]).

    (b) and (c) share one trained network but estimate different functionals
    and generally disagree on dependent data; all three vanish on
    independent pairs.

    All three quantities are invariant under separate affine maps of each
    coordinate, so the pipeline standardizes columns to zero mean and unit
    spread before training; learning-rate defaults then mean the same thing
    on any data scale. Networks in the returned reports live in the
    standardized coordinates.
    """
    pairs = np.atleast_2d(np.asarray(pairs, dtype=float))
    n, d = pairs.shape
    if n < 100:
        raise UsageError(f"refusing to estimate dependence from {n} pairs; need >= 100")
    dx = config.x_dim
    if d <= dx:
        raise UsageError(f"pairs of dim {d} leave no y columns after x_dim={dx}")
    sd = pairs.std(axis=0)
    pairs = (pairs - pairs.mean(axis=0)) / np.where(sd > 0.0, sd, 1.0)

    density_report = train_density(replace(config, mode="density"), pairs)
    frozen = materialize_mixture(
        density_report.network, material_draws, np.random.default_rng(config.seed + 101)
    )
    qmi_sgm = cs_qmi(frozen, list(range(dx)), list(range(dx, d)))

    shuffle_rng = np.random.default_rng(config.seed + 202)
    q_samples = pairs.copy()
    q_samples[:, dx:] = pairs[shuffle_rng.permutation(n), dx:]
    ratio_report = train_ratio(replace(config, mode="ratio"), pairs, q_samples)
    renyi_mi_ratio = ratio_report.d2 / _LN2

    r_paired = ratio_report.network.forward(pairs).data
    r_shuffled = ratio_report.network.forward(q_samples).data
    iq_hat = float(-0.5 * np.log2(r_shuffled.mean() / r_paired.mean()))

    out = {
        "qmi_sgm": float(qmi_sgm),
        "renyi_mi_ratio": float(renyi_mi_ratio),
        "iq_hat": iq_hat,
    }
    if with_reports:
        out["density_report"] = density_report
        out["ratio_report"] = ratio_report
    return out
