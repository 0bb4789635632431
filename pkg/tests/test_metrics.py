"""Evaluation metrics: frozen hand-computed values and invariances."""

import numpy as np
import pytest

from sgm.errors import UsageError
from sgm.metrics import (
    EvalReport,
    auprc,
    auroc,
    ce_score,
    conditional_ce_score,
    fpr_at_tpr,
    validation_rate,
)
from sgm.mixture import FiniteMixture, GaussianComponent, normalize, sample


def test_ce_perfect_model_hits_oracle_bound():
    # g = N(0,1) scored on its own samples: CE -> sqrt(int p^2) = (4 pi)^(-1/4)
    m = FiniteMixture([GaussianComponent(1.0, np.zeros(1), np.ones(1))])
    rng = np.random.default_rng(0)
    data = sample(m, 400_000, rng)
    ce = ce_score(m, data)
    assert abs(ce - (4 * np.pi) ** -0.25) < 2e-3


def test_ce_weight_rescale_invariant():
    rng = np.random.default_rng(1)
    m = FiniteMixture([
        GaussianComponent(0.4, np.array([-1.0]), np.array([0.3])),
        GaussianComponent(0.6, np.array([1.0]), np.array([0.5])),
    ])
    data = sample(normalize(m), 500, rng)
    scaled = FiniteMixture.from_arrays(m.weights * 13.0, m.means, m.vars)
    assert abs(ce_score(m, data) - ce_score(scaled, data)) < 1e-12


def test_ce_callable_route_matches_mixture_route():
    rng = np.random.default_rng(2)
    m = FiniteMixture([GaussianComponent(1.0, np.zeros(1), np.ones(1))])
    data = rng.normal(0, 1, (100, 1))
    from sgm.mixture import eval_density, quadratic_norm

    direct = ce_score(m, data)
    via_callable = ce_score((lambda p: eval_density(m, p), quadratic_norm(m)), data)
    assert abs(direct - via_callable) < 1e-15


def test_ce_rejects_zero_norm():
    with pytest.raises(UsageError):
        ce_score((lambda p: np.ones(p.shape[0]), 0.0), np.zeros((3, 1)))


def test_vr_all_on_centers():
    centers = np.array([[0.0, 0.0], [1.0, 1.0]])
    means = centers.copy()
    w = np.array([0.5, 0.5])
    assert validation_rate(means, w, centers, 1e-4) == 1.0


def test_vr_all_far():
    centers = np.array([[0.0, 0.0]])
    means = np.array([[2.0, 2.0], [-3.0, 0.0]])
    w = np.array([1.0, 1.0])
    assert validation_rate(means, w, centers, 1e-2) == 0.0


def test_vr_hand_built_two_thirds():
    # three equal-weight components, two exactly on centers, one off
    centers = np.array([[0.0], [5.0]])
    means = np.array([[0.0], [5.0], [2.5]])
    w = np.ones(3)
    got = validation_rate(means, w, centers, 1e-4)
    assert abs(got - 2.0 / 3.0) < 1e-15


def test_vr_weighted_not_counted():
    centers = np.array([[0.0]])
    means = np.array([[0.0], [9.0]])
    w = np.array([3.0, 1.0])
    assert abs(validation_rate(means, w, centers, 1e-4) - 0.75) < 1e-15


def test_vr_monotone_in_threshold():
    rng = np.random.default_rng(3)
    centers = rng.uniform(0, 1, (5, 2))
    means = rng.uniform(0, 1, (40, 2))
    w = rng.uniform(0.5, 1.5, 40)
    last = 0.0
    for d in (1e-6, 1e-4, 1e-2, 1.0):
        cur = validation_rate(means, w, centers, d)
        assert cur >= last
        last = cur


def test_auroc_frozen_brute_force():
    # in {1,2,3}, out {2,4}: out=2 beats 1, ties 2, loses to 3 -> 1.5;
    # out=4 beats all three -> 3; total 4.5 of 6 pairs
    got = auroc(np.array([1.0, 2.0, 3.0]), np.array([2.0, 4.0]))
    assert abs(got - 0.75) < 1e-15


def test_auroc_separated_and_identical():
    assert auroc(np.array([0.0, 0.1]), np.array([5.0, 6.0])) == 1.0
    assert auroc(np.array([5.0, 6.0]), np.array([0.0, 0.1])) == 0.0
    same = np.array([1.0, 2.0, 3.0, 4.0])
    assert abs(auroc(same, same) - 0.5) < 1e-15


def test_auroc_monotone_transform_invariant():
    rng = np.random.default_rng(4)
    s_in = rng.normal(0, 1, 50)
    s_out = rng.normal(1, 1, 40)
    base = auroc(s_in, s_out)
    assert abs(auroc(np.exp(s_in), np.exp(s_out)) - base) < 1e-12
    assert abs(auroc(3 * s_in + 7, 3 * s_out + 7) - base) < 1e-12


def test_auprc_and_fpr_sane():
    rng = np.random.default_rng(5)
    s_in = rng.normal(0, 1, 200)
    s_out = rng.normal(3, 1, 200)
    assert auprc(s_in, s_out) > 0.9
    assert fpr_at_tpr(s_in, s_out, tpr=0.8) < 0.2
    # useless detector
    assert 0.4 < auprc(s_in, s_in) < 0.6


def test_conditional_ce_matches_direct_formula():
    rng = np.random.default_rng(6)
    pairs = np.column_stack([rng.uniform(0, 1, 50), rng.normal(0, 1, 50)])

    def conditional(x):
        # N(y; x, 0.5) regardless of x
        x0 = float(np.asarray(x).reshape(-1)[0])
        return FiniteMixture([
            GaussianComponent(1.0, np.array([x0]), np.array([0.5]))
        ])

    got = conditional_ce_score(conditional, pairs, x_dim=1)
    from sgm.mixture import eval_density, quadratic_norm

    nums = []
    norms = []
    for x, y in pairs:
        m = conditional(x)
        nums.append(eval_density(m, np.array([[y]]))[0])
        norms.append(quadratic_norm(m))
    want = np.mean(nums) / np.sqrt(np.mean(norms))
    assert abs(got - want) < 1e-12


def test_eval_report_bounds_checked():
    with pytest.raises(UsageError):
        EvalReport(ce=1.0, vr_tight=1.5, vr_loose=0.5)
    r = EvalReport(ce=1.0, vr_tight=0.2, vr_loose=0.9)
    assert r.vr_loose >= r.vr_tight
