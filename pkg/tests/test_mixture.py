"""Closed-form mixture quantities against the quadrature oracle and against
hand-derived constants."""

import numpy as np
import pytest

from sgm.errors import DegenerateModelError, DimensionMismatchError, UsageError
from sgm.mixture import (
    FiniteMixture,
    GaussianComponent,
    cross_inner,
    cs_qmi,
    eval_density,
    from_json,
    marginalize,
    normalize,
    pairwise_overlap,
    product_mixture,
    quadratic_norm,
    renyi2_entropy,
    sample,
    to_json,
)
from sgm.quadrature import grid_integrate


def random_mixture(rng, dim, k=None):
    k = k or int(rng.integers(1, 6))
    comps = [
        GaussianComponent(
            float(rng.uniform(0.2, 2.0)),
            rng.uniform(-2.0, 2.0, dim),
            rng.uniform(0.05, 1.5, dim),
        )
        for _ in range(k)
    ]
    return FiniteMixture(comps)


def box(m, pad=8.0):
    stds = np.sqrt(m.vars)
    lo = (m.means - pad * stds).min(axis=0)
    hi = (m.means + pad * stds).max(axis=0)
    return [(float(a), float(b)) for a, b in zip(lo, hi)]


def test_overlap_of_identical_standard_normals():
    c = GaussianComponent(1.0, np.zeros(1), np.ones(1))
    assert abs(pairwise_overlap(c, c) - 0.28209479177387814) < 1e-15


def test_overlap_shifted_pair_frozen_value():
    # N(0,1) vs N(1,1): N(1; 0, 2) = exp(-1/4)/sqrt(4 pi) = 0.2196956447338612
    a = GaussianComponent(1.0, np.zeros(1), np.ones(1))
    b = GaussianComponent(1.0, np.ones(1), np.ones(1))
    assert abs(pairwise_overlap(a, b) - 0.2196956447338612) < 1e-15


def test_overlap_matches_quadrature_2d():
    rng = np.random.default_rng(0)
    for _ in range(5):
        a = GaussianComponent(1.0, rng.uniform(-1, 1, 2), rng.uniform(0.1, 1.0, 2))
        b = GaussianComponent(1.0, rng.uniform(-1, 1, 2), rng.uniform(0.1, 1.0, 2))
        ma = FiniteMixture([a])
        mb = FiniteMixture([b])

        def f(pts):
            return eval_density(ma, pts) * eval_density(mb, pts)

        quad = grid_integrate(f, box(FiniteMixture([a, b])), resolution=501)
        assert abs(pairwise_overlap(a, b) - quad) < 1e-6


def test_quadratic_norm_vs_quadrature_seeded_loop():
    rng = np.random.default_rng(1)
    for trial in range(10):
        dim = 1 + trial % 2
        m = random_mixture(rng, dim)
        quad = grid_integrate(lambda p: eval_density(m, p) ** 2, box(m),
                              resolution=1001 if dim == 1 else 401)
        rel = abs(quadratic_norm(m) - quad) / quad
        assert rel < 1e-4, f"trial {trial}: rel err {rel}"


def test_cross_inner_vs_quadrature():
    rng = np.random.default_rng(2)
    for trial in range(6):
        dim = 1 + trial % 2
        a = random_mixture(rng, dim)
        b = random_mixture(rng, dim)
        both = FiniteMixture(a.components + b.components)

        def f(pts):
            return eval_density(a, pts) * eval_density(b, pts)

        quad = grid_integrate(f, box(both), resolution=1001 if dim == 1 else 401)
        rel = abs(cross_inner(a, b) - quad) / abs(quad)
        assert rel < 1e-4


def test_eval_density_single_component_closed_form():
    m = FiniteMixture([GaussianComponent(1.0, np.zeros(2), np.ones(2))])
    pts = np.array([[0.0, 0.0], [1.0, -1.0]])
    expect = np.exp(-0.5 * (pts**2).sum(axis=1)) / (2 * np.pi)
    assert np.allclose(eval_density(m, pts), expect, rtol=1e-12)


def test_normalize_unit_mass():
    rng = np.random.default_rng(3)
    m = random_mixture(rng, 1)
    p = normalize(m)
    mass = grid_integrate(lambda x: eval_density(p, x), box(p), resolution=2001)
    assert abs(mass - 1.0) < 1e-6


def test_nonpositive_weights_rejected():
    # construction guards make a zero-mass mixture unrepresentable, so the
    # normalize-side degeneracy guard stays belt and braces
    with pytest.raises(UsageError):
        FiniteMixture.from_arrays(
            np.array([1.0, 0.0]), np.zeros((2, 1)), np.ones((2, 1))
        )


def test_component_validation():
    with pytest.raises(UsageError):
        GaussianComponent(-1.0, np.zeros(1), np.ones(1))
    with pytest.raises(UsageError):
        GaussianComponent(1.0, np.zeros(1), np.zeros(1))
    with pytest.raises(DimensionMismatchError):
        FiniteMixture([
            GaussianComponent(1.0, np.zeros(1), np.ones(1)),
            GaussianComponent(1.0, np.zeros(2), np.ones(2)),
        ])


def test_marginalize_drops_axes():
    rng = np.random.default_rng(4)
    m = random_mixture(rng, 2)
    mx = marginalize(m, [0])
    assert mx.dim == 1
    assert np.allclose(mx.means[:, 0], m.means[:, 0])
    # marginal of a normalized mixture still integrates to 1
    p = normalize(m)
    px = marginalize(p, [0])
    mass = grid_integrate(lambda x: eval_density(px, x), box(px), resolution=2001)
    assert abs(mass - 1.0) < 1e-6


def test_renyi2_standard_normal():
    m = FiniteMixture([GaussianComponent(1.0, np.zeros(1), np.ones(1))])
    assert abs(renyi2_entropy(m) - np.log(2 * np.sqrt(np.pi))) < 1e-14


def test_renyi2_weight_scale_invariant():
    rng = np.random.default_rng(5)
    m = random_mixture(rng, 2)
    scaled = FiniteMixture.from_arrays(m.weights * 37.0, m.means, m.vars)
    assert abs(renyi2_entropy(m) - renyi2_entropy(scaled)) < 1e-12


def test_renyi2_vs_quadrature():
    rng = np.random.default_rng(6)
    for _ in range(5):
        m = random_mixture(rng, 1)
        p = normalize(m)
        quad = -np.log(
            grid_integrate(lambda x: eval_density(p, x) ** 2, box(p), resolution=2001)
        )
        assert abs(renyi2_entropy(m) - quad) / abs(quad) < 1e-4


def test_product_mixture_density_factorizes():
    rng = np.random.default_rng(7)
    a = random_mixture(rng, 1)
    b = random_mixture(rng, 1)
    prod = product_mixture(a, b)
    pts = rng.uniform(-2, 2, size=(20, 2))
    expect = eval_density(a, pts[:, :1]) * eval_density(b, pts[:, 1:])
    assert np.allclose(eval_density(prod, pts), expect, rtol=1e-12)


def test_cs_qmi_independent_is_zero():
    # a mixture whose joint is exactly the product of its marginals
    a = random_mixture(np.random.default_rng(8), 1)
    b = random_mixture(np.random.default_rng(9), 1)
    joint = product_mixture(normalize(a), normalize(b))
    assert abs(cs_qmi(joint, [0], [1])) < 1e-10


def test_cs_qmi_matches_materialized_route():
    # factorized computation vs literally building p_x p_y as a mixture
    rng = np.random.default_rng(10)
    m = normalize(random_mixture(rng, 2, k=4))
    fast = cs_qmi(m, [0], [1])
    px = marginalize(m, [0])
    py = marginalize(m, [1])
    prod = product_mixture(px, py)
    joint_norm = quadratic_norm(m)
    prod_norm = quadratic_norm(prod)
    cross = cross_inner(m, prod)
    slow = float(
        -np.log2(cross) + 0.5 * np.log2(prod_norm) + 0.5 * np.log2(joint_norm)
    )
    assert abs(fast - slow) < 1e-10


def test_cs_qmi_nonnegative_on_random_mixtures():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m = normalize(random_mixture(rng, 2))
        assert cs_qmi(m, [0], [1]) > -1e-12


def test_cs_qmi_partition_checked():
    m = normalize(random_mixture(np.random.default_rng(12), 2))
    with pytest.raises(UsageError):
        cs_qmi(m, [0], [0])
    with pytest.raises(UsageError):
        cs_qmi(m, [0], [])


def test_sample_moments_match():
    m = normalize(FiniteMixture([
        GaussianComponent(0.3, np.array([-2.0]), np.array([0.25])),
        GaussianComponent(0.7, np.array([1.0]), np.array([0.5])),
    ]))
    rng = np.random.default_rng(13)
    x = sample(m, 200_000, rng)
    mean_true = 0.3 * -2.0 + 0.7 * 1.0
    assert abs(x.mean() - mean_true) < 0.02
    var_true = 0.3 * (0.25 + 4.0) + 0.7 * (0.5 + 1.0) - mean_true**2
    assert abs(x.var() - var_true) < 0.05


def test_json_round_trip_bit_exact():
    rng = np.random.default_rng(14)
    m = random_mixture(rng, 2)
    text = to_json(m)
    back = from_json(text)
    assert np.array_equal(back.weights, m.weights)
    assert np.array_equal(back.means, m.means)
    assert np.array_equal(back.vars, m.vars)
    assert to_json(back) == text
