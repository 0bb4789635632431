"""Scan-network behavior: parameter emission shapes and ranges, data-aware
initialization, checkpoint round trips."""

import numpy as np
import pytest

import sgm.autodiff as ad
from sgm.errors import UsageError
from sgm.network import (
    GeneratorNetwork,
    ImogNetwork,
    RatioNetwork,
    ScanInput,
    load_checkpoint,
    param_vector,
    save_checkpoint,
    set_param_vector,
)


def make_data(rng, n=500, dim=2):
    return rng.uniform(-1.0, 3.0, size=(n, dim))


def emit_all(net, rng, n_noise=7):
    idx = np.tile(np.arange(net.n_slots), n_noise)
    noise = np.repeat(rng.uniform(0, 1, (n_noise, net.noise_dim)), net.n_slots, axis=0)
    cond = None
    if net.cond_dim:
        cond = np.tile(rng.uniform(-1, 1, net.cond_dim), (idx.shape[0], 1))
    return net.emit(ScanInput(idx, noise, cond))


def test_emit_shapes_and_ranges():
    rng = np.random.default_rng(0)
    data = make_data(rng)
    net = ImogNetwork(16, 2, noise_dim=1, cond_dim=0, var_floor=1e-6,
                      data=data, seed=0)
    w, m, a = emit_all(net, rng)
    b = 16 * 7
    assert w.data.shape == (b,) and m.data.shape == (b, 2) and a.data.shape == (b, 2)
    assert np.all(w.data > 0.0)
    assert np.all(a.data >= 1e-6)


def test_initial_means_inside_data_box():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        data = make_data(rng)
        net = ImogNetwork(32, 2, data=data, seed=seed)
        _, m, _ = emit_all(net, rng)
        lo, hi = data.min(axis=0), data.max(axis=0)
        assert np.all(m.data >= lo) and np.all(m.data <= hi)


def test_slots_emit_distinct_components():
    rng = np.random.default_rng(1)
    data = make_data(rng)
    net = ImogNetwork(8, 2, data=data, seed=1)
    noise = np.full((8, 1), 0.5)
    _, m, _ = net.emit(ScanInput(np.arange(8), noise))
    # slot embeddings must separate the means even before training
    dists = np.linalg.norm(m.data[:, None] - m.data[None, :], axis=-1)
    np.fill_diagonal(dists, np.inf)
    assert dists.min() > 1e-4


def test_condition_mode_enforced():
    rng = np.random.default_rng(2)
    data = make_data(rng)
    uncond = ImogNetwork(4, 2, cond_dim=0, data=data, seed=0)
    cond = ImogNetwork(4, 1, cond_dim=1, data=data[:, 1:], seed=0)
    idx = np.arange(4)
    noise = rng.uniform(0, 1, (4, 1))
    with pytest.raises(UsageError):
        uncond.emit(ScanInput(idx, noise, np.ones((4, 1))))
    with pytest.raises(UsageError):
        cond.emit(ScanInput(idx, noise, None))


def test_weight_cap_bounds_weights():
    rng = np.random.default_rng(3)
    data = make_data(rng)
    net = ImogNetwork(8, 2, weight_cap=2.0, weight_scale=3.0, data=data, seed=3)
    w, _, _ = emit_all(net, rng)
    assert np.all(w.data <= 3.0 * np.exp(2.0) + 1e-12)
    assert np.all(w.data >= 3.0 * np.exp(-2.0) - 1e-12)


def test_param_vector_round_trip():
    rng = np.random.default_rng(4)
    net = ImogNetwork(6, 2, data=make_data(rng), seed=4)
    vec = param_vector(net)
    fresh = rng.standard_normal(vec.shape)
    set_param_vector(net, fresh)
    assert np.array_equal(param_vector(net), fresh)
    with pytest.raises(UsageError):
        set_param_vector(net, fresh[:-1])


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(5)
    data = make_data(rng)
    net = ImogNetwork(12, 2, noise_dim=2, cond_dim=0, hidden=(32, 32),
                      var_floor=1e-5, weight_cap=3.0, weight_scale=0.7,
                      data=data, seed=5)
    path = tmp_path / "net.ckpt"
    save_checkpoint(path, net)
    back = load_checkpoint(path)
    assert np.array_equal(param_vector(back), param_vector(net))
    w0, m0, a0 = emit_all(net, np.random.default_rng(9))
    w1, m1, a1 = emit_all(back, np.random.default_rng(9))
    assert np.array_equal(w0.data, w1.data)
    assert np.array_equal(m0.data, m1.data)
    assert np.array_equal(a0.data, a1.data)


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b'{"magic": "something-else"}\n' + b"\x00" * 64)
    with pytest.raises(UsageError):
        load_checkpoint(path)
    path2 = tmp_path / "trunc.ckpt"
    rng = np.random.default_rng(6)
    net = RatioNetwork(2, seed=0)
    save_checkpoint(path2, net)
    blob = path2.read_bytes()
    path2.write_bytes(blob[:-16])
    with pytest.raises(UsageError):
        load_checkpoint(path2)


def test_checkpoint_restores_each_network_kind(tmp_path):
    rng = np.random.default_rng(7)
    data = make_data(rng)
    nets = [
        RatioNetwork(2, hidden=(16, 16), output_scale=2.0, seed=1),
        GeneratorNetwork(2, noise_dim=3, hidden=(16, 16), data=data, seed=2),
        ImogNetwork(5, 1, cond_dim=1, data=data[:, :1], seed=3),
    ]
    for i, net in enumerate(nets):
        path = tmp_path / f"net{i}.ckpt"
        save_checkpoint(path, net)
        back = load_checkpoint(path)
        assert type(back) is type(net)
        assert np.array_equal(param_vector(back), param_vector(net))


def test_ratio_network_positive_output():
    rng = np.random.default_rng(8)
    net = RatioNetwork(2, output_cap=6.0, output_scale=1.0, seed=8)
    x = rng.standard_normal((64, 2)) * 5
    out = net.forward(x)
    assert np.all(out.data > 0.0)
    assert np.all(out.data <= np.exp(6.0) + 1e-9)


def test_generator_output_covers_padded_box():
    rng = np.random.default_rng(9)
    data = make_data(rng)
    net = GeneratorNetwork(2, noise_dim=2, data=data, seed=9)
    u = rng.uniform(0, 1, (256, 2))
    out = net.forward(u).data
    center = 0.5 * (data.min(axis=0) + data.max(axis=0))
    half = 0.5 * (data.max(axis=0) - data.min(axis=0))
    # bounded to the padded box, but actually sweeping past the data box:
    # the fresh cloud is the critic's only view of the surroundings
    assert np.all(np.abs(out - center) <= 2.6 * half + 1e-9)
    assert np.all(np.abs(out - center).max(axis=0) >= 1.5 * half)
    # the footprint knobs are structural, not trainable
    assert all(p.requires_grad for p in net.params)
    assert not net.b3.requires_grad and not net.w_skip.requires_grad


def test_emit_is_differentiable_end_to_end():
    rng = np.random.default_rng(10)
    data = make_data(rng)
    net = ImogNetwork(4, 2, data=data, seed=10)
    idx = np.arange(4)
    noise = rng.uniform(0, 1, (4, 1))
    tape = ad.GradTape(net.params)
    with tape:
        w, m, a = net.emit(ScanInput(idx, noise))
        loss = ad.tsum(w) + ad.tsum(m) + ad.tsum(a)
    grad = ad.backward(tape, loss)
    assert grad.shape == (tape.n_params,)
    assert np.isfinite(grad).all()
    assert np.abs(grad).max() > 0.0
