import math
import os

import numpy as np
import pytest

import deepbayo.autodiff as ad
import deepbayo.network as net
from deepbayo.autodiff import Jet2, Tape


def test_init_mlp_xavier_bound_and_zero_biases():
    mlp = net.init_mlp([4, 8, 2], seed=3)
    for layer in mlp.layers:
        fan_out, fan_in = layer.weights.value.shape
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        assert np.all(np.abs(layer.weights.value) <= bound)
        assert np.all(layer.biases.value == 0.0)


def test_init_mlp_deterministic_per_seed():
    a = net.init_mlp([3, 5, 1], seed=7)
    b = net.init_mlp([3, 5, 1], seed=7)
    for la, lb in zip(a.layers, b.layers):
        assert np.array_equal(la.weights.value, lb.weights.value)


def test_init_mlp_rejects_bad_widths():
    with pytest.raises(ValueError):
        net.init_mlp([3], seed=0)
    with pytest.raises(ValueError):
        net.init_mlp([3, 0, 1], seed=0)
    with pytest.raises(ValueError):
        net.init_mlp([3, 4, 1], final_act="relu", seed=0)


def test_mlp_forward_graph_matches_numpy():
    mlp = net.init_mlp([2, 6, 6, 1], seed=0)
    rng = np.random.default_rng(1)
    x = rng.standard_normal((5, 2))
    tape = Tape()
    out = mlp.forward(tape, tape.constant(x))
    assert np.allclose(out.value, mlp.forward_np(x), atol=1e-14)


def test_mlp_forward_rejects_wrong_input_dim():
    mlp = net.init_mlp([2, 4, 1], seed=0)
    tape = Tape()
    with pytest.raises(ValueError):
        mlp.forward(tape, tape.constant(np.ones((3, 5))))


def test_deeponet_invariants_enforced():
    with pytest.raises(ValueError):
        net.DeepONetModel(
            branch=net.init_mlp([2, 8, 8], seed=0),
            trunk=net.init_mlp([1, 8, 8], seed=1),  # should be 8 + 1
            output_layer=net.init_dense(2, 8, np.random.default_rng(0), "o"),
            param_links=["identity"])


def test_deeponet_output_layer_channels():
    with pytest.raises(ValueError):
        net.DeepONetModel(
            branch=net.init_mlp([2, 8, 8], seed=0),
            trunk=net.init_mlp([1, 8, 8], seed=1),
            output_layer=net.init_dense(1, 8, np.random.default_rng(0), "o"),
            param_links=[], n_var_channels=1)


def test_deeponet_graph_matches_numpy_inference():
    model = net.make_deeponet(2, [8, 8, 8], n_params=2, seed=4)
    rng = np.random.default_rng(0)
    coords = rng.standard_normal((6, 2))
    latent = rng.standard_normal((1, 2))
    tape = Tape()
    out = net.deeponet_forward(model, tape, tape.constant(coords),
                               tape.constant(latent))
    means, log_vars, phys = net.deeponet_forward_np(model, coords, latent)
    assert np.allclose(out.mean.value, means[:, 0], atol=1e-13)
    assert np.allclose(net.bounded_log_var(out.log_var_y.value),
                       log_vars[:, 0], atol=1e-13)
    for j in range(2):
        assert np.allclose(out.phys_params[j].value, phys[0, j], atol=1e-13)


def test_deeponet_param_links_applied():
    model = net.make_deeponet(1, [4, 4], n_params=1,
                              param_links=["softplus"], seed=0)
    _, _, phys = net.deeponet_forward_np(model, np.zeros((1, 1)),
                                         np.random.default_rng(0)
                                         .standard_normal((64, 1)))
    assert np.all(phys > 0.0)


def test_bounded_log_var_limits():
    assert abs(net.bounded_log_var(1e9)) <= net.LOG_VAR_BOUND
    assert abs(net.bounded_log_var(-1e9)) <= net.LOG_VAR_BOUND
    assert abs(net.bounded_log_var(0.01) - 0.01) < 1e-5


def test_latent_dim_defaults_to_param_count_floor_one():
    assert net.make_deeponet(1, [4, 4], n_params=0, seed=0).latent_dim == 1
    assert net.make_deeponet(1, [4, 4], n_params=3, seed=0).latent_dim == 3


def test_param_count():
    mlp = net.init_mlp([2, 4, 1], seed=0)
    assert net.param_count(mlp) == (2 * 4 + 4) + (4 * 1 + 1)


def test_jet_forward_through_deeponet():
    model = net.make_deeponet(1, [6, 6], n_params=0, seed=2)
    tape = Tape()
    x = np.array([[0.3]])
    v = tape.input(x[:, 0])
    jet = Jet2(v, tape.constant(np.ones(1)), tape.constant(np.zeros(1)))
    out = net.deeponet_forward(model, tape, ad.jet_colstack([jet]),
                               tape.constant(np.zeros((1, 1))))
    h = 1e-4

    def val(pt):
        m, _, _ = net.deeponet_forward_np(model, pt, np.zeros((1, 1)))
        return float(m[0, 0])

    fd1 = (val(x + h) - val(x - h)) / (2 * h)
    fd2 = (val(x + h) - 2 * val(x) + val(x - h)) / (h * h)
    assert abs(float(out.mean.d.value[0]) - fd1) < 1e-6
    assert abs(float(out.mean.dd.value[0]) - fd2) < 1e-4


def test_save_load_roundtrip_bit_exact(tmp_path):
    model = net.make_deeponet(2, [8, 8, 8], n_params=2,
                              param_links=["identity", "softplus"], seed=9)
    path = os.path.join(tmp_path, "model.json")
    net.save_model(model, path)
    back = net.load_model(path)
    for p, q in zip(model.parameters(), back.parameters()):
        assert p.name == q.name
        assert np.array_equal(p.value, q.value)
    x = np.random.default_rng(0).standard_normal((4, 2))
    lat = np.random.default_rng(1).standard_normal((3, 2))
    a = net.deeponet_forward_np(model, x, lat)
    b = net.deeponet_forward_np(back, x, lat)
    assert np.array_equal(a[0], b[0])


def test_load_model_version_and_shape_errors(tmp_path):
    path = os.path.join(tmp_path, "model.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write('{"format_version": 99}')
    with pytest.raises(net.ModelFormatError):
        net.load_model(path)
    with pytest.raises(net.ModelFormatError):
        net.load_model(os.path.join(tmp_path, "missing.json"))
    bad = os.path.join(tmp_path, "bad.json")
    with open(bad, "w", encoding="utf-8") as fh:
        fh.write("not json")
    with pytest.raises(net.ModelFormatError):
        net.load_model(bad)


def test_load_model_arch_expectation(tmp_path):
    model = net.make_deeponet(1, [4, 4], n_params=0, seed=0)
    path = os.path.join(tmp_path, "m.json")
    net.save_model(model, path)
    with pytest.raises(net.ModelFormatError):
        net.load_model(path, expect_arch={"different": True})
