import numpy as np
import pytest

import deepbayo.baselines as bl
import deepbayo.problems as pb


def _tiny_dataset(n=40, seed=0):
    problem = pb.make_regression_uq()
    return pb.synthesize_dataset(problem, pb.SensorLayout(n_interior=n),
                                 None, np.random.default_rng(seed))


def _tiny_config(**kw):
    kw.setdefault("epochs", 3)
    kw.setdefault("hidden", [8, 8])
    return bl.BaselineConfig(**kw)


def test_dropout_mask_statistics():
    rng = np.random.default_rng(0)
    masks = np.stack([bl.dropout_mask(50, 0.9, rng) for _ in range(2000)])
    assert set(np.unique(masks)) <= {0.0, 1.0}
    assert abs(masks.mean() - 0.9) < 0.01


def test_dropout_mask_p_one_keeps_everything():
    mask = bl.dropout_mask(20, 1.0, np.random.default_rng(0))
    assert np.all(mask == 1.0)


def test_dropout_mask_validation():
    with pytest.raises(ValueError):
        bl.dropout_mask(10, 0.0, np.random.default_rng(0))
    with pytest.raises(ValueError):
        bl.dropout_mask(10, 1.2, np.random.default_rng(0))


def test_dropout_mask_seed_reproducible():
    a = bl.dropout_mask(30, 0.7, np.random.default_rng(5))
    b = bl.dropout_mask(30, 0.7, np.random.default_rng(5))
    assert np.array_equal(a, b)


def test_default_widths_hit_shared_parameter_budget():
    ds = _tiny_dataset()
    config = bl.BaselineConfig(epochs=1)
    for kind in bl.BASELINE_KINDS:
        model = bl.train_baseline(kind, ds, config)
        n = bl.param_count(model)
        assert 3600 <= n <= 4400, (kind, n)


def test_known_parameter_counts():
    ds = _tiny_dataset()
    config = bl.BaselineConfig(epochs=1)
    assert bl.param_count(bl.train_baseline("snn", ds, config)) == 3902
    assert bl.param_count(bl.train_baseline("denn", ds, config)) == 3760
    assert bl.param_count(bl.train_baseline("bnn", ds, config)) == 3952


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        bl.train_baseline("gp", _tiny_dataset())


def test_config_validation():
    with pytest.raises(ValueError):
        bl.BaselineConfig(epochs=0)
    with pytest.raises(ValueError):
        bl.BaselineConfig(retention_p=0.0)
    with pytest.raises(ValueError):
        bl.BaselineConfig(n_members=0)


def test_single_member_ensemble_equals_plain_network():
    ds = _tiny_dataset()
    snn = bl.train_baseline("snn", ds, _tiny_config(seed=3))
    denn = bl.train_baseline(
        "denn", ds, _tiny_config(seed=3, n_members=1))
    # a one-member ensemble trained from the same stream layout is the
    # same model up to its init seed, so compare against a fresh snn
    # trained with the member's derived seed
    member_seed = np.random.SeedSequence([3, 100]).generate_state(1)[0]
    twin = bl.train_baseline("snn", ds, _tiny_config(seed=int(member_seed)))
    x = np.linspace(-1, 1, 7)[:, None]
    a = bl.predict_baseline(denn, x)
    b = bl.predict_baseline(twin, x)
    assert np.allclose(a["mean"], b["mean"], atol=1e-10)
    assert np.allclose(a["epistemic_var"], 0.0)
    assert not np.allclose(a["mean"], bl.predict_baseline(snn, x)["mean"])


def test_snn_epistemic_variance_exactly_zero():
    model = bl.train_baseline("snn", _tiny_dataset(), _tiny_config())
    out = bl.predict_baseline(model, np.zeros((3, 1)))
    assert np.all(out["epistemic_var"] == 0.0)
    assert np.all(out["aleatoric_var"] > 0.0)


def test_mcdo_mc_mean_approaches_scaled_deterministic_pass():
    model = bl.train_baseline("mcdo", _tiny_dataset(), _tiny_config())
    x = np.linspace(-0.8, 0.8, 5)[:, None]
    rng = np.random.default_rng(0)
    outs = np.stack([bl.mcdo_forward_np(model, x, rng)
                     for _ in range(10000)])
    det = bl.mcdo_forward_np(model, x, rng=None)
    mc_mean = outs[:, :, 0].mean(axis=0)
    assert np.max(np.abs(mc_mean - det[:, 0])) < 0.02 * \
        max(1.0, np.max(np.abs(det[:, 0])))


def test_bnn_degenerate_posterior_matches_mean_network():
    ds = _tiny_dataset()
    bnn = bl.train_baseline("bnn", ds, _tiny_config(seed=1))
    # collapse the posterior onto its mean
    for layer in bnn.layers:
        layer.rho_w.value = np.full_like(layer.rho_w.value, -30.0)
        layer.rho_b.value = np.full_like(layer.rho_b.value, -30.0)
    x = np.linspace(-1, 1, 6)[:, None]
    out = bl.predict_baseline(bnn, x, n_samples=16,
                              rng=np.random.default_rng(0))
    # reference pass through the posterior means (weights stored (in, out))
    h = x
    for layer in bnn.layers[:-1]:
        h = np.tanh(h @ layer.mu_w.value + layer.mu_b.value)
    ref = h @ bnn.layers[-1].mu_w.value + bnn.layers[-1].mu_b.value
    assert np.max(np.abs(out["mean"] - ref[:, 0])) < 1e-3
    assert np.all(out["epistemic_var"] < 1e-6)


def test_prediction_interface_consistency():
    ds = _tiny_dataset()
    x = np.linspace(-1.5, 1.5, 11)[:, None]
    for kind in bl.BASELINE_KINDS:
        model = bl.train_baseline(kind, ds, _tiny_config())
        out = bl.predict_baseline(model, x, n_samples=32,
                                  rng=np.random.default_rng(0))
        assert np.allclose(out["total_var"],
                           out["epistemic_var"] + out["aleatoric_var"])
        assert np.all(out["ci95_hi"] >= out["ci95_lo"])
        for key in ("mean", "total_var", "ci95_lo", "ci95_hi"):
            assert out[key].shape == (11,)
        assert np.all(np.isfinite(out["mean"]))


def test_stochastic_prediction_needs_samples():
    model = bl.train_baseline("mcdo", _tiny_dataset(), _tiny_config())
    with pytest.raises(ValueError):
        bl.predict_baseline(model, np.zeros((2, 1)), n_samples=1)


def test_training_deterministic_per_seed():
    ds = _tiny_dataset()
    for kind in bl.BASELINE_KINDS:
        a = bl.train_baseline(kind, ds, _tiny_config(seed=7))
        b = bl.train_baseline(kind, ds, _tiny_config(seed=7))
        for p, q in zip(a.parameters(), b.parameters()):
            assert np.array_equal(p.value, q.value), kind


def test_training_improves_fit():
    ds = _tiny_dataset(n=80)
    short = bl.train_baseline("snn", ds, bl.BaselineConfig(
        epochs=1, hidden=[16, 16], seed=0))
    long = bl.train_baseline("snn", ds, bl.BaselineConfig(
        epochs=80, hidden=[16, 16], seed=0))
    clean = pb.make_regression_uq().exact(ds.points)
    mse_short = np.mean((bl.predict_baseline(short, ds.points)["mean"]
                         - clean) ** 2)
    mse_long = np.mean((bl.predict_baseline(long, ds.points)["mean"]
                        - clean) ** 2)
    assert mse_long < mse_short
