import os

import numpy as np
import pytest

import deepbayo.analysis as an
import deepbayo.experiments as ex
import deepbayo.problems as pb


def test_every_experiment_has_a_builder():
    for name in ex.EXPERIMENT_IDS:
        spec = ex.make_spec(name)
        assert spec.name == name
        assert spec.train.epochs >= 1
    with pytest.raises(ValueError):
        ex.make_spec("unknown")


def test_rd2d_profiles():
    desk = ex.make_spec("rd2d", profile="desk")
    paper = ex.make_spec("rd2d", profile="paper")
    assert paper.train.epochs > desk.train.epochs
    assert paper.hidden[0] > desk.hidden[0]
    assert desk.warmup is not None
    with pytest.raises(ValueError):
        ex.make_spec("rd2d", profile="galactic")


def test_apply_override_type_casting():
    spec = ex.make_spec("sin3")
    ex.apply_override(spec, "train.epochs", "7")
    assert spec.train.epochs == 7 and isinstance(spec.train.epochs, int)
    ex.apply_override(spec, "train.initial_lr", "0.5")
    assert spec.train.initial_lr == 0.5
    ex.apply_override(spec, "grid_init", "false")
    assert spec.grid_init is False
    ex.apply_override(spec, "hidden", "4,4")
    assert spec.hidden == [4, 4]
    ex.apply_override(spec, "train.weights.w_data", "2")
    assert spec.train.weights.w_data == 2.0
    with pytest.raises(KeyError):
        ex.apply_override(spec, "train.bogus", "1")
    with pytest.raises(KeyError):
        ex.apply_override(spec, "bogus.epochs", "1")


def test_spec_to_dict_records_seed():
    d = ex.spec_to_dict(ex.make_spec("heat1d"), 42)
    assert d["seed"] == 42
    assert d["train"]["epochs"] == 15000


def test_grid_init_location_finds_frequency():
    problem = pb.make_sin3()
    ds = pb.synthesize_dataset(problem, pb.SensorLayout(n_interior=100),
                               0.01, np.random.default_rng(0))
    loc = ex._grid_init_location(problem, ds)
    assert abs(abs(loc) - 6.0) < 0.1


def test_regression_test_set_split():
    problem = pb.make_regression_uq()
    x, y, labels = ex._regression_test_set(problem, 0, 200)
    assert len(x) == len(y) == len(labels) == 200
    idd = x[labels == "idd", 0]
    ood = x[labels == "ood", 0]
    assert np.all(np.abs(idd) <= 1.0)
    assert np.all((np.abs(ood) > 1.0) & (np.abs(ood) <= 1.5))
    # deterministic per seed
    x2, y2, _ = ex._regression_test_set(problem, 0, 200)
    assert np.array_equal(x, x2) and np.array_equal(y, y2)


def _quick_sin3_spec():
    spec = ex.make_spec("sin3")
    spec.train.epochs = 2
    spec.train.n_collocation = 8
    spec.n_sensors = 10
    spec.posterior_draws = 50
    spec.field_resolution = 8
    spec.calibration.epochs = 2
    spec.grid_init = False
    return spec


def test_run_experiment_writes_artifacts(tmp_path):
    out = str(tmp_path)
    metrics = ex.run_experiment(_quick_sin3_spec(), out, seed=0)
    for name in ("metrics.json", "model.json", "history.csv",
                 "posterior.csv", "field.csv"):
        assert os.path.exists(os.path.join(out, name)), name
    assert metrics["experiment"] == "sin3"
    assert metrics["effective_seed"] == 0
    assert "posterior_mean_omega" in metrics
    assert "field_abs_err_mean" in metrics
    on_disk = an.read_metrics_json(os.path.join(out, "metrics.json"))
    assert on_disk == {k: v for k, v in metrics.items()}


def test_run_experiment_posterior_csv_columns(tmp_path):
    out = str(tmp_path)
    ex.run_experiment(_quick_sin3_spec(), out, seed=1)
    names, samples = an.read_posterior_csv(os.path.join(out, "posterior.csv"))
    assert names == ["omega"]
    assert samples.shape == (50, 1)


def test_baseline_config_table_covers_all_kinds():
    import deepbayo.baselines as bl
    assert set(ex.BASELINE_CONFIGS) == set(bl.BASELINE_KINDS)
