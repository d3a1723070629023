"""Acceptance gate for the optional figure-rendering package.

Skipped entirely when that package is not installed; the rest of the
suite has no dependency on it.
"""

import os

import numpy as np
import pytest

figures = pytest.importorskip("figures")

import deepbayo.analysis as an  # noqa: E402
import deepbayo.experiments as ex  # noqa: E402


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")

    heat = ex.make_spec("heat1d")
    heat.train.epochs = 5
    heat.train.n_collocation = 16
    heat.train.n_boundary = 8
    heat.train.n_initial = 8
    heat.n_sensors = 20
    heat.posterior_draws = 200
    heat.field_resolution = 12
    heat.field_latents = 8
    ex.run_experiment(heat, str(base / "heat1d-q"), seed=0)

    helm = ex.make_spec("helmholtz3d")
    helm.train.epochs = 5
    helm.train.n_collocation = 16
    helm.train.n_boundary = 8
    helm.posterior_draws = 200
    helm.field_resolution = 12
    helm.field_latents = 8
    helm.mode_selection = False
    ex.run_experiment(helm, str(base / "helmholtz3d-q"), seed=0)

    return str(base / "heat1d-q"), str(base / "helmholtz3d-q")


def test_criterion_10_figure_generation(run_dirs, tmp_path):
    rendered = 0
    identical = True
    for run in run_dirs:
        for fig_id in figures.FIGURE_IDS:
            p1 = figures.render(run, fig_id, str(tmp_path / "a"))
            p2 = figures.render(run, fig_id, str(tmp_path / "b"))
            assert os.path.getsize(p1) > 0
            with open(p1, "rb") as fh:
                b1 = fh.read()
            with open(p2, "rb") as fh:
                b2 = fh.read()
            identical = identical and (b1 == b2)
            rendered += 1
    ok = rendered == 12 and identical
    print(f"\n[criterion 10] {'PASS' if ok else 'FAIL'}: all "
          f"{len(figures.FIGURE_IDS)} figure kinds rendered from completed "
          f"heat and eigenvalue run dirs ({rendered}/12 images) with "
          f"byte-identical reruns")
    assert ok


def test_figures_error_on_empty_posterior(run_dirs, tmp_path):
    run, _ = run_dirs
    broken = tmp_path / "broken"
    broken.mkdir()
    for name in ("metrics.json", "history.csv", "field.csv"):
        with open(os.path.join(run, name), "rb") as src, \
                open(broken / name, "wb") as dst:
            dst.write(src.read())
    an.write_posterior_csv(str(broken / "posterior.csv"),
                           np.zeros((0, 0)), [])
    with pytest.raises(figures.ArtifactError):
        figures.render(str(broken), "posterior-hist", str(tmp_path / "out"))


def test_figures_error_names_missing_file(tmp_path):
    empty = tmp_path / "no-run"
    empty.mkdir()
    with pytest.raises(figures.ArtifactError, match="metrics.json"):
        figures.render(str(empty), "loss-history", str(tmp_path / "out"))


def test_figures_error_names_missing_column(run_dirs, tmp_path):
    run, _ = run_dirs
    broken = tmp_path / "badcol"
    broken.mkdir()
    for name in ("metrics.json", "posterior.csv", "field.csv"):
        with open(os.path.join(run, name), "rb") as src, \
                open(broken / name, "wb") as dst:
            dst.write(src.read())
    with open(os.path.join(run, "history.csv"), encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lines[0] = lines[0].replace("total", "grand")
    with open(broken / "history.csv", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    with pytest.raises(figures.ArtifactError, match="total"):
        figures.render(str(broken), "loss-history", str(tmp_path / "out"))


def test_figures_perfect_fit_error_panel(run_dirs, tmp_path):
    # when predicted equals exact the error column is zero everywhere;
    # the triptych must still render (error panel at its colorbar floor)
    run, _ = run_dirs
    clone = tmp_path / "perfect"
    clone.mkdir()
    for name in ("metrics.json", "posterior.csv", "history.csv"):
        with open(os.path.join(run, name), "rb") as src, \
                open(clone / name, "wb") as dst:
            dst.write(src.read())
    header, rows = an.read_field_csv(os.path.join(run, "field.csv"))
    i_mean = header.index("mean")
    i_exact = header.index("exact")
    i_err = header.index("abs_error")
    import csv
    with open(clone / "field.csv", "w", newline="",
              encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            row = list(row)
            row[i_mean] = row[i_exact]
            row[i_err] = "0.0"
            writer.writerow(row)
    path = figures.render(str(clone), "field-triptych",
                          str(tmp_path / "out"))
    assert os.path.getsize(path) > 0
