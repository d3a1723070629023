"""Render static figures from run artifact files.

Reads only the documented artifact schemas (history.csv, posterior.csv,
field.csv, metrics.json); never recomputes model quantities. All output
is deterministic: fixed style, fixed PNG metadata, no timestamps, and a
caption carrying the run-dir name and seed for provenance.
"""

from __future__ import annotations

import csv
import json
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_IDS = ("loss-history", "band-plot", "posterior-hist",
              "field-triptych", "slice-panel", "axis-line")

HISTORY_COLUMNS = ("epoch", "interior", "ic", "bc", "data", "std",
                   "total", "lr")
FIELD_VALUE_COLUMNS = ("mean", "exact", "abs_error", "epistemic_std",
                       "aleatoric_std", "residual")

STYLE = {
    "figure.dpi": 100,
    "savefig.dpi": 100,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.2,
}

PNG_METADATA = {"Software": "figures"}


class ArtifactError(Exception):
    """A required artifact is missing or does not match its schema."""


# ---------------------------------------------------------------------------
# artifact loading
# ---------------------------------------------------------------------------

def _read_csv(path):
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact file {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ArtifactError(f"{path}: empty file, no header row")
        rows = list(reader)
    return header, rows


def _require_columns(path, header, names):
    for name in names:
        if name not in header:
            raise ArtifactError(f"{path}: missing column {name!r}")


def _float_column(path, header, rows, name):
    j = header.index(name)
    try:
        return np.array([float(r[j]) for r in rows])
    except (ValueError, IndexError):
        raise ArtifactError(f"{path}: column {name!r} is not numeric")


def load_metrics(run_dir):
    path = os.path.join(run_dir, "metrics.json")
    if not os.path.exists(path):
        raise ArtifactError(f"missing artifact file {path}")
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: invalid JSON ({exc})")


def load_history(run_dir):
    path = os.path.join(run_dir, "history.csv")
    header, rows = _read_csv(path)
    _require_columns(path, header, HISTORY_COLUMNS)
    if not rows:
        raise ArtifactError(f"{path}: no epochs recorded")
    return {name: _float_column(path, header, rows, name)
            for name in HISTORY_COLUMNS}


def load_posterior(run_dir):
    path = os.path.join(run_dir, "posterior.csv")
    header, rows = _read_csv(path)
    if not header or not rows:
        raise ArtifactError(f"{path}: no posterior samples")
    samples = np.column_stack([_float_column(path, header, rows, n)
                               for n in header])
    return header, samples


def load_field(run_dir):
    path = os.path.join(run_dir, "field.csv")
    header, rows = _read_csv(path)
    _require_columns(path, header, ("slice",) + FIELD_VALUE_COLUMNS)
    if not rows:
        raise ArtifactError(f"{path}: no field points")
    cut = header.index("slice")
    coord_names = header[:cut]
    if not coord_names:
        raise ArtifactError(f"{path}: no coordinate columns before 'slice'")
    coords = np.column_stack([_float_column(path, header, rows, n)
                              for n in coord_names])
    labels = np.array([r[cut] for r in rows])
    values = {n: _float_column(path, header, rows, n)
              for n in FIELD_VALUE_COLUMNS}
    return {"coord_names": coord_names, "coords": coords,
            "labels": labels, **values}


def _caption(run_dir, metrics):
    return f"{os.path.basename(os.path.normpath(run_dir))} " \
           f"(seed {metrics.get('seed', '?')})"


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------

def _save(fig, out_path):
    fig.savefig(out_path, format="png", metadata=PNG_METADATA)
    plt.close(fig)
    return out_path


def _line_section(field):
    """A 1-d cut through the field: the axis slice when present, the
    whole field when one coordinate, otherwise the row closest to the
    median of every coordinate but the last."""
    coords = field["coords"]
    if "axis" in field["labels"]:
        mask = field["labels"] == "axis"
        x = coords[mask][:, int(np.argmax(coords[mask].var(axis=0)))]
    elif coords.shape[1] == 1:
        mask = np.ones(len(coords), dtype=bool)
        x = coords[:, 0]
    else:
        mask = np.ones(len(coords), dtype=bool)
        for j in range(coords.shape[1] - 1):
            uniq = np.unique(coords[:, j])
            pick = uniq[int(np.argmin(np.abs(uniq - np.median(uniq))))]
            mask &= coords[:, j] == pick
        x = coords[mask][:, -1]
    order = np.argsort(x, kind="stable")
    idx = np.flatnonzero(mask)[order]
    return x[order], idx


def _panel_axes(coords):
    """The two most varying coordinates of a point set (for heatmaps)."""
    if coords.shape[1] == 1:
        return 0, 0
    var = coords.var(axis=0)
    a, b = np.argsort(var)[-2:]
    return int(min(a, b)), int(max(a, b))


def _area_slices(field):
    """Slice labels carrying 2-d panels (everything except axis lines)."""
    out = []
    for label in dict.fromkeys(field["labels"]):  # first-seen order
        mask = field["labels"] == label
        if label != "axis" and mask.sum() > 2:
            out.append((label, mask))
    if not out:
        raise ArtifactError("field.csv: no 2-d slice panels to draw")
    return out


# ---------------------------------------------------------------------------
# the six figure kinds
# ---------------------------------------------------------------------------

def fig_loss_history(run_dir, out_path, metrics):
    hist = load_history(run_dir)
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in ("interior", "ic", "bc", "data", "std", "total"):
        vals = hist[name]
        if np.any(vals > 0):
            ax.semilogy(hist["epoch"], np.maximum(vals, 1e-12), label=name)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss component")
    ax.legend(loc="upper right", fontsize=7)
    fig.suptitle(f"loss history | {_caption(run_dir, metrics)}", fontsize=9)
    return _save(fig, out_path)


def fig_band_plot(run_dir, out_path, metrics):
    field = load_field(run_dir)
    x, idx = _line_section(field)
    mean = field["mean"][idx]
    std = np.sqrt(field["epistemic_std"][idx] ** 2
                  + field["aleatoric_std"][idx] ** 2)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(x, mean - 2 * std, mean + 2 * std, alpha=0.3,
                    color="tab:orange", label="mean +- 2 std")
    ax.plot(x, mean, color="tab:red", label="predicted mean")
    exact = field["exact"][idx]
    if np.all(np.isfinite(exact)):
        ax.plot(x, exact, "k--", label="exact")
    for edge in (-1.0, 1.0):  # training-range boundary markers
        if x.min() < edge < x.max():
            ax.axvline(edge, color="tab:blue", linewidth=1.0)
    ax.set_xlabel("coordinate")
    ax.legend(fontsize=7)
    fig.suptitle(f"uncertainty band | {_caption(run_dir, metrics)}",
                 fontsize=9)
    return _save(fig, out_path)


def fig_posterior_hist(run_dir, out_path, metrics):
    names, samples = load_posterior(run_dir)
    fig, axes = plt.subplots(1, len(names),
                             figsize=(4 * len(names), 3.2), squeeze=False)
    for j, name in enumerate(names):
        ax = axes[0, j]
        ax.hist(samples[:, j], bins=60, color="tab:blue", alpha=0.8)
        true = metrics.get(f"true_{name}")
        if true is not None:
            ax.axvline(true, color="tab:red", linewidth=1.2,
                       label=f"true {true:g}")
            ax.legend(fontsize=7)
        ax.set_xlabel(name)
    fig.suptitle(f"posterior | {_caption(run_dir, metrics)}", fontsize=9)
    return _save(fig, out_path)


def fig_field_triptych(run_dir, out_path, metrics):
    field = load_field(run_dir)
    panels = _area_slices(field)
    fig, axes = plt.subplots(len(panels), 3,
                             figsize=(9, 2.8 * len(panels)), squeeze=False)
    for i, (label, mask) in enumerate(panels):
        pts = field["coords"][mask]
        a, b = _panel_axes(pts)
        mean, exact = field["mean"][mask], field["exact"][mask]
        err = field["abs_error"][mask]
        # predicted and exact share one scale so they compare directly;
        # the error panel starts at zero so a perfect fit is uniform at
        # the colorbar minimum
        vmin = min(mean.min(), exact.min())
        vmax = max(mean.max(), exact.max())
        for k, (vals, title, lo, hi) in enumerate((
                (mean, "predicted", vmin, vmax),
                (exact, "exact", vmin, vmax),
                (err, "|error|", 0.0, max(err.max(), 1e-12)))):
            ax = axes[i, k]
            sc = ax.scatter(pts[:, a], pts[:, b], c=vals, s=4,
                            vmin=lo, vmax=hi, cmap="viridis")
            ax.set_title(f"{title} {label}".strip(), fontsize=8)
            ax.set_xlabel(field["coord_names"][a], fontsize=7)
            ax.set_ylabel(field["coord_names"][b], fontsize=7)
            fig.colorbar(sc, ax=ax, shrink=0.8)
    fig.suptitle(f"field triptych | {_caption(run_dir, metrics)}",
                 fontsize=9)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    return _save(fig, out_path)


def fig_slice_panel(run_dir, out_path, metrics):
    field = load_field(run_dir)
    panels = _area_slices(field)
    fig, axes = plt.subplots(len(panels), 1,
                             figsize=(4.2, 3.2 * len(panels)),
                             squeeze=False)
    vmin = field["mean"].min()
    vmax = field["mean"].max()
    for i, (label, mask) in enumerate(panels):
        pts = field["coords"][mask]
        a, b = _panel_axes(pts)
        ax = axes[i, 0]
        sc = ax.scatter(pts[:, a], pts[:, b], c=field["mean"][mask], s=4,
                        vmin=vmin, vmax=vmax, cmap="viridis")
        ax.set_title(f"predicted mean {label}".strip(), fontsize=8)
        ax.set_xlabel(field["coord_names"][a], fontsize=7)
        ax.set_ylabel(field["coord_names"][b], fontsize=7)
        fig.colorbar(sc, ax=ax, shrink=0.8)
    fig.suptitle(f"slices | {_caption(run_dir, metrics)}", fontsize=9)
    fig.tight_layout(rect=(0, 0, 1, 0.96))
    return _save(fig, out_path)


def fig_axis_line(run_dir, out_path, metrics):
    field = load_field(run_dir)
    x, idx = _line_section(field)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, field["mean"][idx], color="tab:red", label="predicted")
    exact = field["exact"][idx]
    if np.all(np.isfinite(exact)):
        ax.plot(x, exact, "k--", label="exact")
    ax.set_xlabel("coordinate along the line")
    ax.legend(fontsize=7)
    fig.suptitle(f"line profile | {_caption(run_dir, metrics)}", fontsize=9)
    return _save(fig, out_path)


RENDERERS = {
    "loss-history": fig_loss_history,
    "band-plot": fig_band_plot,
    "posterior-hist": fig_posterior_hist,
    "field-triptych": fig_field_triptych,
    "slice-panel": fig_slice_panel,
    "axis-line": fig_axis_line,
}


def render(run_dir, fig_id, out_dir):
    """Render one figure kind for a run dir; returns the output path."""
    if fig_id not in RENDERERS:
        raise ArtifactError(f"unknown figure id {fig_id!r}; "
                            f"choose from {FIGURE_IDS}")
    metrics = load_metrics(run_dir)
    os.makedirs(out_dir, exist_ok=True)
    run_name = os.path.basename(os.path.normpath(run_dir))
    out_path = os.path.join(out_dir, f"{run_name}__{fig_id}.png")
    with plt.rc_context(STYLE):
        return RENDERERS[fig_id](run_dir, out_path, metrics)
