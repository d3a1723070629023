"""Posterior summaries, coverage metrics, field evaluation, and artifact I/O."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import network as net
from . import problems as pb
from . import variational as vr
from .autodiff import Tape


@dataclass
class PosteriorSummary:
    mean: np.ndarray       # (P,)
    std: np.ndarray
    mode: np.ndarray       # center of the highest-count histogram bin
    bin_edges: list        # per parameter, (n_bins + 1,)
    counts: list           # per parameter, (n_bins,)


def summarize_posterior(samples, n_bins=100):
    """Sample statistics and histogram mode per parameter column."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim == 1:
        samples = samples[:, None]
    if samples.size == 0:
        raise ValueError("empty posterior sample set")
    if n_bins < 2:
        raise ValueError("n_bins must be >= 2")
    means = samples.mean(axis=0)
    stds = samples.std(axis=0)
    modes = np.empty(samples.shape[1])
    edges_all, counts_all = [], []
    for j in range(samples.shape[1]):
        col = samples[:, j]
        lo, hi = col.min(), col.max()
        if hi == lo:
            hi = lo + 1.0  # degenerate sample set; single occupied bin
        counts, edges = np.histogram(col, bins=n_bins, range=(lo, hi))
        k = int(np.argmax(counts))  # argmax takes the first (lowest) max bin
        modes[j] = 0.5 * (edges[k] + edges[k + 1])
        if np.all(samples[:, j] == samples[0, j]):
            modes[j] = samples[0, j]
        edges_all.append(edges)
        counts_all.append(counts)
    return PosteriorSummary(mean=means, std=stds, mode=modes,
                            bin_edges=edges_all, counts=counts_all)


@dataclass
class CoverageReport:
    total: float
    idd: float
    ood: float
    mse_total: float
    mse_idd: float
    mse_ood: float

    def as_dict(self, prefix=""):
        return {prefix + k: getattr(self, k)
                for k in ("total", "idd", "ood",
                          "mse_total", "mse_idd", "mse_ood")}


def ci_coverage(predictions, targets, split_labels):
    """Fraction of targets inside the 95% interval, overall and per split.

    `predictions` is the dict produced by predict_with_uq/predict_baseline
    (keys mean, ci95_lo, ci95_hi); labels are 'idd' or 'ood' per point.
    """
    targets = np.asarray(targets, dtype=np.float64)
    labels = np.asarray(split_labels)
    lo, hi = predictions["ci95_lo"], predictions["ci95_hi"]
    mean = predictions["mean"]
    if not (len(targets) == len(labels) == len(lo)):
        raise ValueError("predictions, targets, and labels differ in length")
    bad = set(labels) - {"idd", "ood"}
    if bad:
        raise ValueError(f"unknown split labels {sorted(bad)}")
    inside = (targets >= lo) & (targets <= hi)
    sq = (mean - targets) ** 2

    def _pct(mask):
        return float(100.0 * inside[mask].mean()) if mask.any() else 0.0

    def _mse(mask):
        return float(sq[mask].mean()) if mask.any() else 0.0

    m_idd = labels == "idd"
    m_ood = labels == "ood"
    all_mask = np.ones(len(targets), dtype=bool)
    return CoverageReport(total=_pct(all_mask), idd=_pct(m_idd),
                          ood=_pct(m_ood), mse_total=_mse(all_mask),
                          mse_idd=_mse(m_idd), mse_ood=_mse(m_ood))


# ---------------------------------------------------------------------------
# field evaluation
# ---------------------------------------------------------------------------

@dataclass
class GridSpec:
    points: np.ndarray   # (n, d)
    labels: list         # per-point slice tag (empty string when trivial)
    shape: tuple = None  # (rows, cols) when the grid is one regular panel


@dataclass
class FieldGrid:
    points: np.ndarray
    labels: list
    mean: np.ndarray
    exact: np.ndarray
    abs_error: np.ndarray
    epistemic_std: np.ndarray
    aleatoric_std: np.ndarray
    residual: np.ndarray
    shape: tuple = None


def regular_grid(bounds, resolution, time_span=None):
    """Row-major meshgrid points over bounds, time prepended when given."""
    axes = []
    if time_span is not None:
        axes.append(np.linspace(time_span[0], time_span[1], resolution))
    for lo, hi in bounds:
        axes.append(np.linspace(lo, hi, resolution))
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return GridSpec(points=pts, labels=[""] * len(pts),
                    shape=tuple(len(a) for a in axes))


BALL_Z_SLICES = (0.0, 0.25, 0.5)


def ball_slices(resolution=50):
    """Evaluation planes for the unit ball: z-slices, the x = 0 meridional
    slice, and the vertical axis line."""
    parts, labels = [], []
    lin = np.linspace(-1.0, 1.0, resolution)
    for z in BALL_Z_SLICES:
        xx, yy = np.meshgrid(lin, lin, indexing="ij")
        pts = np.column_stack([xx.ravel(), yy.ravel(),
                               np.full(xx.size, z)])
        keep = np.sum(pts ** 2, axis=1) <= 1.0
        parts.append(pts[keep])
        labels.extend([f"z={z}"] * int(keep.sum()))
    yy, zz = np.meshgrid(lin, lin, indexing="ij")
    pts = np.column_stack([np.zeros(yy.size), yy.ravel(), zz.ravel()])
    keep = np.sum(pts ** 2, axis=1) <= 1.0
    parts.append(pts[keep])
    labels.extend(["x=0"] * int(keep.sum()))
    axis_pts = np.column_stack([np.zeros(resolution), np.zeros(resolution),
                                lin])
    parts.append(axis_pts)
    labels.extend(["axis"] * resolution)
    return GridSpec(points=np.vstack(parts), labels=labels)


def grid_for_problem(problem, resolution=100):
    if problem.domain.kind == "unit-ball":
        return ball_slices(resolution=min(resolution, 50))
    return regular_grid(problem.domain.bounds, resolution,
                        time_span=problem.domain.time_span)


FIELD_MODES = ("posterior-mean", "single-sample", "fixed-param")


def evaluate_field(model, problem, grid_spec, n_latent=256,
                   mode="posterior-mean", param_value=None, rng=None,
                   antisym_axis=None, residual_chunk=2000):
    """Predicted field, error vs exact, uncertainty, and residual map."""
    if mode not in FIELD_MODES:
        raise ValueError(f"unknown field mode {mode!r}")
    if mode == "fixed-param" and param_value is None:
        raise ValueError("fixed-param mode needs a param_value")
    rng = rng or np.random.default_rng(0)
    pts = grid_spec.points
    n = len(pts)

    if mode == "single-sample":
        latent = rng.standard_normal((1, model.latent_dim))
        means, log_vars, _ = net.deeponet_forward_np(model, pts, latent)
        mean = means[:, 0]
        if antisym_axis is not None:
            mean = _antisym_np(model, pts, latent, antisym_axis)
        epi = np.zeros(n)
        alea = np.exp(log_vars[:, 0]) if log_vars is not None else np.zeros(n)
    else:
        stats = vr.predict_with_uq(model, pts, max(n_latent, 2), rng)
        mean, epi, alea = (stats["mean"], stats["epistemic_var"],
                           stats["aleatoric_var"])
        if antisym_axis is not None:
            latents = rng.standard_normal((n_latent, model.latent_dim))
            sym = np.stack([_antisym_np(model, pts, latents[i:i + 1],
                                        antisym_axis)
                            for i in range(n_latent)])
            mean = sym.mean(axis=0)
            epi = sym.var(axis=0)

    exact = (problem.exact(pts) if problem.exact is not None
             else np.full(n, np.nan))
    residual = np.full(n, np.nan)
    if problem.residual is not None:
        if param_value is None:
            param_value = _posterior_mean_params(model, rng)
        residual = _residual_map(model, problem, pts, param_value,
                                 antisym_axis, residual_chunk)
    return FieldGrid(points=pts, labels=list(grid_spec.labels), mean=mean,
                     exact=exact, abs_error=np.abs(mean - exact),
                     epistemic_std=np.sqrt(epi), aleatoric_std=np.sqrt(alea),
                     residual=residual, shape=grid_spec.shape)


def _antisym_np(model, pts, latent, axis):
    flipped = pts.copy()
    flipped[:, axis] = -flipped[:, axis]
    m1, _, _ = net.deeponet_forward_np(model, pts, latent)
    m2, _, _ = net.deeponet_forward_np(model, flipped, latent)
    return 0.5 * (m1[:, 0] - m2[:, 0])


def _posterior_mean_params(model, rng):
    if model.n_phys_params == 0:
        return []
    samples = vr.posterior_param_samples(model, 512, rng)
    return list(samples.mean(axis=0))


def _residual_map(model, problem, pts, param_value, antisym_axis, chunk):
    out = np.empty(len(pts))
    params = [float(v) for v in np.atleast_1d(param_value)]
    for i in range(0, len(pts), chunk):
        sl = pts[i:i + chunk]
        tape = Tape()
        probe = vr.SolutionProbe(model, tape, sl,
                                 np.zeros((1, model.latent_dim)),
                                 antisym_axis=antisym_axis)
        fvals = problem.forcing(sl) if (problem.observes_forcing
                                        and problem.forcing is not None) else None
        res = problem.residual(probe, sl, params, fvals)
        out[i:i + chunk] = np.asarray(res.value if isinstance(res, ad.Node)
                                      else res)
    return out


# ---------------------------------------------------------------------------
# replication
# ---------------------------------------------------------------------------

def seed_replicate(run_fn, n_runs, seed0=0):
    """Run `run_fn(seed)` for consecutive seeds; mean/std per metric key."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    rows = [run_fn(seed0 + i) for i in range(n_runs)]
    keys = list(rows[0].keys())
    agg = {}
    for k in keys:
        vals = np.array([r[k] for r in rows])
        agg[k + "_mean"] = float(vals.mean())
        agg[k + "_std"] = float(vals.std())
    agg["n_runs"] = n_runs
    return agg


# ---------------------------------------------------------------------------
# artifact writers (CSV: header row, UTF-8, repr round-trip floats)
# ---------------------------------------------------------------------------

def write_posterior_csv(path, samples, param_names):
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[1] != len(param_names):
        raise ValueError("sample columns do not match parameter names")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(param_names)
        for row in samples:
            writer.writerow([repr(float(v)) for v in row])


def read_posterior_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        names = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return names, np.asarray(rows, dtype=np.float64)


FIELD_COLUMNS = ("mean", "exact", "abs_error", "epistemic_std",
                 "aleatoric_std", "residual")


def write_field_csv(path, field_grid, coord_names):
    pts = field_grid.points
    if pts.shape[1] != len(coord_names):
        raise ValueError("coordinate names do not match point columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(coord_names) + ["slice"] + list(FIELD_COLUMNS))
        cols = [getattr(field_grid, c) for c in FIELD_COLUMNS]
        for i in range(len(pts)):
            writer.writerow([repr(float(v)) for v in pts[i]]
                            + [field_grid.labels[i]]
                            + [repr(float(c[i])) for c in cols])


def read_field_csv(path):
    with open(path, "r", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    return header, rows


def write_metrics_json(path, metrics):
    clean = {}
    for k, v in metrics.items():
        if isinstance(v, (np.floating, np.integer)):
            v = v.item()
        clean[k] = v
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(clean, fh, sort_keys=True, indent=1)
        fh.write("\n")


def read_metrics_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
