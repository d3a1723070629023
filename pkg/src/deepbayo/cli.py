"""Command-line entry point: run, gradcheck, sweep, report."""

from __future__ import annotations

import dataclasses
import json
import os
import shutil
import sys

import click
import numpy as np
import yaml

from . import analysis as an
from . import autodiff as ad
from . import experiments as ex
from . import network as net
from . import problems as pb
from . import training as tr
from . import variational as vr

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DIVERGED = 3


@click.group()
def main():
    """Operator-network PDE solver with variational uncertainty."""


def _load_config_file(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return yaml.safe_load(fh) or {}
    except OSError as exc:
        raise click.UsageError(f"cannot read config file {path}: {exc}")
    except yaml.YAMLError as exc:
        raise click.UsageError(f"invalid config file {path}: {exc}")


def _merge_config(spec, data, prefix=""):
    for key, value in data.items():
        if not hasattr(spec, key):
            raise click.UsageError(f"unknown config key {prefix}{key}")
        current = getattr(spec, key)
        if isinstance(value, dict) and dataclasses.is_dataclass(current):
            _merge_config(current, value, prefix=f"{prefix}{key}.")
        else:
            setattr(spec, key, value)


def _snapshot(spec, seed, out_dir):
    snap = ex.spec_to_dict(spec, seed)
    with open(os.path.join(out_dir, "config.yaml"), "w",
              encoding="utf-8") as fh:
        yaml.safe_dump(snap, fh, sort_keys=True)


@main.command()
@click.argument("experiment", type=click.Choice(ex.EXPERIMENT_IDS))
@click.option("--config", "config_path", type=str, default=None,
              help="YAML config overriding experiment defaults.")
@click.option("--out", "out_dir", type=str, default=None,
              help="Run directory (default runs/EXPERIMENT-seedN).")
@click.option("--seed", type=int, default=0)
@click.option("--set", "overrides", multiple=True,
              help="Dotted override, e.g. --set train.epochs=100.")
@click.option("--profile", type=str, default=None,
              help="Experiment profile (rd2d: desk or paper).")
@click.option("--force", is_flag=True,
              help="Overwrite an existing run directory.")
@click.option("--quiet", is_flag=True)
def run(experiment, config_path, out_dir, seed, overrides, profile, force,
        quiet):
    """Train one experiment and write its artifacts."""
    kwargs = {"profile": profile} if profile else {}
    try:
        spec = ex.make_spec(experiment, **kwargs)
    except (TypeError, ValueError) as exc:
        raise click.UsageError(str(exc))
    if config_path is not None:
        _merge_config(spec, _load_config_file(config_path))
    for item in overrides:
        if "=" not in item:
            raise click.UsageError(f"override {item!r} is not key=value")
        key, _, raw = item.partition("=")
        try:
            ex.apply_override(spec, key, raw)
        except (KeyError, ValueError) as exc:
            raise click.UsageError(str(exc))

    out_dir = out_dir or os.path.join("runs", f"{experiment}-seed{seed}")
    if os.path.exists(out_dir) and os.listdir(out_dir):
        if not force:
            click.echo(f"run directory {out_dir} exists; use --force",
                       err=True)
            sys.exit(EXIT_USAGE)
        shutil.rmtree(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    _snapshot(spec, seed, out_dir)

    log_path = os.path.join(out_dir, "run.log")
    with open(log_path, "w", encoding="utf-8") as log_fh:
        def log(msg):
            log_fh.write(msg + "\n")
            if not quiet:
                click.echo(msg)

        try:
            metrics = ex.run_experiment(spec, out_dir, seed=seed, log=log)
        except tr.TrainingDiverged as exc:
            log(f"diverged: {exc}")
            click.echo(f"training diverged: {exc}", err=True)
            sys.exit(EXIT_DIVERGED)
    if not quiet:
        click.echo(json.dumps({k: v for k, v in metrics.items()
                               if isinstance(v, (int, float, str))},
                              indent=1, sort_keys=True))
    sys.exit(EXIT_OK)


# ---------------------------------------------------------------------------
# gradcheck
# ---------------------------------------------------------------------------

def _mlp_scalar(mlp, x):
    def f(tape):
        out = mlp.forward(tape, tape.constant(x))
        return ad.mean(ad.square(out))
    return f


def gradcheck_suite(widths, seed=0, perturb=0.0):
    """First-order, jet, and nested derivative checks on a random MLP.

    `perturb` injects an artificial relative error into the reported
    analytic values (negative-control hook); returns a list of rows
    (name, max_rel_error, tol, passed).
    """
    rng = np.random.default_rng(seed)
    mlp = net.init_mlp(widths, seed=None, rng=rng)
    d = widths[0]
    x = rng.uniform(-1.0, 1.0, size=(4, d))
    rows = []

    rep = ad.grad_check(_mlp_scalar(mlp, x), mlp.parameters(), tol=1e-5)
    rows.append(("first-order", rep.max_rel_error * (1.0 + perturb)
                 + abs(perturb), 1e-5))

    # jet vs FD along a random unit direction
    def scalar_np(pt):
        return float(mlp.forward_np(pt[None, :])[0, 0])

    direction = rng.standard_normal(d)
    direction /= np.linalg.norm(direction)
    pt = x[0]
    def jet_f(js):
        return mlp.forward(js[0].v.tape, ad.jet_colstack(js))

    jet = ad.jet_eval(jet_f, pt, direction)
    h = 1e-4
    up = scalar_np(pt + h * direction)
    mid = scalar_np(pt)
    lo = scalar_np(pt - h * direction)
    fd1 = (up - lo) / (2 * h)
    fd2 = (up - 2 * mid + lo) / (h * h)
    e1 = abs(float(np.ravel(jet.d.value)[0]) - fd1) / max(abs(fd1), 1e-8)
    e2 = abs(float(np.ravel(jet.dd.value)[0]) - fd2) / max(abs(fd2), 1e-6)
    rows.append(("second-order", max(e1, e2) * (1.0 + perturb)
                 + abs(perturb), 1e-4))

    # nested: parameter gradient of the summed laplacian
    def nested(tape):
        def f(jets):
            return mlp.forward(tape, ad.jet_colstack(jets))
        lap = None
        for i in range(d):
            e = np.zeros(d)
            e[i] = 1.0
            dd = ad.jet_eval(f, x, e, tape=tape).dd
            lap = dd if lap is None else lap + dd
        return ad.mean(lap)

    rep3 = ad.grad_check(nested, mlp.parameters(), step=1e-4, tol=1e-3)
    rows.append(("nested-laplacian", rep3.max_rel_error * (1.0 + perturb)
                 + abs(perturb), 1e-3))
    return [(name, err, tol, err < tol) for name, err, tol in rows]


@main.command()
@click.option("--widths", default="2,8,8,1",
              help="Comma-separated MLP widths for the check network.")
@click.option("--seed", type=int, default=0)
@click.option("--perturb", type=float, default=0.0, hidden=True)
def gradcheck(widths, seed, perturb):
    """Verify analytic derivatives against finite differences."""
    try:
        widths = [int(w) for w in widths.split(",")]
    except ValueError:
        raise click.UsageError(f"invalid widths {widths!r}")
    rows = gradcheck_suite(widths, seed=seed, perturb=perturb)
    ok = True
    click.echo(f"{'check':<18}{'max rel error':>15}{'tol':>10}  status")
    for name, err, tol, passed in rows:
        ok = ok and passed
        click.echo(f"{name:<18}{err:>15.3e}{tol:>10.0e}  "
                   f"{'pass' if passed else 'FAIL'}")
    sys.exit(EXIT_OK if ok else EXIT_FAILURE)


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------

@main.command()
@click.argument("experiment", type=click.Choice(ex.EXPERIMENT_IDS))
@click.option("--grid", "grid_path", required=True,
              help="YAML list of loss-weight mappings.")
@click.option("--budget", type=int, required=True,
              help="Epochs per candidate.")
@click.option("--out", "out_dir", default="sweep-out")
@click.option("--seed", type=int, default=0)
def sweep(experiment, grid_path, budget, out_dir, seed):
    """Rank loss-weight candidates by short training runs."""
    if budget < 1:
        raise click.UsageError("budget must be >= 1")
    entries = _load_config_file(grid_path)
    if not isinstance(entries, list) or not entries:
        raise click.UsageError(f"grid file {grid_path} must be a non-empty "
                               "list of weight mappings")
    try:
        grid = [vr.LossWeights(**e) for e in entries]
    except (TypeError, ValueError) as exc:
        raise click.UsageError(f"bad weight entry: {exc}")
    spec = ex.make_spec(experiment)
    problem = pb.PROBLEMS[spec.name]()
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    dataset = None
    if problem.exact is not None and spec.name != "helmholtz3d":
        dataset = pb.synthesize_dataset(
            problem, pb.SensorLayout(n_interior=spec.n_sensors),
            spec.noise, rng)

    def factory(s):
        return ex._build_model(spec, problem, s)

    results = tr.grid_search(problem, dataset, factory, spec.train, grid,
                             budget, seed=seed)
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "sweep.csv")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("rank,w_interior,w_ic,w_bc,w_data,w_std,score\n")
        for rank, (w, score) in enumerate(results):
            fh.write(f"{rank},{w.w_interior!r},{w.w_ic!r},{w.w_bc!r},"
                     f"{w.w_data!r},{w.w_std!r},{score!r}\n")
    click.echo(f"wrote {path} ({len(results)} candidates)")
    sys.exit(EXIT_OK)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

# published comparator values for the reaction-rate table
RD2D_COMPARATORS = {
    "B-PINN-HMC": (1.003, 5.75e-3),
    "B-PINN-VI": (0.895, 2.83e-3),
    "Dropout-1%": (1.050, 2.00e-3),
    "Dropout-5%": (1.168, 3.04e-3),
}

COVERAGE_METHODS = ("snn", "bnn", "mcdo", "denn", "deepbayo")


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.3g}" if (abs(v) < 1e-2 or abs(v) >= 1e3) else f"{v:.3f}"
    return str(v)


@main.command()
@click.option("--runs", "run_dirs", multiple=True, required=True,
              help="Run directories containing metrics.json.")
@click.option("--out", "out_dir", default="report-out")
def report(run_dirs, out_dir):
    """Aggregate run metrics into tables.json and text tables."""
    missing = [d for d in run_dirs
               if not os.path.exists(os.path.join(d, "metrics.json"))]
    if missing:
        click.echo("missing metrics.json in: " + ", ".join(missing), err=True)
        sys.exit(EXIT_FAILURE)
    all_metrics = {d: an.read_metrics_json(os.path.join(d, "metrics.json"))
                   for d in run_dirs}
    os.makedirs(out_dir, exist_ok=True)
    tables = {"runs": all_metrics}
    lines = []

    coverage_rows = []
    for d, m in all_metrics.items():
        if "deepbayo_total" in m:
            for method in COVERAGE_METHODS:
                coverage_rows.append(
                    (method, m.get(f"{method}_mse_total"),
                     m.get(f"{method}_total"), m.get(f"{method}_idd"),
                     m.get(f"{method}_ood")))
    if coverage_rows:
        tables["coverage"] = coverage_rows
        lines.append("architecture    mse      total    idd      ood")
        for row in coverage_rows:
            lines.append("{:<15} {:<8} {:<8} {:<8} {:<8}".format(
                row[0], *[_fmt(v) for v in row[1:]]))
        lines.append("")

    k_rows = []
    for d, m in all_metrics.items():
        if m.get("experiment") == "rd2d":
            k_rows.append(("deepbayo", m.get("posterior_mean_k"),
                           m.get("posterior_std_k")))
    if k_rows:
        for name, (mean, std) in RD2D_COMPARATORS.items():
            k_rows.append((name, mean, std))
        tables["reaction_rate"] = k_rows
        lines.append("method          mean     std")
        for name, mean, std in k_rows:
            lines.append(f"{name:<15} {_fmt(mean):<8} {_fmt(std)}")
        lines.append("")

    with open(os.path.join(out_dir, "tables.json"), "w",
              encoding="utf-8") as fh:
        json.dump(tables, fh, indent=1, sort_keys=True)
        fh.write("\n")
    text = "\n".join(lines) + ("\n" if lines else "")
    with open(os.path.join(out_dir, "tables.txt"), "w",
              encoding="utf-8") as fh:
        fh.write(text)
    click.echo(text or "no tabular metrics found")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
