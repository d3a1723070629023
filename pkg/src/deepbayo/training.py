"""Adam optimization, plateau scheduling, training loop, and grid search."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from . import network as net
from . import problems as pb
from . import variational as vr


class TrainingDiverged(RuntimeError):
    def __init__(self, component, epoch, value):
        super().__init__(
            f"non-finite loss component {component!r} at epoch {epoch}: {value}")
        self.component = component
        self.epoch = epoch


@dataclass
class SchedulerConfig:
    factor: float = 0.5
    patience: int = 500
    min_lr: float = 1e-5

    def __post_init__(self):
        if not 0.0 < self.factor < 1.0:
            raise ValueError("scheduler factor must be in (0, 1)")
        if self.min_lr <= 0:
            raise ValueError("min_lr must be positive")


@dataclass
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 100
    initial_lr: float = 0.01
    scheduler: SchedulerConfig = field(default_factory=SchedulerConfig)
    weights: vr.LossWeights = field(default_factory=vr.LossWeights)
    seed: int = 0
    latent_samples_per_step: int = 1
    n_collocation: int = 0
    n_boundary: int = 0
    n_initial: int = 0
    antisym_axis: int = None
    collocation_with_sensors: bool = False  # add sensor points (and their
                                            # observed forcing) to the
                                            # interior group
    log_every: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


class AdamState:
    """Standard Adam with bias correction; one moment pair per Parameter."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {id(p): np.zeros_like(p.value) for p in self.params}
        self.v = {id(p): np.zeros_like(p.value) for p in self.params}

    def step(self, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p in self.params:
            try:
                g = grads.of(p)
            except KeyError as exc:
                raise KeyError(f"no gradient for parameter {p.name!r}") from exc
            m = self.m[id(p)] = b1 * self.m[id(p)] + (1.0 - b1) * g
            v = self.v[id(p)] = b2 * self.v[id(p)] + (1.0 - b2) * g * g
            p.value = p.value - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def adam_step(state, grads):
    state.step(grads)
    return state.params


class PlateauScheduler:
    """Reduce-on-plateau: cut lr when the best loss stops improving."""

    def __init__(self, initial_lr, config=None):
        self.config = config or SchedulerConfig()
        self.lr = initial_lr
        self.best = math.inf
        self.stale = 0

    def step(self, epoch_loss):
        if epoch_loss < self.best:
            self.best = epoch_loss
            self.stale = 0
        else:
            self.stale += 1
            if self.stale > self.config.patience:
                self.lr = max(self.lr * self.config.factor, self.config.min_lr)
                self.stale = 0
        return self.lr


def plateau_step(scheduler, epoch_loss):
    return scheduler.step(epoch_loss)


@dataclass
class History:
    epochs: list = field(default_factory=list)  # dict rows

    def append(self, row):
        self.epochs.append(row)

    def __len__(self):
        return len(self.epochs)

    def totals(self):
        return np.array([r["total"] for r in self.epochs])

    COLUMNS = ["epoch", "interior", "ic", "bc", "data", "std", "total", "lr"]

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.COLUMNS)
            for row in self.epochs:
                writer.writerow([repr(float(row[c])) if c != "epoch" else row[c]
                                 for c in self.COLUMNS])


def _rng_streams(seed):
    root = np.random.SeedSequence(seed)
    names = ("data", "latent", "collocation", "init")
    return dict(zip(names, (np.random.default_rng(s)
                            for s in root.spawn(len(names)))))


def _check_finite(breakdown, epoch):
    for name in ("interior", "ic", "bc", "data", "std", "total"):
        v = getattr(breakdown, name)
        if not math.isfinite(v):
            raise TrainingDiverged(name, epoch, v)


def make_batch(problem, dataset, idx, config, rngs):
    """Assemble one step's point groups."""
    interior = None
    interior_f = None
    if problem.residual is not None:
        parts = []
        fparts = []
        if config.n_collocation > 0:
            pts = pb.sample_interior(problem.domain, config.n_collocation,
                                     rngs["collocation"])
            parts.append(pts)
            if problem.observes_forcing and problem.forcing is not None:
                fparts.append(problem.forcing(pts))
        if (config.collocation_with_sensors and dataset is not None
                and dataset.forcing_obs is not None):
            parts.append(dataset.points)
            fparts.append(dataset.forcing_obs)
        if parts:
            interior = np.vstack(parts)
            if fparts:
                interior_f = np.concatenate(fparts)
    boundary = None
    if problem.boundary_value is not None and config.n_boundary > 0:
        bpts = pb.sample_boundary(problem.domain, config.n_boundary,
                                  rngs["collocation"])
        boundary = (bpts, problem.boundary_value(bpts))
    initial = None
    if problem.initial_value is not None and config.n_initial > 0:
        ipts = pb.sample_initial(problem.domain, config.n_initial,
                                 rngs["collocation"])
        initial = (ipts, problem.initial_value(ipts))
    data = None
    if dataset is not None and len(idx):
        data = (dataset.points[idx], dataset.observations[idx])
    return vr.Batch(interior=interior, interior_forcing=interior_f,
                    boundary=boundary, initial=initial, data=data)


def train(model, problem, dataset, config, var_config=None,
          history_path=None, flush_every=100, log=None):
    """Train the operator model; returns (model, History)."""
    var_config = var_config or vr.VariationalConfig()
    rngs = _rng_streams(config.seed)
    params = model.parameters() + var_config.extra_parameters()
    adam = AdamState(params, config.initial_lr)
    scheduler = PlateauScheduler(config.initial_lr, config.scheduler)
    history = History()
    n_data = len(dataset) if dataset is not None else 0
    writer = None
    fh = None
    if history_path is not None:
        fh = open(history_path, "w", newline="", encoding="utf-8")
        writer = csv.writer(fh)
        writer.writerow(History.COLUMNS)
    try:
        for epoch in range(config.epochs):
            if n_data:
                order = rngs["data"].permutation(n_data)
                batches = [order[i:i + config.batch_size]
                           for i in range(0, n_data, config.batch_size)]
            else:
                batches = [np.array([], dtype=int)]
            sums = np.zeros(6)
            for idx in batches:
                batch = make_batch(problem, dataset, idx, config, rngs)
                acc_grads = None
                acc_break = np.zeros(6)
                n_lat = config.latent_samples_per_step
                for _ in range(n_lat):
                    latent = rngs["latent"].standard_normal((1, model.latent_dim))
                    tape = ad.Tape()
                    breakdown = vr.practical_loss(
                        model, problem, batch, config.weights, var_config,
                        latent, tape=tape, antisym_axis=config.antisym_axis)
                    grads = ad.backward(breakdown.total)
                    vals = breakdown.values()
                    acc_break += np.array([vals.interior, vals.ic, vals.bc,
                                           vals.data, vals.std, vals.total])
                    if acc_grads is None:
                        acc_grads = grads
                    else:
                        acc_grads = ad.GradientVector({
                            k: (p, g + grads.of(p))
                            for k, (p, g) in acc_grads._grads.items()})
                if n_lat > 1:
                    acc_grads = acc_grads.scale(1.0 / n_lat)
                    acc_break /= n_lat
                adam.lr = scheduler.lr
                adam.step(acc_grads)
                sums += acc_break
            row_vals = sums / len(batches)
            row = dict(zip(("interior", "ic", "bc", "data", "std", "total"),
                           row_vals))
            _check_finite(vr.LossBreakdown(**row), epoch)
            new_lr = scheduler.step(row["total"])
            row["epoch"] = epoch
            row["lr"] = new_lr
            history.append(row)
            if writer is not None:
                writer.writerow([row[c] if c == "epoch" else repr(float(row[c]))
                                 for c in History.COLUMNS])
                if (epoch + 1) % flush_every == 0:
                    fh.flush()
            if log is not None and config.log_every and \
                    (epoch % config.log_every == 0 or epoch == config.epochs - 1):
                log(f"epoch {epoch:6d}  total {row['total']:.6g}  "
                    f"interior {row['interior']:.4g}  data {row['data']:.4g}  "
                    f"bc {row['bc']:.4g}  ic {row['ic']:.4g}  "
                    f"std {row['std']:.4g}  lr {new_lr:.3g}")
    finally:
        if fh is not None:
            fh.close()
    return model, history


def calibrate_affine_head(model, problem, dataset, var_config, sigma_r,
                          epochs=1500, lr=0.005, n_collocation=128, seed=0):
    """Fit the affine posterior head by the evidence bound, network frozen.

    Run after `train`: the trained network fixes the solution surrogate,
    and this pass settles the posterior location and width against the
    residual scale `sigma_r` (typically the observation noise level).
    """
    if var_config.kl_mode != "closed-form-affine":
        raise ValueError("calibration requires the affine posterior head")
    var_config.sigma_r = sigma_r
    head = [var_config.affine_mu, var_config.affine_log_sigma]
    adam = AdamState(head, lr)
    rngs = _rng_streams(seed)
    for epoch in range(epochs):
        colloc = pb.sample_interior(problem.domain, n_collocation,
                                    rngs["collocation"])
        fvals = problem.forcing(colloc) if (problem.observes_forcing
                                            and problem.forcing is not None) else None
        batch = vr.Batch(interior=colloc, interior_forcing=fvals,
                         data=(dataset.points, dataset.observations))
        tape = ad.Tape()
        loss = vr.elbo_loss(model, problem, batch, var_config, n_latent=1,
                            rng=rngs["latent"], tape=tape)
        if not math.isfinite(float(loss.value)):
            raise TrainingDiverged("elbo", epoch, float(loss.value))
        grads = ad.backward(loss)
        adam.step(ad.GradientVector(
            {id(p): (p, grads.of(p)) for p in head}))
    return model


def default_score(model, problem, dataset, rng, n_latent=128):
    """Validation MSE plus mean |residual| at fresh points (lower is better)."""
    stats = vr.predict_with_uq(model, dataset.points, n_latent, rng)
    mse = float(np.mean((stats["mean"] - dataset.observations) ** 2))
    res_term = 0.0
    if problem.residual is not None:
        pts = pb.sample_interior(problem.domain, 200, rng)
        tape = ad.Tape()
        latent = np.zeros((1, model.latent_dim))
        probe = vr.SolutionProbe(model, tape, pts, latent)
        f = problem.forcing(pts) if (problem.observes_forcing
                                     and problem.forcing is not None) else None
        res = problem.residual(probe, pts, probe.phys_params(), f)
        res_term = float(np.mean(np.abs(res.value)))
    return mse + res_term


def grid_search(problem, dataset, model_factory, base_config, weight_grid,
                short_budget, seed=0, score_fn=None):
    """Rank loss-weight candidates by a short training run each.

    Returns a list of (weights, score) sorted best first; deterministic
    given the seed.
    """
    if not weight_grid:
        raise ValueError("weight grid is empty")
    if short_budget < 1:
        raise ValueError("short_budget must be >= 1")
    score_fn = score_fn or default_score
    results = []
    for i, weights in enumerate(weight_grid):
        model = model_factory(seed)
        config = replace(base_config, epochs=short_budget, weights=weights,
                         seed=seed)
        model, _ = train(model, problem, dataset, config)
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        results.append((weights, score_fn(model, problem, dataset, rng)))
    results.sort(key=lambda t: t[1])
    return results
