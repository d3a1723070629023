"""Comparison models for the regression benchmark.

Four reference approaches with a shared predict-with-uncertainty
interface: a plain heteroscedastic network (snn), Monte Carlo dropout
(mcdo), a deep ensemble (denn), and a mean-field Bayesian network (bnn).
Widths are chosen so every kind lands in the same trainable-parameter
budget (roughly 3,600 to 4,400).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import network as net
from .autodiff import Node, Parameter, Tape
from .training import AdamState, _rng_streams

LOG_2PI = math.log(2.0 * math.pi)

BASELINE_KINDS = ("snn", "bnn", "mcdo", "denn")

# hidden widths per kind, tuned to the shared parameter budget
DEFAULT_WIDTHS = {
    "snn": [60, 60],     # 3,902 parameters
    "mcdo": [60, 60],    # 3,902 parameters
    "denn": [25, 25],    # 752 per member, 3,760 across five
    "bnn": [42, 42],     # 1,976 means + 1,976 log-stds = 3,952
}


@dataclass
class BaselineConfig:
    epochs: int = 150
    batch_size: int = 16
    lr: float = 0.01
    seed: int = 0
    hidden: list = None            # None -> DEFAULT_WIDTHS[kind]
    retention_p: float = 0.9       # mcdo
    n_members: int = 5             # denn
    kl_scale: float = None         # bnn; None -> 1/n_data
    mc_samples: int = 200

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0.0 < self.retention_p <= 1.0:
            raise ValueError("retention probability must be in (0, 1]")
        if self.n_members < 1:
            raise ValueError("need at least one ensemble member")


@dataclass
class SnnModel:
    mlp: net.Mlp

    def parameters(self):
        return self.mlp.parameters()


@dataclass
class McdoModel:
    mlp: net.Mlp
    retention_p: float = 0.9
    mc_samples: int = 200

    def parameters(self):
        return self.mlp.parameters()


@dataclass
class DennModel:
    members: list  # SnnModel instances

    def parameters(self):
        out = []
        for m in self.members:
            out.extend(m.parameters())
        return out


@dataclass
class BnnLayer:
    mu_w: Parameter        # (in, out)
    rho_w: Parameter       # log-std, same shape
    mu_b: Parameter        # (out,)
    rho_b: Parameter


@dataclass
class BnnModel:
    layers: list
    mc_samples: int = 200

    def parameters(self):
        out = []
        for l in self.layers:
            out.extend([l.mu_w, l.rho_w, l.mu_b, l.rho_b])
        return out


def dropout_mask(width, p, rng):
    """Bernoulli(p) retention mask over a hidden layer."""
    if not 0.0 < p <= 1.0:
        raise ValueError("retention probability must be in (0, 1]")
    return (rng.random(width) < p).astype(np.float64)


def param_count(model):
    return sum(p.size for p in model.parameters())


# ---------------------------------------------------------------------------
# forward passes
# ---------------------------------------------------------------------------

def _mlp_forward_masked(mlp, tape, x, masks):
    """Graph forward with retention masks applied to hidden activations."""
    for layer, mask in zip(mlp.layers[:-1], masks):
        x = ad.g_tanh(layer.forward(tape, x)) * mask
    return mlp.layers[-1].forward(tape, x)


def _mlp_forward_masked_np(mlp, x, masks):
    for layer, mask in zip(mlp.layers[:-1], masks):
        x = np.tanh(x @ layer.weights.value.T + layer.biases.value) * mask
    last = mlp.layers[-1]
    return x @ last.weights.value.T + last.biases.value


def _bnn_sample_weights(model, rng):
    draws = []
    for l in model.layers:
        eps_w = rng.standard_normal(l.mu_w.value.shape)
        eps_b = rng.standard_normal(l.mu_b.value.shape)
        draws.append((eps_w, eps_b))
    return draws


def _bnn_forward(model, tape, x, draws):
    for l, (eps_w, eps_b) in zip(model.layers[:-1], draws[:-1]):
        w = tape.watch(l.mu_w) + ad.exp(tape.watch(l.rho_w)) * eps_w
        b = tape.watch(l.mu_b) + ad.exp(tape.watch(l.rho_b)) * eps_b
        x = ad.g_tanh(ad.matmul(x, w) + b)
    l, (eps_w, eps_b) = model.layers[-1], draws[-1]
    w = tape.watch(l.mu_w) + ad.exp(tape.watch(l.rho_w)) * eps_w
    b = tape.watch(l.mu_b) + ad.exp(tape.watch(l.rho_b)) * eps_b
    return ad.matmul(x, w) + b


def _bnn_forward_np(model, x, draws):
    for l, (eps_w, eps_b) in zip(model.layers[:-1], draws[:-1]):
        w = l.mu_w.value + np.exp(l.rho_w.value) * eps_w
        b = l.mu_b.value + np.exp(l.rho_b.value) * eps_b
        x = np.tanh(x @ w + b)
    l, (eps_w, eps_b) = model.layers[-1], draws[-1]
    w = l.mu_w.value + np.exp(l.rho_w.value) * eps_w
    b = l.mu_b.value + np.exp(l.rho_b.value) * eps_b
    return x @ w + b


def mcdo_forward_np(model, x, rng=None):
    """One stochastic (or, with rng None, deterministic p-scaled) pass."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if rng is None:
        masks = [np.full(l.out_width, model.retention_p)
                 for l in model.mlp.layers[:-1]]
    else:
        masks = [dropout_mask(l.out_width, model.retention_p, rng)
                 for l in model.mlp.layers[:-1]]
    return _mlp_forward_masked_np(model.mlp, x, masks)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _gaussian_nll(out, targets):
    mean = ad.narrow(out, 1, 0, 1)
    lv = ad.narrow(out, 1, 1, 1)
    err2 = ad.square(mean - targets.reshape(-1, 1))
    return ad.mean(err2 / ad.exp(lv) + lv) * 0.5


def _bnn_kl(model, tape):
    acc = None
    for l in model.layers:
        for mu, rho in ((l.mu_w, l.rho_w), (l.mu_b, l.rho_b)):
            m = tape.watch(mu)
            ls = tape.watch(rho)
            term = ad.total(-ls + (ad.square(ad.exp(ls)) + ad.square(m)) * 0.5
                            - 0.5)
            acc = term if acc is None else acc + term
    return acc


def _init_bnn(widths, rng):
    layers = []
    for i in range(len(widths) - 1):
        fan_in, fan_out = widths[i], widths[i + 1]
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        mu_w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(BnnLayer(
            Parameter(f"bnn.{i}.mu_w", mu_w),
            Parameter(f"bnn.{i}.rho_w", np.full((fan_in, fan_out), -5.0)),
            Parameter(f"bnn.{i}.mu_b", np.zeros(fan_out)),
            Parameter(f"bnn.{i}.rho_b", np.full(fan_out, -5.0))))
    return BnnModel(layers=layers)


def _train_nll_mlp(mlp, x, y, config, rngs, masks_p=None):
    params = mlp.parameters()
    adam = AdamState(params, config.lr)
    n = len(x)
    for _ in range(config.epochs):
        order = rngs["data"].permutation(n)
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            tape = Tape()
            xb = tape.constant(x[idx])
            if masks_p is None:
                out = mlp.forward(tape, xb)
            else:
                masks = [dropout_mask(l.out_width, masks_p, rngs["dropout"])
                         for l in mlp.layers[:-1]]
                out = _mlp_forward_masked(mlp, tape, xb, masks)
            loss = _gaussian_nll(out, y[idx])
            adam.step(ad.backward(loss))
    return mlp


def train_baseline(kind, dataset, config=None):
    """Train one comparison model on (points, observations)."""
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}")
    config = config or BaselineConfig()
    widths = config.hidden or DEFAULT_WIDTHS[kind]
    arch = [dataset.points.shape[1]] + list(widths) + [2]
    rngs = _rng_streams(config.seed)
    rngs["dropout"] = np.random.default_rng(
        np.random.SeedSequence([config.seed, 4]))
    x = np.asarray(dataset.points, dtype=np.float64)
    y = np.asarray(dataset.observations, dtype=np.float64)

    if kind == "snn":
        mlp = net.init_mlp(arch, name="snn", rng=rngs["init"])
        return SnnModel(_train_nll_mlp(mlp, x, y, config, rngs))

    if kind == "mcdo":
        mlp = net.init_mlp(arch, name="mcdo", rng=rngs["init"])
        _train_nll_mlp(mlp, x, y, config, rngs, masks_p=config.retention_p)
        return McdoModel(mlp, retention_p=config.retention_p,
                         mc_samples=config.mc_samples)

    if kind == "denn":
        members = []
        for m in range(config.n_members):
            sub = _rng_streams(np.random.SeedSequence(
                [config.seed, 100 + m]).generate_state(1)[0])
            mlp = net.init_mlp(arch, name=f"denn.{m}", rng=sub["init"])
            members.append(SnnModel(_train_nll_mlp(mlp, x, y, config, sub)))
        return DennModel(members)

    model = _init_bnn(arch, rngs["init"])
    model.mc_samples = config.mc_samples
    kl_scale = config.kl_scale if config.kl_scale is not None else 1.0 / len(x)
    adam = AdamState(model.parameters(), config.lr)
    n = len(x)
    for _ in range(config.epochs):
        order = rngs["data"].permutation(n)
        for i in range(0, n, config.batch_size):
            idx = order[i:i + config.batch_size]
            tape = Tape()
            xb = tape.constant(x[idx])
            draws = _bnn_sample_weights(model, rngs["latent"])
            out = _bnn_forward(model, tape, xb, draws)
            loss = _gaussian_nll(out, y[idx]) + kl_scale * _bnn_kl(model, tape)
            adam.step(ad.backward(loss))
    return model


# ---------------------------------------------------------------------------
# prediction
# ---------------------------------------------------------------------------

def _finish(mean, epistemic, aleatoric):
    total = epistemic + aleatoric
    half = 1.96 * np.sqrt(total)
    return {
        "mean": mean,
        "epistemic_var": epistemic,
        "aleatoric_var": aleatoric,
        "total_var": total,
        "ci95_lo": mean - half,
        "ci95_hi": mean + half,
    }


def predict_baseline(model, x, n_samples=200, rng=None):
    """Mean plus epistemic/aleatoric variance split at the query points."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    rng = rng or np.random.default_rng(0)

    if isinstance(model, SnnModel):
        out = model.mlp.forward_np(x)
        return _finish(out[:, 0], np.zeros(len(x)), np.exp(out[:, 1]))

    if isinstance(model, DennModel):
        outs = np.stack([m.mlp.forward_np(x) for m in model.members])
        means = outs[:, :, 0]
        return _finish(means.mean(axis=0), means.var(axis=0),
                       np.exp(outs[:, :, 1]).mean(axis=0))

    if n_samples < 2:
        raise ValueError("stochastic baselines need n_samples >= 2")

    if isinstance(model, McdoModel):
        outs = np.stack([mcdo_forward_np(model, x, rng)
                         for _ in range(n_samples)])
    elif isinstance(model, BnnModel):
        outs = np.stack([
            _bnn_forward_np(model, x, _bnn_sample_weights(model, rng))
            for _ in range(n_samples)])
    else:
        raise TypeError(f"unknown baseline model {type(model).__name__}")
    means = outs[:, :, 0]
    return _finish(means.mean(axis=0), means.var(axis=0),
                   np.exp(outs[:, :, 1]).mean(axis=0))
