"""Variational machinery: prior sampling, KL, loss assembly, prediction.

The training objective is the weighted practical loss (interior residual,
boundary, initial, data, and log-variance penalty). The full negative-ELBO
objective with a closed-form Gaussian KL is available for the affine
parameter-readout variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from . import network as net
from .autodiff import Jet2, Parameter, Tape

LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class LatentPrior:
    """Standard normal prior over the latent input of the trunk."""

    dim: int = 1

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("latent dimension must be >= 1")

    def sample(self, n, rng):
        return sample_prior(self.dim, n, rng)


def sample_prior(dim, n, rng):
    if n < 1:
        raise ValueError("need at least one prior sample")
    return rng.standard_normal((n, dim))


@dataclass
class LossWeights:
    w_interior: float = 1.0
    w_ic: float = 0.0
    w_bc: float = 1.0
    w_data: float = 1.0
    w_std: float = 1.0

    def __post_init__(self):
        vals = (self.w_interior, self.w_ic, self.w_bc, self.w_data, self.w_std)
        if any(v < 0 for v in vals):
            raise ValueError("loss weights must be nonnegative")
        if all(v == 0 for v in vals):
            raise ValueError("at least one loss weight must be positive")


@dataclass
class VariationalConfig:
    sigma_r: float = 1.0                 # fixed residual std; None -> learned
    kl_mode: str = "std-penalty"         # or "closed-form-affine"
    latent_samples_per_step: int = 1
    learned_sigma_r: Parameter = None    # log sigma_R^2 scalar when learned
    affine_mu: Parameter = None          # per-parameter posterior means
    affine_log_sigma: Parameter = None   # per-parameter posterior log-stds

    def __post_init__(self):
        if self.sigma_r is not None and self.sigma_r <= 0:
            raise ValueError("fixed sigma_r must be positive")
        if self.latent_samples_per_step < 1:
            raise ValueError("latent_samples_per_step must be >= 1")
        if self.kl_mode not in ("std-penalty", "closed-form-affine"):
            raise ValueError(f"unknown kl_mode {self.kl_mode!r}")

    def enable_learned_sigma_r(self, init=1.0):
        self.sigma_r = None
        self.learned_sigma_r = Parameter("sigma_r.log_var", math.log(init ** 2))
        return self.learned_sigma_r

    def enable_affine_head(self, n_params):
        self.kl_mode = "closed-form-affine"
        self.affine_mu = Parameter("affine.mu", np.zeros(n_params))
        self.affine_log_sigma = Parameter("affine.log_sigma", np.zeros(n_params))
        return [self.affine_mu, self.affine_log_sigma]

    def extra_parameters(self):
        out = []
        if self.learned_sigma_r is not None:
            out.append(self.learned_sigma_r)
        if self.affine_mu is not None:
            out.extend([self.affine_mu, self.affine_log_sigma])
        return out


@dataclass
class LossBreakdown:
    interior: object = 0.0
    ic: object = 0.0
    bc: object = 0.0
    data: object = 0.0
    std: object = 0.0
    total: object = 0.0

    def values(self):
        def _f(x):
            return float(x.value) if isinstance(x, ad.Node) else float(x)

        return LossBreakdown(*(map(_f, (self.interior, self.ic, self.bc,
                                        self.data, self.std, self.total))))


def kl_normal(mu_q, sigma_q):
    """Closed-form KL of N(mu_q, sigma_q^2) against the standard normal."""
    if isinstance(sigma_q, ad.Node) or isinstance(mu_q, ad.Node):
        return -ad.g_log(sigma_q) + (ad.g_square(sigma_q) + ad.g_square(mu_q)) / 2.0 - 0.5
    if sigma_q <= 0:
        raise ValueError("sigma_q must be positive")
    return -math.log(sigma_q) + (sigma_q ** 2 + mu_q ** 2) / 2.0 - 0.5


@dataclass
class Batch:
    """Point groups for one loss evaluation; empty groups allowed."""

    interior: np.ndarray = None           # (n, d) collocation points
    interior_forcing: np.ndarray = None   # f at collocation points, if any
    boundary: tuple = None                # (points, targets)
    initial: tuple = None                 # (points, targets)
    data: tuple = None                    # (points, targets)

    def is_empty(self):
        return (self.interior is None and self.boundary is None
                and self.initial is None and self.data is None)


class SolutionProbe:
    """Lazy access to the predicted solution and its input derivatives.

    Jets along a coordinate axis are built on demand and cached, so a
    residual can mix value, first, and second derivatives cheaply. With
    `antisym_axis` set, the probe represents the odd part of the network
    output along that axis (used to select odd eigenmodes).
    """

    def __init__(self, model, tape, coords, latent, antisym_axis=None):
        self.model = model
        self.tape = tape
        self.coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
        self.latent = np.atleast_2d(np.asarray(latent, dtype=np.float64))
        self.antisym_axis = antisym_axis
        self._latent_node = tape.constant(self.latent)
        self._jets = {}
        self._plain = None

    def _forward(self, x):
        out = net.deeponet_forward(self.model, self.tape, x, self._latent_node)
        if self.antisym_axis is None:
            return out
        flipped = _flip_axis(x, self.antisym_axis)
        out2 = net.deeponet_forward(self.model, self.tape, flipped,
                                    self._latent_node)
        mean = (out.mean - out2.mean) * 0.5
        return net.ForwardOut(mean=mean, log_var_y=out.log_var_y,
                              phys_params=out.phys_params)

    def _plain_out(self):
        if self._plain is None:
            x = self.tape.constant(self.coords)
            self._plain = self._forward(x)
        return self._plain

    def _jet_out(self, axis):
        hit = self._jets.get(axis)
        if hit is not None:
            return hit
        n, d = self.coords.shape
        jets = []
        for i in range(d):
            v = self.tape.constant(self.coords[:, i])
            dv = self.tape.constant(np.full(n, 1.0 if i == axis else 0.0))
            zz = self.tape.constant(np.zeros(n))
            jets.append(Jet2(v, dv, zz))
        out = self._forward(ad.jet_colstack(jets))
        self._jets[axis] = out
        return out

    def value(self):
        return self._plain_out().mean

    def d(self, axis):
        return self._jet_out(axis).mean.d

    def dd(self, axis):
        return self._jet_out(axis).mean.dd

    def laplacian(self):
        out = None
        for axis in range(self.coords.shape[1]):
            t = self.dd(axis)
            out = t if out is None else out + t
        return out

    def phys_params(self):
        return self._plain_out().phys_params


def _flip_axis(x, axis):
    if isinstance(x, Jet2):
        return Jet2(_flip_axis(x.v, axis), _flip_axis(x.d, axis),
                    _flip_axis(x.dd, axis))
    sign = np.ones(x.value.shape[-1])
    sign[axis] = -1.0
    return x * sign


def _phys_param_nodes(model, tape, latent, config):
    """Transported posterior parameter samples for one latent draw."""
    if config is not None and config.kl_mode == "closed-form-affine":
        mu = tape.watch(config.affine_mu)
        ls = tape.watch(config.affine_log_sigma)
        out = []
        for j in range(model.n_phys_params):
            m = ad.narrow(mu, 0, j, 1)
            s = ad.exp(ad.narrow(ls, 0, j, 1))
            out.append(m + s * float(latent[0, j]))
        return out
    return None  # read from the trunk inside the probe


def _sigma_r_sq(tape, config):
    if config is None or config.sigma_r is not None:
        s = 1.0 if config is None else config.sigma_r
        return s * s, math.log(s * s)
    lv = tape.watch(config.learned_sigma_r)
    return ad.exp(lv), lv


def _group_mse(model, tape, points, targets, latent_node, probe_kwargs,
               collect_logvar):
    x = tape.constant(np.atleast_2d(np.asarray(points, dtype=np.float64)))
    out = net.deeponet_forward(model, tape, x, latent_node)
    mean = out.mean
    if probe_kwargs.get("antisym_axis") is not None:
        flipped = _flip_axis(x, probe_kwargs["antisym_axis"])
        out2 = net.deeponet_forward(model, tape, flipped, latent_node)
        mean = (mean - out2.mean) * 0.5
    err = mean - np.asarray(targets, dtype=np.float64)
    if model.n_var_channels and out.log_var_y is not None:
        var = ad.exp(net.bounded_log_var(out.log_var_y))
        loss = ad.mean(ad.square(err) / var)
        collect_logvar.append(out.log_var_y)  # penalty acts on the raw channel
    else:
        loss = ad.mean(ad.square(err))
    return loss


def practical_loss(model, problem, batch, weights, config, latent, tape=None,
                   antisym_axis=None):
    """Weighted component loss (Eqs of the practical objective) as nodes."""
    if batch.is_empty():
        raise ValueError("loss batch has no point groups")
    tape = tape or Tape()
    latent = np.atleast_2d(np.asarray(latent, dtype=np.float64))
    latent_node = tape.constant(latent)
    logvars = []
    probe_kwargs = {"antisym_axis": antisym_axis}

    zero = tape.constant(0.0)
    interior = ic = bc = data = std = zero

    if batch.interior is not None and len(batch.interior):
        probe = SolutionProbe(model, tape, batch.interior, latent,
                              antisym_axis=antisym_axis)
        params = _phys_param_nodes(model, tape, latent, config)
        if params is None:
            params = probe.phys_params()
        res = problem.residual(probe, batch.interior, params,
                               batch.interior_forcing)
        sig2, _ = _sigma_r_sq(tape, config)
        interior = ad.mean(ad.square(res)) / sig2
        if getattr(problem, "extra_normalization", False):
            # eigenproblem guard against the trivial solution, reported in
            # the ic slot (the problem has no initial condition)
            ic = ic + ad.square(ad.mean(ad.square(probe.value())) - 1.0)

    if batch.boundary is not None and len(batch.boundary[0]):
        bc = _group_mse(model, tape, batch.boundary[0], batch.boundary[1],
                        latent_node, probe_kwargs, logvars)
    if batch.initial is not None and len(batch.initial[0]):
        ic = ic + _group_mse(model, tape, batch.initial[0], batch.initial[1],
                             latent_node, probe_kwargs, logvars)
    if batch.data is not None and len(batch.data[0]):
        data = _group_mse(model, tape, batch.data[0], batch.data[1],
                          latent_node, probe_kwargs, logvars)

    if logvars:
        acc = None
        count = 0
        for lv in logvars:
            s = ad.total(ad.absolute(lv))
            acc = s if acc is None else acc + s
            count += lv.value.size
        std = acc / float(count)

    total = (weights.w_interior * interior + weights.w_ic * ic
             + weights.w_bc * bc + weights.w_data * data
             + weights.w_std * std)
    return LossBreakdown(interior=interior, ic=ic, bc=bc, data=data,
                         std=std, total=total)


def _affine_kl(tape, config):
    mu = tape.watch(config.affine_mu)
    ls = tape.watch(config.affine_log_sigma)
    return ad.total(-ls + (ad.square(ad.exp(ls)) + ad.square(mu)) * 0.5 - 0.5)


def elbo_loss(model, problem, batch, config, n_latent=1, rng=None, tape=None,
              antisym_axis=None):
    """Negative evidence lower bound (quantity to minimize)."""
    if n_latent < 1:
        raise ValueError("n_latent must be >= 1")
    if batch.is_empty():
        raise ValueError("loss batch has no point groups")
    rng = rng or np.random.default_rng(0)
    tape = tape or Tape()
    prior = LatentPrior(model.latent_dim)
    acc = None
    for _ in range(n_latent):
        latent = prior.sample(1, rng)
        term = _elbo_one_sample(model, problem, batch, config, latent, tape,
                                antisym_axis)
        acc = term if acc is None else acc + term
    loss = acc / float(n_latent)
    if config is not None and config.kl_mode == "closed-form-affine":
        loss = loss + _affine_kl(tape, config)
    return loss


def _elbo_one_sample(model, problem, batch, config, latent, tape, antisym_axis):
    latent_node = tape.constant(latent)
    acc = tape.constant(0.0)
    if batch.data is not None and len(batch.data[0]):
        pts, targets = batch.data
        x = tape.constant(np.atleast_2d(np.asarray(pts, dtype=np.float64)))
        out = net.deeponet_forward(model, tape, x, latent_node)
        err2 = ad.square(out.mean - np.asarray(targets, dtype=np.float64))
        if model.n_var_channels and out.log_var_y is not None:
            lv = out.log_var_y
            nll = (err2 / (ad.exp(net.bounded_log_var(lv)) * 2.0)
                   + (lv + LOG_2PI) * 0.5)
        else:
            nll = err2 * 0.5 + 0.5 * LOG_2PI
        acc = acc + ad.total(nll)
    if batch.interior is not None and len(batch.interior):
        probe = SolutionProbe(model, tape, batch.interior, latent,
                              antisym_axis=antisym_axis)
        params = _phys_param_nodes(model, tape, latent, config)
        if params is None:
            params = probe.phys_params()
        res = problem.residual(probe, batch.interior, params,
                               batch.interior_forcing)
        sig2, logsig2 = _sigma_r_sq(tape, config)
        nll = ad.square(res) / (2.0 * sig2) + 0.5 * (logsig2 + LOG_2PI)
        acc = acc + ad.total(nll)
    return acc


def predict_with_uq(model, points, n_latent, rng, chunk=4096):
    """Posterior-predictive statistics with an epistemic/aleatoric split."""
    if n_latent < 2:
        raise ValueError("predict_with_uq needs n_latent >= 2")
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    n = points.shape[0]
    s1 = np.zeros(n)
    s2 = np.zeros(n)
    alea = np.zeros(n)
    done = 0
    while done < n_latent:
        m = min(chunk, n_latent - done)
        latents = rng.standard_normal((m, model.latent_dim))
        means, log_vars, _ = net.deeponet_forward_np(model, points, latents)
        s1 += means.sum(axis=1)
        s2 += (means * means).sum(axis=1)
        if log_vars is not None:
            alea += np.exp(log_vars).sum(axis=1)
        done += m
    mean = s1 / n_latent
    epistemic = np.maximum(s2 / n_latent - mean * mean, 0.0)
    aleatoric = alea / n_latent
    total_var = epistemic + aleatoric
    half = 1.96 * np.sqrt(total_var)
    return {
        "mean": mean,
        "epistemic_var": epistemic,
        "aleatoric_var": aleatoric,
        "total_var": total_var,
        "ci95_lo": mean - half,
        "ci95_hi": mean + half,
    }


def posterior_param_samples(model, n, rng, config=None):
    """Push prior draws through the parameter readout; (n, P) samples."""
    if model.n_phys_params < 1:
        raise ValueError("model has no physical parameters")
    draws = rng.standard_normal((n, model.latent_dim))
    if config is not None and config.kl_mode == "closed-form-affine":
        mu = config.affine_mu.value
        sig = np.exp(config.affine_log_sigma.value)
        return mu[None, :] + sig[None, :] * draws[:, : model.n_phys_params]
    _, _, phys = net.deeponet_forward_np(
        model, np.zeros((1, model.branch.in_dim)), draws)
    return phys
