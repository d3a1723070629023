"""Dense MLPs and the branch/trunk operator model.

The operator model predicts the forward solution from coordinates through
the branch network, while the trunk network transports standard-normal
latent draws into a modulation vector (element-wise product with the
branch features) plus the physical-parameter samples. An optional extra
output channel carries the log observation variance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Jet2, Node, Parameter, Tape

MODEL_FORMAT_VERSION = 1

# smooth bound applied where the log-variance channel is exponentiated;
# keeps exp(log_var) finite while the raw channel (and its penalty
# gradient) stays unbounded
LOG_VAR_BOUND = 10.0


def bounded_log_var(lv):
    if isinstance(lv, np.ndarray) or np.isscalar(lv):
        return np.tanh(lv / LOG_VAR_BOUND) * LOG_VAR_BOUND
    return ad.g_tanh(lv / LOG_VAR_BOUND) * LOG_VAR_BOUND

_LINKS = {
    "identity": lambda x: x,
    "exp": ad.g_exp,
    "softplus": lambda x: ad.g_log(ad.g_exp(x) + 1.0),
}

_LINKS_NP = {
    "identity": lambda x: x,
    "exp": np.exp,
    "softplus": lambda x: np.log1p(np.exp(x)),
}


class ModelFormatError(ValueError):
    """Raised when a model file cannot be loaded."""


@dataclass
class DenseLayer:
    weights: Parameter  # (out_width, in_width)
    biases: Parameter   # (out_width,)

    @property
    def in_width(self):
        return self.weights.value.shape[1]

    @property
    def out_width(self):
        return self.weights.value.shape[0]

    def forward(self, tape, x):
        """Affine map for a Node or Jet2 of shape (n, in_width)."""
        w = tape.watch(self.weights)
        b = tape.watch(self.biases)
        if isinstance(x, Jet2):
            out = x.matmul(_transpose(w))
            return Jet2(out.v + b, out.d, out.dd)
        return ad.matmul(x, _transpose(w)) + b


def _transpose(w):
    # weights are stored (out, in); forward needs (in, out)
    def _vjp(adj):
        return [(w, adj.swapaxes(-1, -2))]

    if not w.requires_grad:
        return Node(w.tape, w.value.T, "transpose", (), None, False)
    return Node(w.tape, w.value.T, "transpose", (w,), _vjp, True)


@dataclass
class Mlp:
    layers: list
    final_act: str = "identity"  # {identity, tanh}

    @property
    def in_dim(self):
        return self.layers[0].in_width

    @property
    def out_dim(self):
        return self.layers[-1].out_width

    def parameters(self):
        out = []
        for layer in self.layers:
            out.append(layer.weights)
            out.append(layer.biases)
        return out

    def forward(self, tape, x):
        shape = x.v.shape if isinstance(x, Jet2) else x.shape
        if shape[-1] != self.in_dim:
            raise ValueError(f"input dim {shape[-1]} != mlp input {self.in_dim}")
        for layer in self.layers[:-1]:
            x = ad.g_tanh(layer.forward(tape, x))
        x = self.layers[-1].forward(tape, x)
        if self.final_act == "tanh":
            x = ad.g_tanh(x)
        return x

    def forward_np(self, x):
        """Plain numpy forward for inference (no graph)."""
        for layer in self.layers[:-1]:
            x = np.tanh(x @ layer.weights.value.T + layer.biases.value)
        x = x @ self.layers[-1].weights.value.T + self.layers[-1].biases.value
        if self.final_act == "tanh":
            x = np.tanh(x)
        return x


def init_dense(out_width, in_width, rng, name):
    bound = math.sqrt(6.0 / (in_width + out_width))
    w = rng.uniform(-bound, bound, size=(out_width, in_width))
    return DenseLayer(Parameter(f"{name}.w", w),
                      Parameter(f"{name}.b", np.zeros(out_width)))


def init_mlp(widths, final_act="identity", seed=0, name="mlp", rng=None):
    """Xavier-uniform weights, zero biases, deterministic per seed."""
    if len(widths) < 2 or any(w < 1 for w in widths):
        raise ValueError(f"invalid widths {widths}")
    if final_act not in ("identity", "tanh"):
        raise ValueError(f"unknown final activation {final_act!r}")
    rng = rng if rng is not None else np.random.default_rng(seed)
    layers = [init_dense(widths[i + 1], widths[i], rng, f"{name}.{i}")
              for i in range(len(widths) - 1)]
    return Mlp(layers=layers, final_act=final_act)


def mlp_forward(mlp, tape, x):
    return mlp.forward(tape, x)


@dataclass
class ForwardOut:
    mean: object            # Node or Jet2, shape (n,)
    log_var_y: object       # Node (n,) or None
    phys_params: list       # P Nodes, each shape (m,)


@dataclass
class DeepONetModel:
    branch: Mlp
    trunk: Mlp
    output_layer: DenseLayer
    param_links: list = field(default_factory=list)  # link tag per parameter
    output_activation: str = "identity"              # {identity, tanh}
    n_var_channels: int = 0                          # V in {0, 1}
    latent_dim: int = 1

    def __post_init__(self):
        if self.trunk.out_dim != self.branch.out_dim + self.n_phys_params:
            raise ValueError("trunk width must equal branch width + P")
        if self.output_layer.out_width != 1 + self.n_var_channels:
            raise ValueError("output layer must have 1 + V channels")

    @property
    def hidden_width(self):
        return self.branch.out_dim

    @property
    def n_phys_params(self):
        return len(self.param_links)

    def parameters(self):
        out = self.branch.parameters() + self.trunk.parameters()
        out.append(self.output_layer.weights)
        out.append(self.output_layer.biases)
        return out


def make_deeponet(coord_dim, hidden, width_hidden=None, n_params=0,
                  param_links=None, latent_dim=None, n_var_channels=1,
                  output_activation="identity", seed=0):
    """Build a branch/trunk model from hidden widths.

    `hidden` is the list of hidden widths shared by branch and trunk; the
    last entry is the interaction width H.
    """
    if param_links is None:
        param_links = ["identity"] * n_params
    if latent_dim is None:
        latent_dim = max(len(param_links), 1)
    rng = np.random.default_rng(seed)
    h = hidden[-1]
    branch = init_mlp([coord_dim] + list(hidden), seed=None, name="branch", rng=rng)
    trunk = init_mlp([latent_dim] + list(hidden[:-1]) + [h + len(param_links)],
                     seed=None, name="trunk", rng=rng)
    out = init_dense(1 + n_var_channels, h, rng, "out")
    return DeepONetModel(branch=branch, trunk=trunk, output_layer=out,
                         param_links=list(param_links),
                         output_activation=output_activation,
                         n_var_channels=n_var_channels, latent_dim=latent_dim)


def deeponet_forward(model, tape, coords, latent):
    """Forward pass; `coords` is a Node/Jet2 (n, d), `latent` a Node (m, L).

    The latent batch m must be 1 (one draw modulating all points) or match
    the coordinate batch.
    """
    h = model.branch.forward(tape, coords)
    g = model.trunk.forward(tape, latent)
    hw = model.hidden_width
    modulation = ad.narrow(g, 1, 0, hw)
    combined = h * modulation
    out = model.output_layer.forward(tape, combined)
    mean = _col(out, 0)
    if model.output_activation == "tanh":
        mean = ad.g_tanh(mean)
    log_var = None
    if model.n_var_channels:
        log_var = _col(out.v if isinstance(out, Jet2) else out, 1)
    phys = []
    for j, link in enumerate(model.param_links):
        ch = ad.narrow(g, 1, hw + j, 1)
        phys.append(_LINKS[link](_squeeze_last(ch)))
    return ForwardOut(mean=mean, log_var_y=log_var, phys_params=phys)


def _col(x, j):
    if isinstance(x, Jet2):
        return Jet2(_col(x.v, j), _col(x.d, j), _col(x.dd, j))
    return _squeeze_last(ad.narrow(x, 1, j, 1))


def _squeeze_last(x):
    def _vjp(adj):
        return [(x, adj[..., None])]

    out = x.value[..., 0]
    if not x.requires_grad:
        return Node(x.tape, out, "squeeze", (), None, False)
    return Node(x.tape, out, "squeeze", (x,), _vjp, True)


def deeponet_forward_np(model, coords, latents):
    """Vectorized inference: means (n, m), log_vars (n, m) or None,
    phys (m, P). No graph is built."""
    coords = np.atleast_2d(np.asarray(coords, dtype=np.float64))
    latents = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    h = model.branch.forward_np(coords)              # (n, H)
    g = model.trunk.forward_np(latents)              # (m, H+P)
    hw = model.hidden_width
    mod = g[:, :hw]
    w0 = model.output_layer.weights.value            # (1+V, H)
    b0 = model.output_layer.biases.value
    out = np.einsum("nh,mh,ch->nmc", h, mod, w0) + b0
    means = out[:, :, 0]
    if model.output_activation == "tanh":
        means = np.tanh(means)
    log_vars = (bounded_log_var(out[:, :, 1])
                if model.n_var_channels else None)
    phys = np.column_stack([
        _LINKS_NP[link](g[:, hw + j])
        for j, link in enumerate(model.param_links)
    ]) if model.param_links else np.zeros((latents.shape[0], 0))
    return means, log_vars, phys


def param_count(model):
    if isinstance(model, Mlp):
        return sum(p.size for p in model.parameters())
    return sum(p.size for p in model.parameters())


# ---------------------------------------------------------------------------
# persistence: versioned JSON container, layer order, row-major
# ---------------------------------------------------------------------------

def _mlp_meta(mlp):
    widths = [mlp.layers[0].in_width] + [l.out_width for l in mlp.layers]
    return {"widths": widths, "final_act": mlp.final_act}


def save_model(model, path):
    blob = {
        "format_version": MODEL_FORMAT_VERSION,
        "arch": {
            "branch": _mlp_meta(model.branch),
            "trunk": _mlp_meta(model.trunk),
            "param_links": model.param_links,
            "output_activation": model.output_activation,
            "n_var_channels": model.n_var_channels,
            "latent_dim": model.latent_dim,
        },
        "params": {p.name: p.value.tolist() for p in model.parameters()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(blob, fh, sort_keys=True)


def load_model(path, expect_arch=None):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            blob = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelFormatError(f"cannot read model file {path}: {exc}") from exc
    if blob.get("format_version") != MODEL_FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported model format version {blob.get('format_version')!r}")
    arch = blob["arch"]
    if expect_arch is not None and expect_arch != arch:
        raise ModelFormatError("model architecture does not match expectation")
    bw = arch["branch"]["widths"]
    model = make_deeponet(
        coord_dim=bw[0], hidden=bw[1:],
        param_links=arch["param_links"],
        latent_dim=arch["latent_dim"],
        n_var_channels=arch["n_var_channels"],
        output_activation=arch["output_activation"], seed=0)
    model.branch.final_act = arch["branch"]["final_act"]
    model.trunk.final_act = arch["trunk"]["final_act"]
    for p in model.parameters():
        if p.name not in blob["params"]:
            raise ModelFormatError(f"missing parameter {p.name!r} in {path}")
        value = np.asarray(blob["params"][p.name], dtype=np.float64)
        if value.shape != p.value.shape:
            raise ModelFormatError(
                f"parameter {p.name!r} has shape {value.shape}, "
                f"expected {p.value.shape}")
        p.value = value
    return model
