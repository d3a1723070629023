"""Benchmark problem definitions, samplers, and synthetic datasets.

Each problem bundles its domain, residual functional, boundary/initial
targets, exact-solution oracle, and (where relevant) forcing oracle. The
residual functions are written against a probe object exposing value(),
d(axis), dd(axis) so they run identically on network predictions and on
analytically supplied derivatives.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

PI = math.pi

# first positive roots of the spherical Bessel functions j0 and j1
K_RADIAL = PI
K_DIPOLE = 4.493409457909064


@dataclass
class Domain:
    kind: str                    # {interval, rectangle, unit-ball}
    bounds: list = field(default_factory=list)  # spatial (lo, hi) pairs
    time_span: tuple = None      # (t0, tf) or None

    def __post_init__(self):
        if self.kind not in ("interval", "rectangle", "unit-ball"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        for lo, hi in self.bounds:
            if lo >= hi:
                raise ValueError("domain bounds must be ordered")

    @property
    def spatial_dim(self):
        return 3 if self.kind == "unit-ball" else len(self.bounds)

    @property
    def coord_dim(self):
        return self.spatial_dim + (1 if self.time_span is not None else 0)


@dataclass
class ParamSpec:
    name: str
    link: str = "identity"
    true_value: float = 1.0


@dataclass
class ProblemDef:
    name: str
    domain: Domain
    param_specs: list = field(default_factory=list)
    residual: object = None          # (probe, coords, params, forcing) -> node
    boundary_value: object = None    # points -> targets
    initial_value: object = None     # spatial points -> targets
    exact: object = None             # points -> values
    forcing: object = None           # points -> values
    noise_model: object = None       # points -> per-point noise std
    observes_forcing: bool = False
    extra_normalization: bool = False
    train_range: tuple = None        # regression IDD input range
    ood_ranges: list = None          # regression OOD input ranges

    @property
    def coord_dim(self):
        return self.domain.coord_dim

    @property
    def n_params(self):
        return len(self.param_specs)


@dataclass
class Dataset:
    points: np.ndarray               # (n, d)
    observations: np.ndarray         # (n,) observed u
    forcing_obs: np.ndarray = None   # (n,) observed f, if applicable
    noise_sigma: float = 0.0

    def __len__(self):
        return len(self.points)


@dataclass
class SensorLayout:
    n_interior: int = 100
    n_boundary_per_edge: int = 25
    n_initial: int = 50
    seed: int = 0

    def __post_init__(self):
        if min(self.n_interior, self.n_boundary_per_edge, self.n_initial) < 0:
            raise ValueError("sensor counts must be nonnegative")


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

def spherical_bessel(order, x):
    """j0 or j1, series-stabilized near zero."""
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("argument must be nonnegative")
    small = np.abs(x) < 1e-3
    xs = np.where(small, 1.0, x)  # avoid 0/0 in the main branch
    if order == 0:
        main = np.sin(xs) / xs
        series = 1.0 - x * x / 6.0
    else:
        main = np.sin(xs) / (xs * xs) - np.cos(xs) / xs
        series = x / 3.0 - x ** 3 / 30.0
    out = np.where(small, series, main)
    return out if out.ndim else float(out)


# ---------------------------------------------------------------------------
# problem constructors
# ---------------------------------------------------------------------------

def make_regression_uq():
    """Heteroscedastic 1-d regression: f(x) = sin(x/2), var = (1-|x|)/16."""
    domain = Domain("interval", [(-1.0, 1.0)])

    def exact(points):
        x = np.asarray(points)[:, 0]
        return np.sin(x / 2.0)

    def noise_model(points):
        x = np.asarray(points)[:, 0]
        return np.sqrt(np.maximum(1.0 - np.abs(x), 0.0) / 16.0)

    return ProblemDef(
        name="regression-uq", domain=domain, exact=exact,
        noise_model=noise_model, train_range=(-1.0, 1.0),
        ood_ranges=[(-1.5, -1.0), (1.0, 1.5)])


def make_sin3():
    """y(x) = sin^3(omega x) with unknown omega (true value 6)."""
    domain = Domain("interval", [(-1.0, 1.0)])

    def exact(points):
        x = np.asarray(points)[:, 0]
        return np.sin(6.0 * x) ** 3

    def residual(probe, coords, params, forcing):
        x = np.asarray(coords)[:, 0]
        omega = params[0]
        return probe.value() - ad.g_sin(omega * x) ** 3

    return ProblemDef(
        name="sin3", domain=domain,
        param_specs=[ParamSpec("omega", "identity", 6.0)],
        residual=residual, exact=exact)


def make_heat1d():
    """Unsteady heat equation with unknown diffusivity D and decay alpha."""
    domain = Domain("interval", [(-1.0, 1.0)], time_span=(0.0, 1.0))

    def exact(points):
        pts = np.asarray(points)
        return np.exp(-pts[:, 0]) * np.sin(PI * pts[:, 1])

    def residual(probe, coords, params, forcing):
        pts = np.asarray(coords)
        t, x = pts[:, 0], pts[:, 1]
        diff, alpha = params
        rhs_shape = np.sin(PI * x) - PI * PI * np.sin(PI * x)
        # y_t - D y_xx + e^{-alpha t} (sin(pi x) - pi^2 sin(pi x))
        return probe.d(0) - diff * probe.dd(1) + ad.g_exp(-(alpha * t)) * rhs_shape

    def boundary_value(points):
        return np.zeros(len(points))

    def initial_value(points):
        return np.sin(PI * np.asarray(points)[:, -1])

    return ProblemDef(
        name="heat1d", domain=domain,
        param_specs=[ParamSpec("D", "identity", 1.0),
                     ParamSpec("alpha", "identity", 1.0)],
        residual=residual, boundary_value=boundary_value,
        initial_value=initial_value, exact=exact)


def make_rd2d():
    """2-d reaction-diffusion with fixed diffusivity and unknown rate k.

    The forcing is taken consistent with the exact solution
    u = sin(pi x) sin(pi y): f = -(pi^2/50) u + u^2, which makes the
    residual of the exact solution vanish identically for k = 1.
    """
    domain = Domain("rectangle", [(-1.0, 1.0), (-1.0, 1.0)])
    lam = 0.01

    def exact(points):
        pts = np.asarray(points)
        return np.sin(PI * pts[:, 0]) * np.sin(PI * pts[:, 1])

    def forcing(points):
        u = exact(points)
        return -(PI * PI / 50.0) * u + u * u

    def residual(probe, coords, params, forcing_vals):
        k = params[0]
        f = forcing_vals if forcing_vals is not None else forcing(coords)
        return (lam * (probe.dd(0) + probe.dd(1))
                + k * ad.g_square(probe.value()) - f)

    def boundary_value(points):
        return np.zeros(len(points))

    return ProblemDef(
        name="rd2d", domain=domain,
        param_specs=[ParamSpec("k", "identity", 1.0)],
        residual=residual, boundary_value=boundary_value, exact=exact,
        forcing=forcing, observes_forcing=True)


def _dipole_norm_constant():
    # ball mean of [C j1(kr) cos(theta)]^2: the solid-angle factor
    # int cos^2 dOmega = 4pi/3 cancels the ball volume, leaving
    # C^2 int_0^1 j1(kr)^2 r^2 dr = 1
    r = np.linspace(0.0, 1.0, 20001)
    integrand = spherical_bessel(1, K_DIPOLE * r) ** 2 * r * r
    integral = np.trapezoid(integrand, r)
    return 1.0 / math.sqrt(integral)


_DIPOLE_C = _dipole_norm_constant()


def make_helmholtz3d():
    """Dirichlet Laplacian eigenproblem on the unit ball."""
    domain = Domain("unit-ball")

    def exact(points):
        pts = np.asarray(points)
        r = np.sqrt(np.sum(pts * pts, axis=1))
        rs = np.where(r < 1e-12, 1.0, r)
        ang = np.where(r < 1e-12, 0.0, pts[:, 2] / rs)
        return _DIPOLE_C * spherical_bessel(1, K_DIPOLE * r) * ang

    def radial_mode(points):
        pts = np.asarray(points)
        r = np.sqrt(np.sum(pts * pts, axis=1))
        return spherical_bessel(0, PI * r)

    def residual(probe, coords, params, forcing):
        lam = params[0]
        u = probe.value()
        return -(probe.dd(0) + probe.dd(1) + probe.dd(2)) - lam * u

    def boundary_value(points):
        return np.zeros(len(points))

    prob = ProblemDef(
        name="helmholtz3d", domain=domain,
        param_specs=[ParamSpec("lambda_eig", "identity", K_DIPOLE ** 2)],
        residual=residual, boundary_value=boundary_value, exact=exact,
        extra_normalization=True)
    prob.radial_mode = radial_mode
    prob.eigenvalues = (K_RADIAL ** 2, K_DIPOLE ** 2)
    return prob


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

def sample_interior(domain, n, rng):
    if n < 1:
        raise ValueError("need at least one interior point")
    if domain.kind == "unit-ball":
        direction = rng.standard_normal((n, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = rng.uniform(0.0, 1.0, n) ** (1.0 / 3.0)
        return direction * radius[:, None]
    cols = []
    if domain.time_span is not None:
        cols.append(rng.uniform(*domain.time_span, n))
    for lo, hi in domain.bounds:
        cols.append(rng.uniform(lo, hi, n))
    return np.column_stack(cols)


def sample_boundary(domain, n, rng):
    """Boundary samples: n per edge/endpoint, uniform on the sphere."""
    if n < 1:
        raise ValueError("need at least one boundary point")
    if domain.kind == "unit-ball":
        pts = rng.standard_normal((n, 3))
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)
    if domain.kind == "interval":
        lo, hi = domain.bounds[0]
        x = np.concatenate([np.full(n, lo), np.full(n, hi)])
        if domain.time_span is None:
            return x[:, None]
        t = rng.uniform(*domain.time_span, 2 * n)
        return np.column_stack([t, x])
    # rectangle: n uniform points along each of the four edges
    (x0, x1), (y0, y1) = domain.bounds
    xs = rng.uniform(x0, x1, n)
    ys = rng.uniform(y0, y1, n)
    edges = [
        np.column_stack([xs, np.full(n, y0)]),
        np.column_stack([xs, np.full(n, y1)]),
        np.column_stack([np.full(n, x0), ys]),
        np.column_stack([np.full(n, x1), ys]),
    ]
    out = np.vstack(edges)
    if domain.time_span is not None:
        t = rng.uniform(*domain.time_span, len(out))
        out = np.column_stack([t, out])
    return out


def sample_initial(domain, n, rng):
    if domain.time_span is None:
        raise ValueError("domain has no time span")
    if n < 1:
        raise ValueError("need at least one initial point")
    cols = [np.full(n, domain.time_span[0])]
    for lo, hi in domain.bounds:
        cols.append(rng.uniform(lo, hi, n))
    return np.column_stack(cols)


def synthesize_dataset(problem, layout, noise_sigma, rng):
    """Noisy observations of the exact solution at random sensors."""
    if problem.exact is None:
        raise ValueError(f"problem {problem.name} has no exact oracle")
    pts = sample_interior(problem.domain, layout.n_interior, rng)
    clean = problem.exact(pts)
    if noise_sigma is None and problem.noise_model is not None:
        sigma = problem.noise_model(pts)
        obs = clean + sigma * rng.standard_normal(len(pts))
        eff_sigma = float(np.mean(sigma))
    else:
        noise_sigma = 0.0 if noise_sigma is None else noise_sigma
        obs = clean + noise_sigma * rng.standard_normal(len(pts))
        eff_sigma = noise_sigma
    f_obs = None
    if problem.observes_forcing and problem.forcing is not None:
        f_obs = problem.forcing(pts) + (noise_sigma or 0.0) * \
            rng.standard_normal(len(pts))
    return Dataset(points=pts, observations=obs, forcing_obs=f_obs,
                   noise_sigma=eff_sigma)


# ---------------------------------------------------------------------------
# dataset CSV round trip
# ---------------------------------------------------------------------------

def export_dataset_csv(dataset, path, coord_names=None):
    d = dataset.points.shape[1]
    names = coord_names or [f"x{i}" for i in range(d)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + ["u", "f"])
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.points[i]]
            row.append(repr(float(dataset.observations[i])))
            row.append("" if dataset.forcing_obs is None
                       else repr(float(dataset.forcing_obs[i])))
            writer.writerow(row)


def import_dataset_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 2
        pts, obs, f_obs = [], [], []
        has_f = False
        for row in reader:
            pts.append([float(v) for v in row[:d]])
            obs.append(float(row[d]))
            if row[d + 1] != "":
                has_f = True
                f_obs.append(float(row[d + 1]))
    return Dataset(points=np.asarray(pts), observations=np.asarray(obs),
                   forcing_obs=np.asarray(f_obs) if has_f else None)


PROBLEMS = {
    "regression-uq": make_regression_uq,
    "sin3": make_sin3,
    "heat1d": make_heat1d,
    "rd2d": make_rd2d,
    "helmholtz3d": make_helmholtz3d,
}
