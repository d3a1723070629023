"""End-to-end acceptance gate.

Each test prints one summary line of the form

    [criterion N] PASS|FAIL: short description

and asserts the stated tolerance. The heavier criteria train full
experiments, so this module takes tens of minutes end to end.
"""

import copy
import math
import time

import numpy as np
import pytest
import scipy.special

import deepbayo.cli as cli
import deepbayo.experiments as ex
import deepbayo.problems as pb
import deepbayo.variational as vr

PI = math.pi


def _verdict(n, ok, desc):
    print(f"\n[criterion {n}] {'PASS' if ok else 'FAIL'}: {desc}")
    assert ok, f"criterion {n} failed: {desc}"


class _Probe:
    def __init__(self, value, d=None, dd=None):
        self._value, self._d, self._dd = value, d or {}, dd or {}

    def value(self):
        return self._value

    def d(self, axis):
        return self._d[axis]

    def dd(self, axis):
        return self._dd[axis]


# ---------------------------------------------------------------------------
# criterion 1: derivative machinery
# ---------------------------------------------------------------------------

def test_criterion_1_derivative_checks():
    t0 = time.perf_counter()
    rows = cli.gradcheck_suite([2, 8, 8, 1], seed=0)
    elapsed = time.perf_counter() - t0
    all_pass = all(passed for *_, passed in rows)
    ok = all_pass and elapsed < 60.0
    detail = ", ".join(f"{name} {err:.2e}<{tol:.0e}"
                       for name, err, tol, _ in rows)
    _verdict(1, ok, f"first/second/nested derivative checks ({detail}) "
             f"in {elapsed:.1f}s < 60s")


# ---------------------------------------------------------------------------
# criterion 2: residuals vanish on the exact solutions
# ---------------------------------------------------------------------------

def test_criterion_2_zero_residual_oracles():
    worst = {}
    rng = np.random.default_rng(0)

    problem = pb.make_heat1d()
    pts = np.column_stack([rng.uniform(0, 1, 100), rng.uniform(-1, 1, 100)])
    t, x = pts[:, 0], pts[:, 1]
    u = np.exp(-t) * np.sin(PI * x)
    probe = _Probe(u, d={0: -u, 1: PI * np.exp(-t) * np.cos(PI * x)},
                   dd={0: u, 1: -PI * PI * u})
    worst["heat1d"] = np.max(np.abs(problem.residual(probe, pts,
                                                     [1.0, 1.0], None)))

    problem = pb.make_rd2d()
    pts = rng.uniform(-1, 1, (100, 2))
    u = problem.exact(pts)
    probe = _Probe(u, dd={0: -PI * PI * u, 1: -PI * PI * u})
    worst["rd2d"] = np.max(np.abs(problem.residual(probe, pts, [1.0], None)))

    problem = pb.make_helmholtz3d()
    direction = rng.standard_normal((100, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    r = rng.uniform(0.1 ** 3, 0.95 ** 3, 100) ** (1.0 / 3.0)
    pts = direction * r[:, None]
    k = pb.K_DIPOLE
    c = pts[:, 2]
    rr = np.linalg.norm(pts, axis=1)
    j1 = scipy.special.spherical_jn(1, k * rr)
    j1p = scipy.special.spherical_jn(1, k * rr, derivative=True)
    j1pp = -2.0 * j1p / (k * rr) - (1.0 - 2.0 / (k * rr) ** 2) * j1
    F = pb._DIPOLE_C * j1 / rr
    Fp = pb._DIPOLE_C * (k * j1p / rr - j1 / rr ** 2)
    Fpp = pb._DIPOLE_C * (k * k * j1pp / rr - 2 * k * j1p / rr ** 2
                          + 2 * j1 / rr ** 3)
    dd = {}
    for axis in (0, 1):
        xi = pts[:, axis]
        dd[axis] = c * (Fpp * xi ** 2 / rr ** 2
                        + Fp * (1.0 / rr - xi ** 2 / rr ** 3))
    dd[2] = Fpp * c ** 3 / rr ** 2 + Fp * (3 * c / rr - c ** 3 / rr ** 3)
    probe = _Probe(F * c, dd=dd)
    worst["helmholtz3d"] = np.max(np.abs(
        problem.residual(probe, pts, [k * k], None)))

    ok = all(v < 1e-10 for v in worst.values())
    detail = ", ".join(f"{name} {v:.1e}" for name, v in worst.items())
    _verdict(2, ok, f"exact solutions annihilate residuals at 100 random "
             f"points each ({detail}; tol 1e-10)")


# ---------------------------------------------------------------------------
# criterion 3: closed-form divergence term
# ---------------------------------------------------------------------------

def test_criterion_3_kl_identity():
    rng = np.random.default_rng(0)
    z = rng.standard_normal(2_000_000)
    worst = 0.0
    for mu in (-2.0, -0.5, 0.0, 1.0, 2.0):
        for sigma in (0.3, 1.0, 2.0):
            x = mu + sigma * z
            mc = float(np.mean(-0.5 * ((x - mu) / sigma) ** 2
                               - math.log(sigma) + 0.5 * x ** 2))
            worst = max(worst, abs(vr.kl_normal(mu, sigma) - mc))
    exact_zero = vr.kl_normal(0.0, 1.0) == 0.0
    ok = worst < 0.01 and exact_zero
    _verdict(3, ok, f"closed-form KL matches Monte Carlo on a (mu, sigma) "
             f"grid (max dev {worst:.4f} < 0.01) and is exactly 0 at (0, 1)")


# ---------------------------------------------------------------------------
# criteria 4-8: full experiments
# ---------------------------------------------------------------------------

def test_criterion_4_heat1d(tmp_path):
    spec = ex.make_spec("heat1d")
    m = ex.run_experiment(spec, str(tmp_path), seed=0)
    d_mode = m["posterior_mode_D"]
    a_mode = m["posterior_mode_alpha"]
    err_mean = m["field_abs_err_mean"]
    err_max = m["field_abs_err_max"]
    ok = (abs(d_mode - 1.0) < 0.15 and abs(a_mode - 1.0) < 0.15
          and err_mean < 0.05 and err_max < 0.15)
    _verdict(4, ok, f"heat1d recovers D mode {d_mode:.3f} and alpha mode "
             f"{a_mode:.3f} (true 1 +- 0.15) with field error mean "
             f"{err_mean:.4f} < 0.05, max {err_max:.4f} < 0.15")


def test_criterion_5_rd2d(tmp_path):
    spec = ex.make_spec("rd2d", profile="desk")
    m = ex.run_experiment(spec, str(tmp_path), seed=0)
    k_mean = m["posterior_mean_k"]
    ok = 0.95 <= k_mean <= 1.05
    _verdict(5, ok, f"rd2d posterior mean reaction rate {k_mean:.4f} "
             f"in [0.95, 1.05] (true 1)")


def test_criterion_6_helmholtz3d(tmp_path):
    target = pb.K_DIPOLE ** 2
    hits = 0
    details = []
    for seed in range(5):
        spec = ex.make_spec("helmholtz3d")
        m = ex.run_experiment(spec, str(tmp_path / f"s{seed}"), seed=seed)
        lam = m["posterior_mode_lambda_eig"]
        hit = (abs(lam - target) / target < 0.05
               and m["boundary_rms"] < 0.05
               and abs(m["mean_square_norm"] - 1.0) < 0.1)
        hits += hit
        details.append(f"seed {seed}: {lam:.2f}{'*' if hit else ''}")
    ok = hits >= 3
    _verdict(6, ok, f"helmholtz3d locks onto the dipole eigenvalue "
             f"{target:.2f} within 5% (with boundary rms < 0.05 and unit "
             f"normalization within 0.1) on {hits}/5 seeds >= 3 "
             f"({'; '.join(details)})")


def test_criterion_7_regression_uq(tmp_path):
    keys = ("deepbayo_mse_total", "deepbayo_total", "deepbayo_idd",
            "deepbayo_ood", "snn_total", "bnn_total", "mcdo_total",
            "denn_total")
    sums = dict.fromkeys(keys, 0.0)
    for seed in range(10):
        spec = ex.make_spec("regression-uq")
        m = ex.run_experiment(spec, str(tmp_path / f"s{seed}"), seed=seed)
        for k in keys:
            sums[k] += m[k]
    avg = {k: v / 10.0 for k, v in sums.items()}
    ordering = all(avg["deepbayo_total"] > avg[f"{b}_total"]
                   for b in ("snn", "bnn", "mcdo", "denn"))
    ok = (avg["deepbayo_mse_total"] <= 0.20
          and avg["deepbayo_total"] >= 75.0
          and avg["deepbayo_ood"] >= 85.0
          and ordering)
    _verdict(7, ok, f"regression over 10 seeds: mse "
             f"{avg['deepbayo_mse_total']:.3f} <= 0.20, coverage total "
             f"{avg['deepbayo_total']:.1f} >= 75, ood "
             f"{avg['deepbayo_ood']:.1f} >= 85, and coverage strictly above "
             f"all baselines (snn {avg['snn_total']:.1f}, bnn "
             f"{avg['bnn_total']:.1f}, mcdo {avg['mcdo_total']:.1f}, denn "
             f"{avg['denn_total']:.1f})")


def test_criterion_8_sin3(tmp_path):
    spec_lo = ex.make_spec("sin3")
    m_lo = ex.run_experiment(spec_lo, str(tmp_path / "lo"), seed=0)
    spec_hi = ex.make_spec("sin3")
    spec_hi.noise = 0.05
    m_hi = ex.run_experiment(spec_hi, str(tmp_path / "hi"), seed=0)
    mode = m_lo["posterior_mode_omega"]
    s_lo = m_lo["posterior_std_omega"]
    s_hi = m_hi["posterior_std_omega"]
    ok = abs(mode - 6.0) < 0.3 and s_lo < s_hi
    _verdict(8, ok, f"sin3 posterior mode {mode:.3f} within 6 +- 0.3 at "
             f"noise 0.01, and posterior width grows with noise "
             f"({s_lo:.4f} at 0.01 < {s_hi:.4f} at 0.05)")


# ---------------------------------------------------------------------------
# criterion 9: determinism
# ---------------------------------------------------------------------------

def test_criterion_9_determinism(tmp_path):
    def quick():
        spec = ex.make_spec("sin3")
        spec.train.epochs = 5
        spec.train.n_collocation = 16
        spec.n_sensors = 20
        spec.posterior_draws = 200
        spec.field_resolution = 16
        spec.calibration.epochs = 5
        return spec

    ex.run_experiment(quick(), str(tmp_path / "a"), seed=3)
    ex.run_experiment(quick(), str(tmp_path / "b"), seed=3)
    same = []
    for name in ("metrics.json", "posterior.csv", "history.csv",
                 "model.json", "field.csv"):
        with open(tmp_path / "a" / name, "rb") as fh:
            b1 = fh.read()
        with open(tmp_path / "b" / name, "rb") as fh:
            b2 = fh.read()
        same.append(b1 == b2)
    ok = all(same)
    _verdict(9, ok, "two runs of the same experiment and seed produce "
             "byte-identical metrics, posterior, history, model, and "
             "field artifacts")
