"""
A reaction rate from noisy 2-d field measurements
=================================================

A nonlinear reaction-diffusion equation on the square: known small
diffusivity, unknown reaction-rate coefficient k multiplying u^2, and
100 noisy sensors observing both the state and the forcing. The model
fits the data first (a warmup phase with the residual switched off),
then turns the physics back on to pin down k.

The desk profile (smaller network, fewer epochs) takes a couple of
minutes; the paper profile reproduces the full-size configuration:

    deep-bayo run rd2d --profile paper --out runs/rd2d-paper
"""

import deepbayo.experiments as ex

OUT = "demo-out/rd2d"

spec = ex.make_spec("rd2d", profile="desk")
metrics = ex.run_experiment(spec, OUT, seed=0)

print("reaction rate k (true value 1.0):")
print("  posterior mean", round(metrics["posterior_mean_k"], 4))
print("  posterior std ", round(metrics["posterior_std_k"], 5))
print("field mean abs error", round(metrics["field_abs_err_mean"], 4))

# `deep-bayo report --runs demo-out/rd2d` places this next to published
# reference methods for the same benchmark.
