"""Privacy accounting walkthrough.

Shows how the epsilon of the slicing mechanism behaves as the noise level,
the number of slices, and the subsampling rate change, and how to go the
other way: pick a budget first and calibrate sigma to meet it.
"""

import numpy as np

from dpslice import (
    MechanismDims,
    amplify,
    calibrate_sigma,
    deterministic_epsilon,
    optimize_alpha,
)

delta = 1e-5
dims = MechanismDims(d=100, k=1, m=10)

print("== epsilon as a function of sigma ==")
for sigma in (0.5, 1.0, 2.0, 4.0):
    alpha, eps = optimize_alpha(sigma, dims, delta)
    print(f"sigma={sigma:4.1f}  epsilon={eps:9.4f}  (optimal order alpha={alpha:.3f})")

print()
print("== epsilon as a function of the number of slices ==")
for m in (1, 10, 50, 200):
    _, eps = optimize_alpha(1.0, MechanismDims(d=100, k=1, m=m), delta)
    print(f"m={m:4d}  epsilon={eps:9.4f}")

print()
print("== random projections vs a deterministic projection ==")
alpha, eps = optimize_alpha(1.0, dims, delta)
det = deterministic_epsilon(1.0, dims.m, alpha, delta)
print(f"random U:        epsilon = {eps:.4f}")
print(f"deterministic U: epsilon = {det:.4f}  (same sigma, same alpha)")
print("randomizing the projection is what makes the budget affordable")

print()
print("== subsampling amplification ==")
eps_amp, delta_amp = amplify(eps, delta, rate=0.25)
print(f"keep each row w.p. 0.25: epsilon {eps:.4f} -> {eps_amp:.4f}, "
      f"delta {delta:g} -> {delta_amp:g}")

print()
print("== calibrating sigma to a target budget ==")
for target in (1.0, 5.0, 20.0):
    sigma = calibrate_sigma(target, delta, dims)
    _, achieved = optimize_alpha(sigma, dims, delta)
    print(f"target epsilon={target:5.1f}  ->  sigma={sigma:.4f}  "
          f"(achieved {achieved:.6f})")
