#!/usr/bin/env python3
"""Explain a small model chain and check the attribution bookkeeping.

We compose a linear layer with a relu, attribute one prediction against a
couple of baselines, and compare against the exponential-cost exact Shapley
oracle.  For this explicand the chain propagation and the oracle agree; the
divergence demo (see 05) shows where they legitimately differ.
"""

import numpy as np

from chainattr import (
    ActivationStage,
    LinearStage,
    Pipeline,
    chain_single_baseline,
    chain_with_distribution,
    interventional_shapley,
)

# f(x) = relu(x1 + x2): about the smallest non-linear chain there is
model = Pipeline([LinearStage([[1.0, 1.0]]), ActivationStage("relu", 1)])

explicand = np.array([2.0, 1.0])
baselines = np.array([[0.0, 0.0], [1.0, -1.0]])

# one baseline first: the full per-stage trace
trace = chain_single_baseline(model, explicand, baselines[0])
print("per-stage attributions (psi), final stage first:")
for i, psi in enumerate(reversed(trace.psi)):
    print(f"  stage {len(trace.psi) - i}: {psi}  (sums to {psi.sum():+.6f})")
print(f"prediction delta f(x_e) - f(x_b) = {trace.final_delta:+.6f}")

# every psi sums to the same delta: that is the layer-wise efficiency
# guarantee the whole engine is built around

report = chain_with_distribution(
    model, explicand, baselines, feature_names=["x1", "x2"]
)
print("\naveraged over the baseline set:")
print(f"  phi            = {report.phi}")
print(f"  expected value = {report.expected_value:+.6f}")
print(f"  f(explicand)   = {report.f_explicand:+.6f}")
print(f"  sum(phi)       = {report.phi.sum():+.6f}  (= prediction - expected)")

oracle = interventional_shapley(model, explicand, baselines)
print(f"\nbrute-force oracle = {oracle}")
print(f"max |chain - oracle| = {np.abs(report.phi - oracle).max():.2e}")
