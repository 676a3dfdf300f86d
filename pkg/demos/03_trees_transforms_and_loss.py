#!/usr/bin/env python3
"""Tree ensembles in the chain, and explaining transformed outputs.

A small boosted-tree scorer emits log-odds.  The same pipeline explains the
log-odds, the probability (append a sigmoid), or the per-sample loss (append
sigmoid + binary cross entropy, with the label riding along as metadata,
never as a feature).
"""

import numpy as np

from chainattr import (
    Pipeline,
    TransformStage,
    TreeEnsembleStage,
    chain_with_distribution,
)
from helpers_demo import boosted_stumps

rng = np.random.default_rng(3)

# 6 boosted stumps over 4 features, plus a base margin
scorer = TreeEnsembleStage(*boosted_stumps(rng, m=4, rounds=6), input_width=4)
logodds = Pipeline([scorer])
probability = Pipeline([scorer, TransformStage("sigmoid")])
loss = Pipeline([scorer, TransformStage("sigmoid"), TransformStage("bce_loss")])

explicand = rng.normal(size=4)
baselines = rng.normal(size=(50, 4))
names = [f"f{i}" for i in range(4)]

for tag, model, label in (
    ("log-odds", logodds, None),
    ("probability", probability, None),
    ("loss (y=1)", loss, 1.0),
):
    rep = chain_with_distribution(
        model, explicand, baselines, label=label, feature_names=names
    )
    cells = "  ".join(f"{n}={v:+.4f}" for n, v in zip(names, rep.phi))
    print(f"{tag:>12}: {cells}   (sum {rep.phi.sum():+.4f})")

print(
    "\neach row sums to that output's prediction-minus-expected-value; the "
    "orderings can differ, which is exactly why the output scale is worth "
    "choosing deliberately."
)
