#!/usr/bin/env python3
"""Three institutions explain one pipeline without sharing their models.

A bank's meta-model consumes two consumer scores (fraud, credit) plus the
bank's own features.  Each score is produced by another company's private
model over columns only that company holds.  The bank back-propagates
attributions onto the scores, sends each company only that scalar (plus
sample ids), and gets back per-feature attributions that sum to it.  The
merged result equals the centralized chain over the stitched pipeline.
"""

import json

import numpy as np

from chainattr import (
    ActivationStage,
    BaselineSet,
    LinearStage,
    ParallelBlockStage,
    Pipeline,
    chain_with_distribution,
)
from chainattr.distributed import (
    AttributionNode,
    LoopbackTransport,
    NodeDescriptor,
    coordinate,
)
from chainattr.io import Dataset

rng = np.random.default_rng(5)

# one shared universe of customers, columns partitioned by owner
ids = tuple(f"cust{i}" for i in range(12))
fraud_cols = rng.normal(size=(12, 3))  # fraudco's private columns
credit_cols = rng.normal(size=(12, 4))  # creditco's private columns
bank_cols = rng.normal(size=(12, 2))  # the bank's own columns

fraud_model = Pipeline(
    [
        LinearStage(rng.normal(size=(3, 3)), rng.normal(size=3)),
        ActivationStage("relu", 3),
        LinearStage(rng.normal(size=(1, 3))),
    ]
)
credit_model = Pipeline(
    [
        LinearStage(rng.normal(size=(2, 4)), rng.normal(size=2)),
        ActivationStage("tanh", 2),
        LinearStage(rng.normal(size=(1, 2))),
    ]
)
bank_model = Pipeline(  # inputs: fraud_score, credit_score, bank0, bank1
    [
        LinearStage(rng.normal(size=(2, 4)), rng.normal(size=2)),
        ActivationStage("tanh", 2),
        LinearStage(rng.normal(size=(1, 2))),
    ]
)

# the bank bought the score VALUES for its customers, not the models
bank_view = Dataset(
    ids=ids,
    feature_names=("fraud_score", "credit_score", "bank0", "bank1"),
    X=np.column_stack(
        [
            fraud_model.forward(fraud_cols)[:, 0],
            credit_model.forward(credit_cols)[:, 0],
            bank_cols,
        ]
    ),
)

# the parties agree on a baseline set, pinned by a content-hash id
agreed = BaselineSet.from_samples(
    bank_view.X[:6], sample_ids=ids[:6], provenance={"kind": "agreement"}
)

nodes = {
    "fraudco": AttributionNode(
        "fraudco",
        fraud_model,
        Dataset(ids, ("fraud_0", "fraud_1", "fraud_2"), fraud_cols),
        agreed.id,
        "fraud_score",
    ),
    "creditco": AttributionNode(
        "creditco",
        credit_model,
        Dataset(ids, ("credit_0", "credit_1", "credit_2", "credit_3"), credit_cols),
        agreed.id,
        "credit_score",
    ),
}
registry = [
    NodeDescriptor("fraudco", ("fraud_score",), ("fraud_0", "fraud_1", "fraud_2"), "loopback:fraudco"),
    NodeDescriptor("creditco", ("credit_score",), ("credit_0", "credit_1", "credit_2", "credit_3"), "loopback:creditco"),
]

capture = []
result = coordinate(
    bank_model,
    bank_view,
    registry,
    ["cust9"],
    agreed,
    LoopbackTransport(nodes, capture=capture),
)
report = result.reports[0]

print(f"explicand {report.explicand_id}: raw-space attributions")
for name, v in zip(result.raw_feature_names, report.phi):
    print(f"  {name:>12}: {v:+.5f}")
print(f"  intermediate score attributions: {report.flags['score_attributions']}")

# only for this check do we stitch everything together in one place
stitched = Pipeline(
    [
        ParallelBlockStage(
            [(fraud_model, [0, 1, 2], [0]), (credit_model, [3, 4, 5, 6], [1])],
            passthrough=[(7, 2), (8, 3)],
            input_width=9,
        )
    ]
    + list(bank_model.stages)
)
raw = np.column_stack([fraud_cols, credit_cols, bank_cols])
central = chain_with_distribution(
    stitched, raw[9], BaselineSet.from_samples(raw[:6], sample_ids=ids[:6])
)
print(f"\nmax |distributed - centralized| = {np.abs(report.phi - central.phi).max():.2e}")

print(f"\nwire traffic ({len(capture)} frames); first exchange:")
for endpoint, direction, line in capture[:2]:
    print(f"  {direction} {endpoint}: {line}")
keys = set()
for _, _, line in capture:
    stack = [json.loads(line)]
    while stack:
        d = stack.pop()
        if isinstance(d, dict):
            keys |= set(d)
            stack.extend(d.values())
print(f"\nevery field that ever crossed the wire: {sorted(keys)}")
print("no weights, no trees, no thresholds, no foreign feature values.")
