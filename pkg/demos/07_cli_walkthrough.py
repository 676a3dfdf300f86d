#!/usr/bin/env python3
"""Drive the command-line interface end to end in a scratch directory.

Writes a pipeline document and a CSV, then runs: eval, explain (json + csv),
oracle, groups, ablate, and baselines, printing each artifact.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from chainattr import ActivationStage, LinearStage, Pipeline
from chainattr.cli import main
from chainattr.io import Dataset, dump_pipeline, write_dataset, write_text

work = Path(tempfile.mkdtemp(prefix="chainattr-demo-"))
print(f"working in {work}\n")

rng = np.random.default_rng(11)
model = Pipeline(
    [
        LinearStage(rng.normal(size=(3, 4)), rng.normal(size=3)),
        ActivationStage("relu", 3),
        LinearStage(rng.normal(size=(1, 3))),
    ]
)
dump_pipeline(model, work / "model.json")

data = Dataset(
    ids=tuple(f"s{i}" for i in range(30)),
    feature_names=("alpha", "beta", "gamma", "delta"),
    X=rng.normal(size=(30, 4)),
)
write_dataset(work / "data.csv", data)
write_text(
    work / "groups.json",
    json.dumps({"groups": {"greek_ab": ["alpha", "beta"], "tail": ["gamma", "delta"]}}),
)


def run(*argv):
    print(f"$ chainattr {' '.join(argv)}")
    rc = main(list(argv))
    assert rc == 0, rc


common = ["--pipeline", str(work / "model.json"), "--data", str(work / "data.csv")]

run("eval", *common, "--explicands", "s0", "--output", str(work / "trace.json"))
print((work / "trace.json").read_text())

run(
    "explain", *common, "--explicands", "s0,s1", "--uniform", "10", "--seed", "4",
    "--output", str(work / "report.json"),
)
print((work / "report.json").read_text()[:400], "...\n")

run(
    "explain", *common, "--explicands", "s0,s1", "--uniform", "10", "--seed", "4",
    "--format", "csv", "--output", str(work / "report.csv"),
)
print((work / "report.csv").read_text())

run(
    "oracle", *common, "--explicands", "s0", "--uniform", "10", "--seed", "4",
    "--output", str(work / "oracle.json"),
)

run(
    "groups", "--report", str(work / "report.json"), "--groups", str(work / "groups.json"),
    "--output", str(work / "grouped.json"),
)
print((work / "grouped.json").read_text())

run(
    "ablate", *common, "--explicands", "s0,s1,s2", "--uniform", "10", "--seed", "4",
    "--sign", "pos", "--kmax", "4", "--format", "csv",
    "--output", str(work / "curve.csv"),
)
print((work / "curve.csv").read_text())

run(
    "baselines", "--data", str(work / "data.csv"), "--kmeans", "3",
    "--reduced-features", "alpha,beta", "--seed", "0",
    "--output", str(work / "clusters.json"),
)
print("clusters.json:", (work / "clusters.json").read_text()[:200], "...")
