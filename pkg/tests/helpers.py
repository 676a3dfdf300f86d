"""Random model generators and independent oracles shared by the test modules."""

from __future__ import annotations

import itertools

import numpy as np

from chainattr import (
    ActivationStage,
    LinearStage,
    ParallelBlockStage,
    Pipeline,
    TransformStage,
    Tree,
    TreeEnsembleStage,
)


def make_tree(node_docs, root=0):
    """Build a Tree from [{'feature','threshold','left','right'} | {'value'}]."""
    n = len(node_docs)
    feature = np.full(n, -1, dtype=np.intp)
    threshold = np.zeros(n)
    left = np.full(n, -1, dtype=np.intp)
    right = np.full(n, -1, dtype=np.intp)
    value = np.zeros(n)
    for i, d in enumerate(node_docs):
        if "value" in d:
            value[i] = d["value"]
        else:
            feature[i] = d["feature"]
            threshold[i] = d["threshold"]
            left[i] = d["left"]
            right[i] = d["right"]
    return Tree(feature, threshold, left, right, value, root=root)


# the spec's worked tree: x0<=0.5 -> 0, else (x1<=0.5 -> 1, else 3)
EXAMPLE_TREE = make_tree(
    [
        {"feature": 0, "threshold": 0.5, "left": 1, "right": 2},
        {"value": 0.0},
        {"feature": 1, "threshold": 0.5, "left": 3, "right": 4},
        {"value": 1.0},
        {"value": 3.0},
    ]
)


def random_tree(rng, m, max_depth=4, leaf_p=0.3):
    nodes = []

    def build(depth):
        idx = len(nodes)
        if depth >= max_depth or rng.random() < leaf_p:
            nodes.append({"value": float(rng.normal())})
        else:
            nodes.append(None)
            lo = build(depth + 1)
            hi = build(depth + 1)
            nodes[idx] = {
                "feature": int(rng.integers(m)),
                "threshold": float(rng.normal()),
                "left": lo,
                "right": hi,
            }
        return idx

    build(0)
    return make_tree(nodes)


def random_tree_ensemble(rng, m, n_trees=None, max_depth=4):
    n_trees = n_trees or int(rng.integers(1, 4))
    trees = [random_tree(rng, m, max_depth) for _ in range(n_trees)]
    return TreeEnsembleStage(
        trees,
        tree_weights=rng.uniform(0.2, 1.5, size=n_trees),
        base_score=float(rng.normal()),
        input_width=m,
    )


def random_linear_pipeline(rng, m, depth):
    stages = []
    width = m
    for _ in range(depth - 1):
        out = int(rng.integers(1, 6))
        stages.append(LinearStage(rng.normal(size=(out, width)), rng.normal(size=out)))
        width = out
    stages.append(LinearStage(rng.normal(size=(1, width)), rng.normal(size=1)))
    return Pipeline(stages)


def random_mixed_pipeline(rng, m, k_max=6, allow_bce=False):
    """Linear + relu/sigmoid/tanh + tree ensembles + transforms, scalar output."""
    stages = []
    width = m
    for _ in range(int(rng.integers(1, max(2, k_max)))):
        # a leading bare activation has no width anchor in the file format
        choices = ["linear"] if not stages else ["linear", "activation"]
        if width <= 10:
            choices.append("tree")
        if width == 1:
            choices.append("transform")
        kind = choices[int(rng.integers(len(choices)))]
        if kind == "linear":
            out = int(rng.integers(1, 6))
            stages.append(
                LinearStage(rng.normal(size=(out, width)), rng.normal(size=out))
            )
            width = out
        elif kind == "activation":
            fn = ("relu", "sigmoid", "tanh")[int(rng.integers(3))]
            stages.append(ActivationStage(fn, width))
        elif kind == "tree":
            stages.append(random_tree_ensemble(rng, width))
            width = 1
        else:
            stages.append(TransformStage("sigmoid"))
            r = rng.random()
            if r < 0.3:
                stages.append(TransformStage("logit"))
            elif r < 0.6 and allow_bce:
                stages.append(TransformStage("bce_loss"))
    if width != 1:
        stages.append(LinearStage(rng.normal(size=(1, width)), rng.normal(size=1)))
    return Pipeline(stages)


def random_stacked_setup(rng, n_samples=10):
    """Two base models on disjoint feature slices + passthrough + meta model.

    Returns (stitched_pipeline, meta_pipeline, base_pipelines, slices,
    raw_data) where slices is [fraud_idx, credit_idx, passthrough_idx].
    """
    n_f = int(rng.integers(2, 4))
    n_c = int(rng.integers(2, 5))
    n_b = int(rng.integers(1, 4))
    m = n_f + n_c + n_b
    f_idx = list(range(0, n_f))
    c_idx = list(range(n_f, n_f + n_c))
    b_idx = list(range(n_f + n_c, m))

    fraud = Pipeline(
        [
            LinearStage(rng.normal(size=(3, n_f)), rng.normal(size=3)),
            ActivationStage("relu", 3),
            LinearStage(rng.normal(size=(1, 3)), rng.normal(size=1)),
        ]
    )
    credit = random_mixed_pipeline(rng, n_c, k_max=3)
    meta_width = 2 + n_b
    meta = Pipeline(
        [
            LinearStage(rng.normal(size=(2, meta_width)), rng.normal(size=2)),
            ActivationStage("tanh", 2),
            LinearStage(rng.normal(size=(1, 2)), rng.normal(size=1)),
        ]
    )
    block = ParallelBlockStage(
        [(fraud, f_idx, [0]), (credit, c_idx, [1])],
        passthrough=[(i, 2 + j) for j, i in enumerate(b_idx)],
        input_width=m,
    )
    stitched = Pipeline([block] + list(meta.stages))
    raw = rng.normal(size=(n_samples, m))
    return stitched, meta, (fraud, credit), (f_idx, c_idx, b_idx), raw


def build_parties(seed, n_samples=9):
    """Three-party fixture: two private base models, a coordinator meta model,
    the equivalent stitched pipeline, and an agreed baseline set."""
    from chainattr import BaselineSet
    from chainattr.distributed import AttributionNode, NodeDescriptor
    from chainattr.io import Dataset

    rng = np.random.default_rng(seed)
    stitched, meta, (fraud, credit), (f_idx, c_idx, b_idx), raw = random_stacked_setup(
        rng, n_samples
    )
    ids = tuple(f"s{i}" for i in range(n_samples))
    f_names = tuple(f"fraud_f{i}" for i in range(len(f_idx)))
    c_names = tuple(f"credit_f{i}" for i in range(len(c_idx)))
    b_names = tuple(f"bank_f{i}" for i in range(len(b_idx)))

    fraud_data = Dataset(ids=ids, feature_names=f_names, X=raw[:, f_idx])
    credit_data = Dataset(ids=ids, feature_names=c_names, X=raw[:, c_idx])
    meta_X = np.column_stack(
        [
            fraud.forward(raw[:, f_idx])[:, 0],
            credit.forward(raw[:, c_idx])[:, 0],
            raw[:, b_idx],
        ]
    )
    meta_data = Dataset(
        ids=ids,
        feature_names=("fraud_score", "credit_score") + b_names,
        X=meta_X,
    )
    baseline_ids = list(ids[: n_samples // 2])
    rows = np.stack([raw[ids.index(b)] for b in baseline_ids])
    agreed = BaselineSet.from_samples(rows, sample_ids=baseline_ids)

    nodes = {
        "fraudco": AttributionNode("fraudco", fraud, fraud_data, agreed.id, "fraud_score"),
        "creditco": AttributionNode("creditco", credit, credit_data, agreed.id, "credit_score"),
    }
    registry = [
        NodeDescriptor("fraudco", ("fraud_score",), f_names, "loopback:fraudco"),
        NodeDescriptor("creditco", ("credit_score",), c_names, "loopback:creditco"),
    ]
    explicands = list(ids[n_samples // 2 :])
    return {
        "stitched": stitched,
        "meta": meta,
        "meta_data": meta_data,
        "raw": raw,
        "ids": ids,
        "agreed": agreed,
        "nodes": nodes,
        "registry": registry,
        "explicands": explicands,
        "raw_names": f_names + c_names + b_names,
    }


# independent oracle: permutation enumeration straight from the definition,
# sharing no code with the package's bitmask machinery
def naive_permutation_shapley(fn, m):
    phi = np.zeros(m)
    perms = list(itertools.permutations(range(m)))
    for perm in perms:
        before = set()
        for i in perm:
            phi[i] += fn(before | {i}) - fn(before)
            before.add(i)
    return phi / len(perms)


def naive_single_baseline(f, x_e, x_b):
    """Permutation-definition Shapley of the spliced game, row-at-a-time."""

    def fn(s):
        x = np.array(x_b, dtype=float)
        for i in s:
            x[i] = x_e[i]
        return float(f(x[None, :])[0])

    return naive_permutation_shapley(fn, len(x_e))
