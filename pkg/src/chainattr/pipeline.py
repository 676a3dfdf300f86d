"""Model intermediate representation: stages, pipelines, forward evaluation, splicing.

A pipeline is an ordered composition of stages, each mapping R^{m_i} -> R^{o_i}
with o_i equal to the next stage's input width.  Evaluation is pure and
deterministic; all arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WidthError

# ---------------------------------------------------------------------------
# elementwise functions


def _relu(x):
    return np.maximum(x, 0.0)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.float64)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _identity(x):
    return np.asarray(x, dtype=np.float64)


ACTIVATIONS = {
    "relu": _relu,
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "identity": _identity,
}


def _logit(p):
    return np.log(p) - np.log1p(-p)


def _bce_loss(p, y):
    return -(y * np.log(p) + (1.0 - y) * np.log1p(-p))


TRANSFORMS = ("sigmoid", "logit", "bce_loss")


def _as_row_matrix(x, width, what="input"):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != width:
        raise WidthError(f"{what} has width {x.shape[-1]}, expected {width}")
    return x


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class Tree:
    """Binary decision tree in flat-array form.

    Internal nodes split on ``x[feature] <= threshold`` (go left on true);
    leaves carry ``feature == -1`` and a value.
    """

    feature: np.ndarray  # int, -1 at leaves
    threshold: np.ndarray
    left: np.ndarray  # int child indices, -1 at leaves
    right: np.ndarray
    value: np.ndarray  # leaf payout, 0 at internal nodes
    root: int = 0

    def __post_init__(self):
        n = len(self.feature)
        if not (0 <= self.root < n):
            raise ValueError(f"tree root {self.root} out of range for {n} nodes")
        internal = self.feature >= 0
        kids = np.concatenate([self.left[internal], self.right[internal]])
        if kids.size and (kids.min() < 0 or kids.max() >= n):
            raise ValueError("tree child index out of range")
        if internal.any() and not np.isfinite(self.threshold[internal]).all():
            raise ValueError("tree thresholds must be finite")
        # reachability walk doubles as the acyclicity check
        seen = set()
        stack = [self.root]
        while stack:
            i = stack.pop()
            if i in seen:
                raise ValueError("tree is not acyclic")
            seen.add(i)
            if self.feature[i] >= 0:
                stack.extend((int(self.left[i]), int(self.right[i])))

    @property
    def features_used(self):
        return np.unique(self.feature[self.feature >= 0])

    def eval(self, X):
        """Evaluate on an (n, m) matrix, returning (n,) leaf values."""
        X = np.asarray(X, dtype=np.float64)
        node = np.full(X.shape[0], self.root, dtype=np.intp)
        while True:
            feat = self.feature[node]
            live = feat >= 0
            if not live.any():
                break
            rows = np.nonzero(live)[0]
            cur = node[rows]
            go_left = X[rows, feat[rows]] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return self.value[node]


# ---------------------------------------------------------------------------
# stages


class Stage:
    """Base class; concrete stages define widths and a batched forward map."""

    kind = "?"
    input_width: int
    output_width: int

    def forward(self, X, labels=None):
        raise NotImplementedError


class LinearStage(Stage):
    kind = "linear"

    def __init__(self, weights, bias=None):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise WidthError("linear weights must be a 2-D matrix (outputs x inputs)")
        o, m = self.weights.shape
        self.bias = (
            np.zeros(o) if bias is None else np.asarray(bias, dtype=np.float64)
        )
        if self.bias.shape != (o,):
            raise WidthError(f"bias has shape {self.bias.shape}, expected ({o},)")
        self.input_width = m
        self.output_width = o

    def forward(self, X, labels=None):
        X = _as_row_matrix(X, self.input_width)
        return X @ self.weights.T + self.bias


class ActivationStage(Stage):
    kind = "activation"

    def __init__(self, fn, width):
        if fn not in ACTIVATIONS:
            raise ValueError(f"unknown activation tag {fn!r}")
        self.fn_name = fn
        self.fn = ACTIVATIONS[fn]
        self.input_width = width
        self.output_width = width

    def forward(self, X, labels=None):
        X = _as_row_matrix(X, self.input_width)
        return self.fn(X)


class TreeEnsembleStage(Stage):
    """Weighted sum of trees plus a base score; always a single output."""

    kind = "tree_ensemble"

    def __init__(self, trees, tree_weights=None, base_score=0.0, input_width=None):
        self.trees = list(trees)
        if not self.trees:
            raise ValueError("tree ensemble needs at least one tree")
        self.tree_weights = (
            np.ones(len(self.trees))
            if tree_weights is None
            else np.asarray(tree_weights, dtype=np.float64)
        )
        if self.tree_weights.shape != (len(self.trees),):
            raise WidthError("one weight per tree required")
        self.base_score = float(base_score)
        max_feat = max(
            (int(t.features_used.max()) for t in self.trees if t.features_used.size),
            default=-1,
        )
        if input_width is None:
            input_width = max_feat + 1
        if max_feat >= input_width:
            raise WidthError(
                f"tree splits on feature {max_feat} but stage width is {input_width}"
            )
        self.input_width = int(input_width)
        self.output_width = 1

    def forward(self, X, labels=None):
        X = _as_row_matrix(X, self.input_width)
        out = np.full(X.shape[0], self.base_score)
        for w, tree in zip(self.tree_weights, self.trees):
            out = out + w * tree.eval(X)
        return out[:, None]


class TransformStage(Stage):
    """Scalar output transform: probability, log-odds, or per-sample loss."""

    kind = "transform"

    def __init__(self, transform):
        if transform not in TRANSFORMS:
            raise ValueError(f"unknown transform tag {transform!r}")
        self.transform = transform
        self.input_width = 1
        self.output_width = 1

    def forward(self, X, labels=None):
        X = _as_row_matrix(X, 1)
        p = X[:, 0]
        if self.transform == "sigmoid":
            return _sigmoid(p)[:, None]
        if (p <= 0.0).any() or (p >= 1.0).any():
            raise ValueError(f"{self.transform} transform input outside (0, 1)")
        if self.transform == "logit":
            return _logit(p)[:, None]
        if labels is None:
            raise ValueError("bce_loss transform requires a label for each sample")
        y = np.broadcast_to(np.asarray(labels, dtype=np.float64), p.shape)
        return _bce_loss(p, y)[:, None]


class ParallelBlockStage(Stage):
    """Sub-pipelines on input slices, scattered to disjoint output slices.

    ``blocks`` is a list of (pipeline, input_indices, output_indices);
    ``passthrough`` is a list of (input_index, output_index) identity pairs.
    Every output index must be produced exactly once.
    """

    kind = "parallel_block"

    def __init__(self, blocks, passthrough=(), input_width=None):
        self.blocks = [
            (pipe, np.asarray(ins, dtype=np.intp), np.asarray(outs, dtype=np.intp))
            for pipe, ins, outs in blocks
        ]
        self.passthrough = [(int(i), int(j)) for i, j in passthrough]
        produced = []
        referenced = []
        for pipe, ins, outs in self.blocks:
            if pipe.input_width != len(ins):
                raise WidthError(
                    f"block pipeline takes {pipe.input_width} inputs, slice has {len(ins)}"
                )
            if pipe.output_width != len(outs):
                raise WidthError(
                    f"block pipeline yields {pipe.output_width} outputs, slice has {len(outs)}"
                )
            produced.extend(int(o) for o in outs)
            referenced.extend(int(i) for i in ins)
        produced.extend(j for _, j in self.passthrough)
        referenced.extend(i for i, _ in self.passthrough)
        if len(set(produced)) != len(produced):
            raise WidthError("parallel block produces an output index more than once")
        width = len(produced)
        if sorted(produced) != list(range(width)):
            raise WidthError("parallel block outputs must cover 0..o-1 exactly once")
        if input_width is None:
            input_width = max(referenced) + 1 if referenced else 0
        if referenced and max(referenced) >= input_width:
            raise WidthError("parallel block references an input beyond its width")
        self.input_width = int(input_width)
        self.output_width = width

    def forward(self, X, labels=None):
        X = _as_row_matrix(X, self.input_width)
        out = np.empty((X.shape[0], self.output_width))
        for pipe, ins, outs in self.blocks:
            out[:, outs] = pipe.forward(X[:, ins], labels=labels)
        for i, j in self.passthrough:
            out[:, j] = X[:, i]
        return out


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class ForwardTrace:
    """Raw input followed by every intermediate output f_i(x), i = 1..k."""

    entries: list

    def __len__(self):
        return len(self.entries)

    @property
    def output(self):
        return self.entries[-1]


class Pipeline:
    """An ordered composition of stages with consistent widths."""

    def __init__(self, stages):
        stages = list(stages)
        if not stages:
            raise WidthError("pipeline needs at least one stage")
        for i in range(len(stages) - 1):
            if stages[i].output_width != stages[i + 1].input_width:
                raise WidthError(
                    f"stage {i} output width {stages[i].output_width} != "
                    f"stage {i + 1} input width {stages[i + 1].input_width}"
                )
        self.stages = stages

    @property
    def input_width(self):
        return self.stages[0].input_width

    @property
    def output_width(self):
        return self.stages[-1].output_width

    def __len__(self):
        return len(self.stages)

    def forward(self, X, labels=None):
        """Batched evaluation: (n, m) -> (n, o_k).  No intermediate checks."""
        X = _as_row_matrix(X, self.input_width)
        for stage in self.stages:
            X = stage.forward(X, labels=labels)
        return X

    def scalar_fn(self, label=None):
        """A batch evaluator (n, m) -> (n,) for single-output pipelines."""
        if self.output_width != 1:
            raise WidthError("scalar_fn requires a single-output pipeline")
        return lambda X: self.forward(X, labels=label)[:, 0]


def evaluate(pipeline, x, label=None):
    """Evaluate one sample, returning the full per-stage trace.

    Raises WidthError on a width mismatch and ValueError if any intermediate
    value is non-finite.
    """
    row = _as_row_matrix(x, pipeline.input_width)
    if row.shape[0] != 1:
        raise WidthError("evaluate takes a single sample; use forward for batches")
    if not np.isfinite(row).all():
        raise ValueError("non-finite value in pipeline input")
    entries = [row[0].copy()]
    with np.errstate(over="ignore", invalid="ignore"):
        for i, stage in enumerate(pipeline.stages):
            row = stage.forward(row, labels=label)
            if not np.isfinite(row).all():
                raise ValueError(f"non-finite intermediate value after stage {i}")
            entries.append(row[0].copy())
    return ForwardTrace(entries)


def splice(x_e, x_b, s):
    """Hybrid sample: features in ``s`` from the explicand, the rest from the baseline."""
    x_e = np.asarray(x_e, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_e.shape != x_b.shape:
        raise WidthError(f"explicand width {x_e.shape} != baseline width {x_b.shape}")
    out = x_b.copy()
    idx = np.asarray(sorted(s), dtype=np.intp)
    if idx.size:
        if idx.min() < 0 or idx.max() >= x_e.shape[0]:
            raise IndexError(f"splice index out of range for width {x_e.shape[0]}")
        out[idx] = x_e[idx]
    return out


def with_output_selector(pipeline, index):
    """Reduce a multi-output pipeline to one output via a one-hot linear stage."""
    o = pipeline.output_width
    if not (0 <= index < o):
        raise IndexError(f"output index {index} out of range for width {o}")
    row = np.zeros((1, o))
    row[0, index] = 1.0
    return Pipeline(list(pipeline.stages) + [LinearStage(row)])
