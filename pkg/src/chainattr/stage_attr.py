"""Per-stage attribution matrices.

Each attributor returns an (m_i, o_i) matrix whose column o sums to that
output's delta between the explicand and baseline inputs, and whose row j is
all zero whenever input j has zero delta.  Those two properties are what the
chain engine's efficiency guarantee rests on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArityError, WidthError
from .oracle import MAX_PLAYERS, shapley_from_table
from .pipeline import (
    ActivationStage,
    LinearStage,
    ParallelBlockStage,
    TransformStage,
    TreeEnsembleStage,
)


@dataclass(frozen=True)
class StageAttribution:
    matrix: np.ndarray  # (m_i, o_i)
    input_delta: np.ndarray
    output_delta: np.ndarray

    def column_sum_error(self):
        return np.abs(self.matrix.sum(axis=0) - self.output_delta)


def _check_widths(stage, xe_in, xb_in):
    xe_in = np.asarray(xe_in, dtype=np.float64)
    xb_in = np.asarray(xb_in, dtype=np.float64)
    if xe_in.shape != (stage.input_width,) or xb_in.shape != (stage.input_width,):
        raise WidthError(
            f"stage expects width {stage.input_width}, "
            f"got {xe_in.shape} and {xb_in.shape}"
        )
    return xe_in, xb_in


def linear_stage_attr(stage, xe_in, xb_in):
    """phi_hat[j, o] = W[o, j] * delta_j; the bias cancels in the output delta."""
    xe_in, xb_in = _check_widths(stage, xe_in, xb_in)
    delta = xe_in - xb_in
    matrix = delta[:, None] * stage.weights.T
    out_delta = stage.forward(xe_in)[0] - stage.forward(xb_in)[0]
    return StageAttribution(matrix, delta, out_delta)


def activation_stage_attr(stage, xe_in, xb_in):
    """Diagonal of per-coordinate output deltas (each output has one input)."""
    xe_in, xb_in = _check_widths(stage, xe_in, xb_in)
    out_delta = stage.fn(xe_in) - stage.fn(xb_in)
    return StageAttribution(np.diag(out_delta), xe_in - xb_in, out_delta)


def _tree_shapley(tree, xe_in, xb_in, tree_index):
    """Exact Shapley for one tree, enumerating only active features.

    Features absent from the tree or with zero delta are null players and
    get exactly 0; restricting the enumeration to the rest is lossless.
    """
    used = tree.features_used
    active = used[xe_in[used] != xb_in[used]]
    a = len(active)
    if a > MAX_PLAYERS:
        raise ArityError(
            f"tree {tree_index}: {a} active features exceeds the "
            f"exhaustive-enumeration limit {MAX_PLAYERS}"
        )
    phi = np.zeros(xe_in.shape[0])
    if a == 0:
        return phi
    masks = np.arange(1 << a)
    bits = (masks[:, None] >> np.arange(a)) & 1
    X = np.tile(xb_in, (1 << a, 1))
    X[:, active] = np.where(bits.astype(bool), xe_in[active], xb_in[active])
    phi[active] = shapley_from_table(tree.eval(X), a)
    return phi


def tree_stage_attr(stage, xe_in, xb_in):
    """Per-tree exact Shapley combined by ensemble linearity; one output column."""
    xe_in, xb_in = _check_widths(stage, xe_in, xb_in)
    phi = np.zeros(stage.input_width)
    for t, (w, tree) in enumerate(zip(stage.tree_weights, stage.trees)):
        phi = phi + w * _tree_shapley(tree, xe_in, xb_in, t)
    out_delta = stage.forward(xe_in)[0] - stage.forward(xb_in)[0]
    return StageAttribution(phi[:, None], xe_in - xb_in, out_delta)


def transform_stage_attr(stage, xe_in, xb_in, label=None):
    """Scalar map: the single entry is T(x_e) - T(x_b)."""
    xe_in, xb_in = _check_widths(stage, xe_in, xb_in)
    out_delta = (
        stage.forward(xe_in, labels=label)[0] - stage.forward(xb_in, labels=label)[0]
    )
    return StageAttribution(out_delta[None, :].copy(), xe_in - xb_in, out_delta)


def parallel_block_attr(stage, xe_in, xb_in, label=None):
    """Block-diagonal assembly of sub-pipeline chain attributions.

    Each block's (input slice x output slice) sub-matrix is the block
    pipeline's own single-baseline chain attribution, one column per block
    output; a passthrough pair (i -> j) contributes delta_i at (i, j).
    """
    from .chain import chain_attribution_matrix

    xe_in, xb_in = _check_widths(stage, xe_in, xb_in)
    matrix = np.zeros((stage.input_width, stage.output_width))
    for pipe, ins, outs in stage.blocks:
        sub = chain_attribution_matrix(pipe, xe_in[ins], xb_in[ins], label=label)
        matrix[np.ix_(ins, outs)] += sub
    for i, j in stage.passthrough:
        matrix[i, j] += xe_in[i] - xb_in[i]
    out_delta = (
        stage.forward(xe_in, labels=label)[0] - stage.forward(xb_in, labels=label)[0]
    )
    return StageAttribution(matrix, xe_in - xb_in, out_delta)


def stage_attribution(stage, xe_in, xb_in, label=None):
    """Dispatch to the attributor for this stage kind."""
    if isinstance(stage, LinearStage):
        return linear_stage_attr(stage, xe_in, xb_in)
    if isinstance(stage, ActivationStage):
        return activation_stage_attr(stage, xe_in, xb_in)
    if isinstance(stage, TreeEnsembleStage):
        return tree_stage_attr(stage, xe_in, xb_in)
    if isinstance(stage, TransformStage):
        return transform_stage_attr(stage, xe_in, xb_in, label=label)
    if isinstance(stage, ParallelBlockStage):
        return parallel_block_attr(stage, xe_in, xb_in, label=label)
    raise TypeError(f"no attributor for stage kind {stage.kind!r}")
