"""Exact (exponential-cost) Shapley computation and the k-partition family.

These are the ground-truth attributors every approximate path is checked
against.  All enumerations are over subsets encoded as bitmasks; the weighted
subset form reaches 20 players where permutation enumeration stops near 10.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArityError, WidthError
from .pipeline import ACTIVATIONS, LinearStage, Pipeline, splice

MAX_PLAYERS = 20


def _guard_arity(m, what="players"):
    if m > MAX_PLAYERS:
        raise ArityError(f"{m} {what} exceeds the exhaustive-enumeration limit {MAX_PLAYERS}")


@dataclass(frozen=True)
class SetFunction:
    """A cooperative game: arity m and a value for every subset of {0..m-1}."""

    m: int
    fn: object  # callable(tuple of member indices) -> float

    def __post_init__(self):
        _guard_arity(self.m)

    def value_table(self):
        """Game values for all 2^m subsets, indexed by bitmask."""
        vals = np.empty(1 << self.m)
        for mask in range(1 << self.m):
            members = tuple(i for i in range(self.m) if mask >> i & 1)
            vals[mask] = self.fn(members)
        return vals


def _popcounts(m):
    sizes = np.zeros(1 << m, dtype=np.int64)
    for i in range(m):
        sizes[1 << i : 1 << (i + 1)] = sizes[: 1 << i] + 1
    return sizes


def _subset_weights(m):
    # w[s] = s! (m-s-1)! / m!
    fact = [math.factorial(i) for i in range(m + 1)]
    return np.array([fact[s] * fact[m - s - 1] / fact[m] for s in range(m)])


def shapley_from_table(values, m):
    """Weighted-subset Shapley values from a bitmask-indexed value table."""
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (1 << m,):
        raise WidthError(f"value table must have 2^{m} entries")
    sizes = _popcounts(m)
    weights = _subset_weights(m) if m else np.empty(0)
    phi = np.zeros(m)
    masks = np.arange(1 << m)
    for i in range(m):
        # fixed mask order keeps the summation deterministic
        without = masks[(masks >> i) & 1 == 0]
        marg = values[without | (1 << i)] - values[without]
        phi[i] = np.sum(weights[sizes[without]] * marg)
    return phi


def exact_shapley(v):
    """Exact Shapley values of a SetFunction via the weighted-subset form."""
    _guard_arity(v.m)
    return shapley_from_table(v.value_table(), v.m)


def permutation_shapley(v):
    """Permutation-enumeration cross-check; infeasible past ~8 players."""
    if v.m > 8:
        raise ArityError(f"{v.m}! permutations is too many; use exact_shapley")
    values = v.value_table()
    phi = np.zeros(v.m)
    count = 0
    for perm in itertools.permutations(range(v.m)):
        mask = 0
        for i in perm:
            phi[i] += values[mask | (1 << i)] - values[mask]
            mask |= 1 << i
        count += 1
    return phi / count


def _as_batch_fn(f, label=None):
    if isinstance(f, Pipeline):
        return f.scalar_fn(label=label)
    return f


def _splice_batch(x_e, x_b, masks, m):
    bits = (masks[:, None] >> np.arange(m)) & 1
    return np.where(bits.astype(bool), x_e, x_b)


def single_baseline_value_table(f, x_e, x_b, label=None):
    """Values of the spliced-sample game S -> f(splice(x_e, x_b, S))."""
    x_e = np.asarray(x_e, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    if x_e.shape != x_b.shape:
        raise WidthError("explicand and baseline widths differ")
    m = x_e.shape[0]
    _guard_arity(m, "features")
    fn = _as_batch_fn(f, label)
    X = _splice_batch(x_e, x_b, np.arange(1 << m), m)
    values = np.asarray(fn(X), dtype=np.float64)
    if values.ndim == 2 and values.shape[1] == 1:
        values = values[:, 0]
    if values.shape != (1 << m,):
        raise WidthError("evaluator must return one scalar per row")
    return values, m


def single_baseline_shapley(f, x_e, x_b, label=None):
    """Exact Shapley values of the single-baseline spliced game."""
    values, m = single_baseline_value_table(f, x_e, x_b, label=label)
    return shapley_from_table(values, m)


def interventional_shapley(f, x_e, baselines, label=None):
    """Mean of single-baseline Shapley values over a baseline set."""
    rows = getattr(baselines, "samples", baselines)
    rows = np.asarray(rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0:
        raise ValueError("baseline set must be a non-empty (n, m) matrix")
    per = [single_baseline_shapley(f, x_e, xb, label=label) for xb in rows]
    return np.mean(np.stack(per), axis=0)


# ---------------------------------------------------------------------------
# k-partition approximations: exact Shapley over feature blocks, spread
# linearly within each block; one block reproduces the chain's ratio rule


@dataclass(frozen=True)
class Partition:
    """Disjoint blocks covering {0..m-1}."""

    blocks: tuple

    def __post_init__(self):
        flat = [i for block in self.blocks for i in block]
        if len(self.blocks) < 1:
            raise ValueError("partition needs at least one block")
        if len(set(flat)) != len(flat):
            raise ValueError("partition blocks overlap")
        object.__setattr__(
            self, "blocks", tuple(tuple(sorted(b)) for b in self.blocks)
        )

    @property
    def m(self):
        return sum(len(b) for b in self.blocks)

    def validate_covers(self, m):
        flat = sorted(i for block in self.blocks for i in block)
        if flat != list(range(m)):
            raise ValueError(f"partition does not cover 0..{m - 1} exactly")


def singleton_partition(m):
    return Partition(tuple((i,) for i in range(m)))


def sign_split_partition(beta, x_e, x_b=None, split_on="explicand", threshold=0.0):
    """Two blocks split by the sign of beta_i * x_i against a threshold.

    ``split_on`` picks which x enters the test: the explicand (default),
    the baseline, or the explicand-baseline delta.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if split_on == "explicand":
        x = np.asarray(x_e, dtype=np.float64)
    elif split_on == "baseline":
        x = np.asarray(x_b, dtype=np.float64)
    elif split_on == "delta":
        x = np.asarray(x_e, dtype=np.float64) - np.asarray(x_b, dtype=np.float64)
    else:
        raise ValueError(f"unknown split_on {split_on!r}")
    hot = beta * x > threshold
    blocks = [tuple(np.nonzero(hot)[0]), tuple(np.nonzero(~hot)[0])]
    return Partition(tuple(tuple(b) for b in blocks if b))


def kpartition_attribution(beta, nonlin, partition, x_e, x_b, bias=0.0):
    """Exact Shapley over feature blocks of nonlin(beta . x + bias), spread linearly.

    Block attributions are exact Shapley values of the block-level spliced
    game; within a block each member receives a share proportional to
    beta_i * (x_e_i - x_b_i).  A block whose member deltas sum to exactly 0
    has attribution 0 (its presence never moves the game) which is spread
    uniformly over its members.

    Game values are evaluated one splice at a time through the same
    linear-then-activation forward path the chain engine uses, so the
    1-block case reproduces the chain result bit for bit.
    """
    beta = np.asarray(beta, dtype=np.float64)
    x_e = np.asarray(x_e, dtype=np.float64)
    x_b = np.asarray(x_b, dtype=np.float64)
    m = beta.shape[0]
    if x_e.shape != (m,) or x_b.shape != (m,):
        raise WidthError("beta, explicand, and baseline widths differ")
    partition.validate_covers(m)
    K = len(partition.blocks)
    _guard_arity(K, "blocks")

    fn = ACTIVATIONS[nonlin] if isinstance(nonlin, str) else nonlin
    stage = LinearStage(beta[None, :], np.array([bias]))

    lin_vals = np.empty(1 << K)
    game_vals = np.empty(1 << K)
    for mask in range(1 << K):
        s = [i for j in range(K) if mask >> j & 1 for i in partition.blocks[j]]
        row = splice(x_e, x_b, s)[None, :]
        z = stage.forward(row)
        lin_vals[mask] = z[0, 0]
        game_vals[mask] = fn(z)[0, 0]

    phi_blocks = shapley_from_table(game_vals, K)

    member_delta = beta * (x_e - x_b)
    phi = np.zeros(m)
    for j, block in enumerate(partition.blocks):
        idx = np.asarray(block, dtype=np.intp)
        # same subtraction the chain uses for its Hadamard denominator
        block_delta = lin_vals[1 << j] - lin_vals[0]
        if block_delta == 0.0:
            phi[idx] = phi_blocks[j] / len(block)
        else:
            phi[idx] = member_delta[idx] * (phi_blocks[j] / block_delta)
    return phi
