"""Exact Shapley oracle: axioms, worked games, and the k-partition family."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chainattr import (
    ActivationStage,
    ArityError,
    BaselineSet,
    LinearStage,
    Partition,
    Pipeline,
    SetFunction,
    chain_single_baseline,
    exact_shapley,
    interventional_shapley,
    kpartition_attribution,
    permutation_shapley,
    sign_split_partition,
    single_baseline_shapley,
    singleton_partition,
)

from helpers import naive_permutation_shapley, naive_single_baseline, random_mixed_pipeline


def relu_sum():
    return Pipeline([LinearStage([[1.0, 1.0]]), ActivationStage("relu", 1)])


# ---------------------------------------------------------------------------
# exact_shapley on worked games


def test_additive_game():
    c = np.array([2.0, 3.0])
    v = SetFunction(2, lambda s: sum(c[i] for i in s))
    assert np.allclose(exact_shapley(v), c)


def test_product_game():
    # x0 * x1 at explicand (2, 3), baseline (0, 0): only the full set pays
    v = SetFunction(2, lambda s: 6.0 if len(s) == 2 else 0.0)
    assert np.allclose(exact_shapley(v), [3.0, 3.0])


def test_constant_game_gives_zero():
    v = SetFunction(3, lambda s: 42.0)
    assert np.array_equal(exact_shapley(v), np.zeros(3))


def test_arity_guard():
    with pytest.raises(ArityError):
        SetFunction(21, lambda s: 0.0)


def test_matches_independent_permutation_definition():
    rng = np.random.default_rng(0)
    for m in (1, 2, 3, 4, 5):
        table = {frozenset(): 0.0}
        fn = lambda s, r=rng: table.setdefault(frozenset(s), float(r.normal()))
        v = SetFunction(m, fn)
        ours = exact_shapley(v)
        cross = permutation_shapley(v)
        independent = naive_permutation_shapley(lambda s: fn(s), m)
        assert np.allclose(ours, cross, atol=1e-12)
        assert np.allclose(ours, independent, atol=1e-12)


def test_efficiency_axiom_random_games():
    rng = np.random.default_rng(1)
    for _ in range(50):
        m = int(rng.integers(1, 8))
        vals = rng.normal(size=1 << m)
        v = SetFunction(m, lambda s, vals=vals, m=m: vals[sum(1 << i for i in s)])
        phi = exact_shapley(v)
        total = vals[(1 << m) - 1] - vals[0]
        assert abs(phi.sum() - total) <= 1e-10 * max(1.0, abs(total))


def test_symmetry_axiom():
    # value depends only on |S|: all players interchangeable
    rng = np.random.default_rng(2)
    for _ in range(10):
        m = int(rng.integers(2, 7))
        by_size = rng.normal(size=m + 1)
        v = SetFunction(m, lambda s, b=by_size: b[len(s)])
        phi = exact_shapley(v)
        assert np.allclose(phi, phi[0])


@given(st.integers(1, 5), st.data())
@settings(max_examples=25, deadline=None)
def test_linearity_axiom(m, data):
    vals1 = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=1 << m, max_size=1 << m)))
    vals2 = np.array(data.draw(st.lists(st.floats(-10, 10), min_size=1 << m, max_size=1 << m)))
    a = data.draw(st.floats(-5, 5))
    mk = lambda vals: SetFunction(m, lambda s, v=vals: v[sum(1 << i for i in s)])
    combo = exact_shapley(mk(a * vals1 + vals2))
    parts = a * exact_shapley(mk(vals1)) + exact_shapley(mk(vals2))
    assert np.allclose(combo, parts, atol=1e-8)


# ---------------------------------------------------------------------------
# single-baseline and interventional games


def test_single_baseline_relu_positive():
    phi = single_baseline_shapley(relu_sum(), np.array([2.0, 1.0]), np.zeros(2))
    assert np.allclose(phi, [2.0, 1.0])


def test_single_baseline_relu_mixed():
    phi = single_baseline_shapley(relu_sum(), np.array([2.0, -1.0]), np.zeros(2))
    assert np.allclose(phi, [1.5, -0.5])


def test_single_baseline_identical_inputs():
    x = np.array([1.0, 2.0])
    assert np.array_equal(single_baseline_shapley(relu_sum(), x, x), np.zeros(2))


def test_single_baseline_efficiency_and_missingness():
    rng = np.random.default_rng(3)
    for _ in range(25):
        m = int(rng.integers(1, 7))
        p = random_mixed_pipeline(rng, m)
        x_e = rng.normal(size=m)
        x_b = rng.normal(size=m)
        frozen = rng.random(size=m) < 0.3
        x_b[frozen] = x_e[frozen]
        phi = single_baseline_shapley(p, x_e, x_b)
        f = p.scalar_fn()
        total = f(x_e[None, :])[0] - f(x_b[None, :])[0]
        assert abs(phi.sum() - total) <= 1e-10 * max(1.0, abs(total))
        assert np.array_equal(phi[frozen], np.zeros(frozen.sum()))


def test_single_baseline_matches_independent_oracle():
    rng = np.random.default_rng(4)
    for _ in range(10):
        m = int(rng.integers(1, 6))
        p = random_mixed_pipeline(rng, m)
        x_e, x_b = rng.normal(size=m), rng.normal(size=m)
        ours = single_baseline_shapley(p, x_e, x_b)
        ref = naive_single_baseline(p.scalar_fn(), x_e, x_b)
        assert np.allclose(ours, ref, atol=1e-10)


def test_interventional_single_baseline_degenerate():
    x_e, x_b = np.array([2.0, 1.0]), np.array([0.5, -0.5])
    one = single_baseline_shapley(relu_sum(), x_e, x_b)
    avg = interventional_shapley(relu_sum(), x_e, x_b[None, :])
    assert np.array_equal(one, avg)


def test_interventional_linear_closed_form():
    rng = np.random.default_rng(5)
    beta = rng.normal(size=4)
    p = Pipeline([LinearStage(beta[None, :], np.array([0.7]))])
    x_e = rng.normal(size=4)
    d = rng.normal(size=(6, 4))
    phi = interventional_shapley(p, x_e, d)
    assert np.allclose(phi, beta * (x_e - d.mean(axis=0)), atol=1e-12)


def test_interventional_relu_example():
    d = np.array([[0.0, 0.0], [2.0, 1.0]])
    phi = interventional_shapley(relu_sum(), np.array([2.0, 1.0]), d)
    assert np.allclose(phi, [1.0, 0.5])


def test_interventional_accepts_baseline_set_and_rejects_empty():
    bset = BaselineSet.from_samples(np.array([[0.0, 0.0]]))
    phi = interventional_shapley(relu_sum(), np.array([2.0, 1.0]), bset)
    assert np.allclose(phi, [2.0, 1.0])
    with pytest.raises(ValueError):
        interventional_shapley(relu_sum(), np.array([2.0, 1.0]), np.empty((0, 2)))


# ---------------------------------------------------------------------------
# k-partition family


def test_partition_validation():
    with pytest.raises(ValueError):
        Partition(((0, 1), (1, 2)))
    with pytest.raises(ValueError):
        Partition(((0,),)).validate_covers(2)


def test_kpartition_one_block_is_rescale():
    phi = kpartition_attribution(
        np.array([1.0, 1.0]), "relu", Partition(((0, 1),)),
        np.array([2.0, -1.0]), np.zeros(2),
    )
    assert np.allclose(phi, [2.0, -1.0])


def test_kpartition_sign_split_is_revealcancel():
    part = sign_split_partition([1.0, 1.0], [2.0, -1.0])
    phi = kpartition_attribution(
        np.array([1.0, 1.0]), "relu", part, np.array([2.0, -1.0]), np.zeros(2)
    )
    assert np.allclose(phi, [1.5, -0.5])


def test_kpartition_singletons_linear_identity():
    rng = np.random.default_rng(6)
    beta = rng.normal(size=5)
    x_e, x_b = rng.normal(size=5), rng.normal(size=5)
    phi = kpartition_attribution(beta, "identity", singleton_partition(5), x_e, x_b)
    assert np.allclose(phi, beta * (x_e - x_b), atol=1e-12)


def test_kpartition_singletons_match_exact_shapley():
    rng = np.random.default_rng(7)
    for _ in range(20):
        m = int(rng.integers(1, 8))
        beta = rng.normal(size=m)
        bias = float(rng.normal())
        fn = ("relu", "sigmoid", "tanh")[int(rng.integers(3))]
        x_e, x_b = rng.normal(size=m), rng.normal(size=m)
        stage = Pipeline(
            [LinearStage(beta[None, :], np.array([bias])), ActivationStage(fn, 1)]
        )
        ours = kpartition_attribution(
            beta, fn, singleton_partition(m), x_e, x_b, bias=bias
        )
        ref = single_baseline_shapley(stage, x_e, x_b)
        assert np.allclose(ours, ref, atol=1e-10)


def test_kpartition_block_sums_equal_block_shapley():
    rng = np.random.default_rng(8)
    for _ in range(20):
        m = int(rng.integers(2, 9))
        beta = rng.normal(size=m)
        x_e, x_b = rng.normal(size=m), rng.normal(size=m)
        cut = sorted(rng.choice(m - 1, size=min(2, m - 1), replace=False) + 1)
        idx = list(range(m))
        blocks, prev = [], 0
        for c in list(cut) + [m]:
            if idx[prev:c]:
                blocks.append(tuple(idx[prev:c]))
            prev = c
        part = Partition(tuple(blocks))
        phi = kpartition_attribution(beta, "tanh", part, x_e, x_b)
        # recompute the block game directly
        from chainattr import splice

        def block_game(sel):
            s = [i for j in sel for i in part.blocks[j]]
            z = beta @ splice(x_e, x_b, s)
            return np.tanh(z)

        block_phi = naive_permutation_shapley(block_game, len(part.blocks))
        for j, block in enumerate(part.blocks):
            assert phi[list(block)].sum() == pytest.approx(block_phi[j], abs=1e-9)


def test_kpartition_zero_delta_block_spreads_uniformly():
    beta = np.array([1.0, -1.0, 2.0])
    x_e = np.array([1.0, 1.0, 3.0])
    x_b = np.array([0.0, 0.0, 1.0])  # block {0,1}: deltas (1, -1) sum to 0
    part = Partition(((0, 1), (2,)))
    phi = kpartition_attribution(beta, "identity", part, x_e, x_b)
    assert phi[0] == phi[1] == 0.0
    assert phi[2] == pytest.approx(4.0)


def test_kpartition_k1_bitwise_matches_chain():
    rng = np.random.default_rng(9)
    for _ in range(50):
        m = int(rng.integers(1, 9))
        beta = rng.normal(size=m)
        bias = float(rng.normal())
        fn = ("relu", "sigmoid", "tanh")[int(rng.integers(3))]
        x_e, x_b = rng.normal(size=m), rng.normal(size=m)
        p = Pipeline(
            [LinearStage(beta[None, :], np.array([bias])), ActivationStage(fn, 1)]
        )
        chain = chain_single_baseline(p, x_e, x_b).attribution
        kp = kpartition_attribution(
            beta, fn, Partition((tuple(range(m)),)), x_e, x_b, bias=bias
        )
        assert np.array_equal(chain, kp)
