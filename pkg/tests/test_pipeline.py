"""Model IR: loading, evaluation, splicing, and their invariants."""

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from chainattr import (
    ActivationStage,
    LinearStage,
    ParallelBlockStage,
    Pipeline,
    PipelineSpecError,
    TransformStage,
    WidthError,
    evaluate,
    splice,
    with_output_selector,
)
from chainattr.io import dump_pipeline, load_pipeline, pipeline_from_doc

from helpers import EXAMPLE_TREE, make_tree, random_mixed_pipeline


def relu_pipeline():
    return Pipeline([LinearStage([[1.0, 1.0]]), ActivationStage("relu", 1)])


# ---------------------------------------------------------------------------
# evaluate


def test_evaluate_linear_region():
    trace = evaluate(relu_pipeline(), np.array([2.0, 1.0]))
    assert [list(e) for e in trace.entries] == [[2.0, 1.0], [3.0], [3.0]]


def test_evaluate_relu_clamp():
    trace = evaluate(relu_pipeline(), np.array([-2.0, 1.0]))
    assert [list(e) for e in trace.entries] == [[-2.0, 1.0], [-1.0], [0.0]]


def test_evaluate_tree_walk():
    from chainattr import TreeEnsembleStage

    p = Pipeline([TreeEnsembleStage([EXAMPLE_TREE], input_width=2)])
    assert evaluate(p, np.array([1.0, 1.0])).output[0] == 3.0
    assert evaluate(p, np.array([0.0, 1.0])).output[0] == 0.0
    assert evaluate(p, np.array([1.0, 0.0])).output[0] == 1.0


def test_tree_tie_goes_left():
    tree = make_tree(
        [{"feature": 0, "threshold": 0.5, "left": 1, "right": 2}, {"value": -1.0}, {"value": 1.0}]
    )
    assert tree.eval(np.array([[0.5]]))[0] == -1.0


def test_evaluate_is_deterministic():
    rng = np.random.default_rng(7)
    p = random_mixed_pipeline(rng, 5)
    x = rng.normal(size=5)
    a = evaluate(p, x)
    b = evaluate(p, x)
    for ea, eb in zip(a.entries, b.entries):
        assert np.array_equal(ea, eb)


def test_evaluate_respects_composition():
    rng = np.random.default_rng(11)
    for _ in range(20):
        p = random_mixed_pipeline(rng, 4)
        x = rng.normal(size=4)
        trace = evaluate(p, x)
        assert len(trace) == len(p) + 1
        for i, stage in enumerate(p.stages):
            again = stage.forward(trace.entries[i])[0]
            assert np.array_equal(again, trace.entries[i + 1])


def test_evaluate_width_mismatch():
    with pytest.raises(WidthError):
        evaluate(relu_pipeline(), np.array([1.0, 2.0, 3.0]))


def test_evaluate_rejects_nonfinite_input():
    with pytest.raises(ValueError, match="non-finite"):
        evaluate(relu_pipeline(), np.array([np.nan, 1.0]))


def test_evaluate_reports_nonfinite_stage():
    p = Pipeline([LinearStage([[1e308], [1e308]]), LinearStage([[1.0, 1.0]])])
    with pytest.raises(ValueError, match="stage 0"):
        evaluate(p, np.array([2.0]))


def test_transform_requires_label():
    p = Pipeline([TransformStage("bce_loss")])
    with pytest.raises(ValueError, match="label"):
        evaluate(p, np.array([0.5]))
    assert evaluate(p, np.array([0.5]), label=1.0).output[0] == pytest.approx(
        -np.log(0.5)
    )


def test_transform_domain_checked():
    p = Pipeline([TransformStage("logit")])
    with pytest.raises(ValueError, match=r"\(0, 1\)"):
        evaluate(p, np.array([1.5]))


# ---------------------------------------------------------------------------
# splice


def test_splice_definition():
    out = splice(np.array([1.0, 2.0]), np.array([9.0, 9.0]), {0})
    assert list(out) == [1.0, 9.0]


def test_splice_empty_and_full():
    x_e = np.array([1.0, 2.0, 3.0])
    x_b = np.array([4.0, 5.0, 6.0])
    assert np.array_equal(splice(x_e, x_b, set()), x_b)
    assert np.array_equal(splice(x_e, x_b, {0, 1, 2}), x_e)


def test_splice_errors():
    with pytest.raises(WidthError):
        splice(np.array([1.0]), np.array([1.0, 2.0]), set())
    with pytest.raises(IndexError):
        splice(np.array([1.0, 2.0]), np.array([0.0, 0.0]), {5})


@given(
    st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=8),
    st.data(),
)
def test_splice_membership_property(values, data):
    m = len(values)
    x_e = np.array(values)
    x_b = -x_e + 1.0
    s = data.draw(st.sets(st.integers(0, m - 1)))
    out = splice(x_e, x_b, s)
    for i in range(m):
        assert out[i] == (x_e[i] if i in s else x_b[i])


# ---------------------------------------------------------------------------
# parallel blocks


def test_parallel_block_equals_scattered_subpipelines():
    rng = np.random.default_rng(3)
    sub1 = Pipeline([LinearStage(rng.normal(size=(2, 2)))])
    sub2 = Pipeline([LinearStage(rng.normal(size=(1, 2))), ActivationStage("tanh", 1)])
    stage = ParallelBlockStage(
        [(sub1, [0, 1], [0, 2]), (sub2, [2, 3], [3])],
        passthrough=[(4, 1)],
        input_width=5,
    )
    X = rng.normal(size=(6, 5))
    got = stage.forward(X)
    assert np.array_equal(got[:, [0, 2]], sub1.forward(X[:, [0, 1]]))
    assert np.array_equal(got[:, [3]], sub2.forward(X[:, [2, 3]]))
    assert np.array_equal(got[:, 1], X[:, 4])


def test_parallel_block_rejects_double_output():
    sub = Pipeline([LinearStage([[1.0]])])
    with pytest.raises(WidthError):
        ParallelBlockStage([(sub, [0], [0])], passthrough=[(1, 0)], input_width=2)


def test_parallel_block_requires_full_cover():
    sub = Pipeline([LinearStage([[1.0]])])
    with pytest.raises(WidthError):
        ParallelBlockStage([(sub, [0], [1])], input_width=1)


# ---------------------------------------------------------------------------
# loading


def test_load_minimal_spec(tmp_path):
    doc = {"stages": [{"kind": "linear", "weights": [[2.0, 3.0]], "bias": [1.0]}]}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    p = load_pipeline(path)
    assert p.input_width == 2 and len(p) == 1
    assert p.forward(np.array([1.0, 1.0]))[0, 0] == 6.0


def test_load_width_mismatch_names_pair():
    doc = {
        "stages": [
            {"kind": "linear", "weights": [[1.0], [1.0], [1.0]]},
            {"kind": "linear", "weights": [[1.0, 1.0]]},
        ]
    }
    with pytest.raises(WidthError, match="stage 0.*stage 1"):
        pipeline_from_doc(doc)


def test_load_linear_then_relu():
    doc = {
        "stages": [
            {"kind": "linear", "weights": [[1.0, 1.0]]},
            {"kind": "activation", "activation": "relu"},
        ]
    }
    p = pipeline_from_doc(doc)
    assert len(p) == 2 and p.output_width == 1


def test_load_rejects_unknown_kind_and_tag():
    with pytest.raises(PipelineSpecError, match="unknown stage kind"):
        pipeline_from_doc({"stages": [{"kind": "conv"}]})
    with pytest.raises(PipelineSpecError, match="activation"):
        pipeline_from_doc(
            {
                "stages": [
                    {"kind": "linear", "weights": [[1.0]]},
                    {"kind": "activation", "activation": "gelu"},
                ]
            }
        )


def test_load_rejects_unknown_fields():
    with pytest.raises(PipelineSpecError, match="unknown field"):
        pipeline_from_doc(
            {"stages": [{"kind": "linear", "weights": [[1.0]], "extra": 1}]}
        )


def test_load_reports_json_location(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"stages": [}')
    with pytest.raises(PipelineSpecError, match="bad.json:1"):
        load_pipeline(path)


def test_activation_first_stage_rejected():
    with pytest.raises(PipelineSpecError, match="first stage"):
        pipeline_from_doc({"stages": [{"kind": "activation", "activation": "relu"}]})


def test_pipeline_roundtrip_through_doc(tmp_path):
    rng = np.random.default_rng(5)
    p = random_mixed_pipeline(rng, 4)
    path = tmp_path / "p.json"
    dump_pipeline(p, path)
    q = load_pipeline(path)
    X = rng.normal(size=(8, 4))
    assert np.array_equal(p.forward(X, labels=1.0), q.forward(X, labels=1.0))


def test_output_selector_reduces_to_scalar():
    rng = np.random.default_rng(9)
    p = Pipeline([LinearStage(rng.normal(size=(3, 2)))])
    q = with_output_selector(p, 1)
    x = rng.normal(size=2)
    assert q.output_width == 1
    assert q.forward(x)[0, 0] == p.forward(x)[0, 1]
