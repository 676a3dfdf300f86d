"""Back-propagation of attributions through a pipeline.

For one baseline the recursion is

    psi_k = phi_hat(h_k, x_e, x_b)
    psi_i = phi_hat(h_i, x_e, x_b) @ (psi_{i+1} (/) (f_i(x_e) - f_i(x_b)))

where (/) is Hadamard division with 0/0 -> 0.  Every intermediate psi_i sums
to f_k(x_e) - f_k(x_b); that layer-wise efficiency is asserted as it is the
engine's core correctness contract.  Attributions for a baseline set are the
per-baseline attributions averaged in set order.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import EfficiencyError, WidthError
from .pipeline import evaluate
from .stage_attr import stage_attribution

EFFICIENCY_RTOL = 1e-8

# "always" verifies every chain; "sampled" verifies 1 in 64 (cheap-run profile)
_check_mode = "always"
_chain_counter = itertools.count()


def set_efficiency_check_mode(mode):
    global _check_mode
    if mode not in ("always", "sampled"):
        raise ValueError("mode must be 'always' or 'sampled'")
    _check_mode = mode


def _should_check():
    if _check_mode == "always":
        return True
    return next(_chain_counter) % 64 == 0


def hadamard_div(a, b):
    """Elementwise a / b with the convention a_i / 0 = 0 (exact zero test)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise WidthError(f"hadamard_div shapes differ: {a.shape} vs {b.shape}")
    out = np.zeros_like(a)
    np.divide(a, b, out=out, where=b != 0.0)
    return out


@dataclass
class ChainTrace:
    """Per-stage attribution vectors for one (explicand, baseline) pair."""

    psi: list  # psi[i] is the (m_i,) attribution onto stage i's inputs
    stage_output_deltas: list
    final_delta: float
    f_explicand: float
    f_baseline: float
    degenerate_divisions: int = 0

    @property
    def attribution(self):
        return self.psi[0]


@dataclass
class AttributionReport:
    """Final per-feature attributions for one explicand over a baseline set."""

    explicand_id: str
    phi: np.ndarray
    expected_value: float
    baseline_set_id: str
    flags: dict = field(default_factory=dict)
    feature_names: list | None = None
    traces: list | None = None
    f_explicand: float = 0.0

    def to_doc(self):
        names = self.feature_names or [f"x{i}" for i in range(len(self.phi))]
        return {
            "explicand_id": self.explicand_id,
            "attributions": [
                {"feature": n, "value": float(v)} for n, v in zip(names, self.phi)
            ],
            "expected_value": float(self.expected_value),
            "baseline_set_id": self.baseline_set_id,
            "flags": dict(self.flags),
        }


def _backpropagate(pipeline, trace_e, trace_b, label=None):
    """Shared recursion: returns per-stage psi matrices (m_i, o_k) and flags."""
    k = len(pipeline.stages)
    check = _should_check()
    degenerate = 0

    attrs = [
        stage_attribution(
            stage, trace_e.entries[i], trace_b.entries[i], label=label
        )
        for i, stage in enumerate(pipeline.stages)
    ]
    final_delta = trace_e.entries[k] - trace_b.entries[k]

    psi = [None] * k
    psi[k - 1] = attrs[k - 1].matrix
    for i in range(k - 2, -1, -1):
        denom = trace_e.entries[i + 1] - trace_b.entries[i + 1]
        upstream = psi[i + 1]
        zero = denom == 0.0
        if zero.any():
            degenerate += int(zero.sum())
            if upstream[zero].any():
                raise EfficiencyError(
                    "attribution mass on an output with zero delta", stage_index=i + 1
                )
        psi[i] = attrs[i].matrix @ hadamard_div(
            upstream, np.broadcast_to(denom[:, None], upstream.shape)
        )

    if check:
        for i in range(k):
            err = np.abs(psi[i].sum(axis=0) - final_delta)
            tol = EFFICIENCY_RTOL * np.maximum(1.0, np.abs(final_delta))
            if (err > tol).any():
                raise EfficiencyError(
                    f"psi does not sum to the output delta (err {err.max():.3e})",
                    stage_index=i,
                )
    deltas = [attrs[i].output_delta for i in range(k)]
    return psi, deltas, final_delta, degenerate


def chain_attribution_matrix(pipeline, x_e, x_b, label=None):
    """Single-baseline chain attribution, one column per pipeline output."""
    trace_e = evaluate(pipeline, x_e, label=label)
    trace_b = evaluate(pipeline, x_b, label=label)
    psi, _, _, _ = _backpropagate(pipeline, trace_e, trace_b, label=label)
    return psi[0]


def chain_single_baseline(pipeline, x_e, x_b, label=None):
    """Full chain trace for a scalar-output pipeline and one baseline."""
    if pipeline.output_width != 1:
        raise WidthError(
            "attribution requires a single-output pipeline; "
            "reduce with an output selector first"
        )
    trace_e = evaluate(pipeline, x_e, label=label)
    trace_b = evaluate(pipeline, x_b, label=label)
    psi, deltas, final_delta, degenerate = _backpropagate(
        pipeline, trace_e, trace_b, label=label
    )
    return ChainTrace(
        psi=[p[:, 0] for p in psi],
        stage_output_deltas=deltas,
        final_delta=float(final_delta[0]),
        f_explicand=float(trace_e.output[0]),
        f_baseline=float(trace_b.output[0]),
        degenerate_divisions=degenerate,
    )


def chain_with_distribution(
    pipeline,
    x_e,
    baselines,
    label=None,
    explicand_id="explicand",
    feature_names=None,
    keep_traces=False,
):
    """Average of per-baseline chains over an ordered baseline set.

    The mean is taken in baseline-set order so results do not depend on any
    worker scheduling at the caller.
    """
    from .baselines import BaselineSet

    if not isinstance(baselines, BaselineSet):
        baselines = BaselineSet.from_samples(np.asarray(baselines, dtype=np.float64))
    traces = [
        chain_single_baseline(pipeline, x_e, xb, label=label)
        for xb in baselines.samples
    ]
    phi = np.mean(np.stack([t.attribution for t in traces]), axis=0)
    expected = float(np.mean([t.f_baseline for t in traces]))
    f_e = traces[0].f_explicand
    degenerate = sum(t.degenerate_divisions for t in traces)

    err = abs(float(phi.sum()) - (f_e - expected))
    if err > EFFICIENCY_RTOL * max(1.0, abs(f_e - expected)):
        raise EfficiencyError(
            f"attributions do not sum to prediction minus expected value (err {err:.3e})"
        )
    flags = {"degenerate_divisions": degenerate}
    return AttributionReport(
        explicand_id=str(explicand_id),
        phi=phi,
        expected_value=expected,
        baseline_set_id=baselines.id,
        flags=flags,
        feature_names=list(feature_names) if feature_names else None,
        traces=traces if keep_traces else None,
        f_explicand=f_e,
    )


def ensemble_attr(members):
    """Weighted combination of reports for the same explicand and baselines.

    Bagged ensembles use weights 1/k, boosted ensembles weights 1.
    """
    members = list(members)
    if not members:
        raise ValueError("ensemble needs at least one member")
    _, first = members[0]
    for _, rep in members[1:]:
        if rep.explicand_id != first.explicand_id:
            raise ValueError("ensemble members explain different explicands")
        if rep.baseline_set_id != first.baseline_set_id:
            raise ValueError("ensemble members use different baseline sets")
        if len(rep.phi) != len(first.phi):
            raise WidthError("ensemble members have different feature spaces")
    phi = np.sum([w * rep.phi for w, rep in members], axis=0)
    expected = float(sum(w * rep.expected_value for w, rep in members))
    flags = {
        "degenerate_divisions": sum(
            rep.flags.get("degenerate_divisions", 0) for _, rep in members
        )
    }
    return AttributionReport(
        explicand_id=first.explicand_id,
        phi=phi,
        expected_value=expected,
        baseline_set_id=first.baseline_set_id,
        flags=flags,
        feature_names=first.feature_names,
        f_explicand=float(sum(w * rep.f_explicand for w, rep in members)),
    )
