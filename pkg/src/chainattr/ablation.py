"""Ablation-test evaluation: replace top-attributed features and track output.

At step k the k strongest features of the requested sign (per explicand) are
replaced by the imputation sample; rows with fewer sign-matching features
saturate and stop changing.  The curve records the mean final-stage output at
each k, the quantitative check that attributions ranked features usefully.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import WidthError


@dataclass(frozen=True)
class AblationCurve:
    sign: str
    mean_output: np.ndarray  # entry k is the mean over explicands at k ablated
    ablated_counts: np.ndarray  # per explicand, features ablated at k_max

    @property
    def k_values(self):
        return np.arange(len(self.mean_output))

    def to_rows(self):
        return [(int(k), float(v), self.sign) for k, v in enumerate(self.mean_output)]


def _ablation_order(phi_row, sign):
    """Feature indices in ablation order; ties broken by lower index."""
    if sign == "positive":
        eligible = np.nonzero(phi_row > 0)[0]
        keys = -phi_row[eligible]
    elif sign == "negative":
        eligible = np.nonzero(phi_row < 0)[0]
        keys = phi_row[eligible]
    else:
        raise ValueError(f"sign must be 'positive' or 'negative', got {sign!r}")
    return eligible[np.argsort(keys, kind="stable")]


def ablation_curve(pipeline, explicands, phi, impute, sign, k_max, labels=None):
    """Mean model output after ablating the top 0..k_max signed features.

    Ablations are nested: a feature replaced at step k stays replaced at every
    later step.
    """
    X = np.asarray(explicands, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    impute = np.asarray(impute, dtype=np.float64)
    if X.ndim != 2:
        raise WidthError("explicands must be an (n, m) matrix")
    n, m = X.shape
    if phi.shape != (n, m):
        raise WidthError(f"attribution matrix shape {phi.shape} != explicands {X.shape}")
    if impute.shape != (m,):
        raise WidthError(f"imputation sample width {impute.shape} != {m}")
    if not 0 <= k_max <= m:
        raise ValueError(f"k_max {k_max} out of range for {m} features")

    orders = [_ablation_order(phi[i], sign) for i in range(n)]
    current = X.copy()
    means = np.empty(k_max + 1)
    means[0] = float(np.mean(pipeline.forward(current, labels=labels)[:, 0]))
    counts = np.zeros(n, dtype=np.intp)
    for k in range(1, k_max + 1):
        for i, order in enumerate(orders):
            if k <= len(order):
                j = order[k - 1]
                current[i, j] = impute[j]
                counts[i] += 1
        means[k] = float(np.mean(pipeline.forward(current, labels=labels)[:, 0]))
    return AblationCurve(sign=sign, mean_output=means, ablated_counts=counts)
