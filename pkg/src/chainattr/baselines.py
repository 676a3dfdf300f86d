"""Baseline-distribution construction: uniform subsampling and k-means clusters.

A BaselineSet carries an ordered sample matrix plus a content-hash id.  The id
is computed once from the view available where the set is defined and is then
shared (e.g. via a registry file) so every party can verify it is comparing
against the same baselines.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import WidthError


def _canon_float(v):
    return format(float(v), ".17g")


def content_hash(sample_ids, samples):
    """SHA-256 over ordered sample ids and 17-significant-digit values."""
    h = hashlib.sha256()
    for sid, row in zip(sample_ids, samples):
        line = str(sid) + ":" + ",".join(_canon_float(v) for v in row) + "\n"
        h.update(line.encode("utf-8"))
    return h.hexdigest()


@dataclass(frozen=True)
class BaselineSet:
    samples: np.ndarray  # (n, m), ordered
    sample_ids: tuple
    id: str
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise ValueError("baseline set must be a non-empty (n, m) matrix")
        if len(self.sample_ids) != self.samples.shape[0]:
            raise ValueError("one sample id per baseline row required")

    def __len__(self):
        return self.samples.shape[0]

    @classmethod
    def from_samples(cls, samples, sample_ids=None, provenance=None):
        samples = np.asarray(samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if sample_ids is None:
            sample_ids = tuple(str(i) for i in range(samples.shape[0]))
        else:
            sample_ids = tuple(str(s) for s in sample_ids)
        return cls(
            samples=samples,
            sample_ids=sample_ids,
            id=content_hash(sample_ids, samples),
            provenance=dict(provenance or {}),
        )

    def to_doc(self, include_values=False):
        doc = {
            "id": self.id,
            "sample_ids": list(self.sample_ids),
            "provenance": dict(self.provenance),
        }
        if include_values:
            doc["samples"] = [[float(v) for v in row] for row in self.samples]
        return doc


def uniform_sample(data, n, seed, sample_ids=None):
    """n distinct rows drawn without replacement with a seeded generator."""
    data = np.asarray(data, dtype=np.float64)
    if not 1 <= n <= data.shape[0]:
        raise ValueError(f"sample size {n} out of range for {data.shape[0]} rows")
    rng = np.random.default_rng(seed)
    idx = rng.choice(data.shape[0], size=n, replace=False)
    ids = (
        tuple(str(i) for i in idx)
        if sample_ids is None
        else tuple(str(sample_ids[i]) for i in idx)
    )
    return BaselineSet.from_samples(
        data[idx], sample_ids=ids, provenance={"kind": "uniform", "seed": int(seed)}
    )


# ---------------------------------------------------------------------------
# k-means on a reduced feature view


@dataclass(frozen=True)
class ClusterModel:
    centroids: np.ndarray  # (k, r)
    assignments: np.ndarray  # (n,) training assignments
    objective: float
    feature_names: tuple = ()
    objective_history: tuple = ()

    @property
    def k(self):
        return self.centroids.shape[0]

    def to_doc(self):
        return {
            "centroids": [[float(v) for v in c] for c in self.centroids],
            "assignments": [int(a) for a in self.assignments],
            "objective": float(self.objective),
            "feature_names": list(self.feature_names),
            "objective_history": [float(o) for o in self.objective_history],
        }

    @classmethod
    def from_doc(cls, doc):
        return cls(
            centroids=np.asarray(doc["centroids"], dtype=np.float64),
            assignments=np.asarray(doc["assignments"], dtype=np.intp),
            objective=float(doc["objective"]),
            feature_names=tuple(doc.get("feature_names", ())),
            objective_history=tuple(doc.get("objective_history", ())),
        )


def _sq_dists(X, centroids):
    return ((X[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp_init(X, k, rng):
    n = X.shape[0]
    centroids = np.empty((k, X.shape[1]))
    centroids[0] = X[rng.integers(n)]
    d2 = ((X - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total == 0.0:
            centroids[j] = X[rng.integers(n)]
            continue
        probs = d2 / total
        centroids[j] = X[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((X - centroids[j]) ** 2).sum(axis=1))
    return centroids


def kmeans_fit(data_reduced, k, seed=0, max_iter=300, tol=1e-6, feature_names=()):
    """Lloyd iterations from k-means++ seeding; objective checked non-increasing.

    An empty cluster is re-seeded to the point farthest from its assigned
    centroid (lowest index on ties), which keeps the fit deterministic.
    """
    X = np.asarray(data_reduced, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if not np.isfinite(X).all():
        raise ValueError("k-means requires finite data")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for {n} points")

    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(X, k, rng)
    prev_objective = np.inf
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        assign = d2.argmin(axis=1)  # argmin takes the lowest index on ties
        assigned_d2 = d2[np.arange(n), assign]
        objective = float(assigned_d2.sum())
        if objective > prev_objective + 1e-9 * max(1.0, abs(prev_objective)):
            raise AssertionError("k-means objective increased")
        prev_objective = objective
        history.append(objective)

        new_centroids = centroids.copy()
        empties = [j for j in range(k) if not (assign == j).any()]
        # j-th empty cluster takes the j-th farthest point (deterministic)
        farthest = np.argsort(-assigned_d2, kind="stable")
        for rank, j in enumerate(empties):
            new_centroids[j] = X[farthest[rank]]
        for j in range(k):
            if j not in empties:
                new_centroids[j] = X[assign == j].mean(axis=0)
        move = np.sqrt(((new_centroids - centroids) ** 2).sum(axis=1)).max()
        centroids = new_centroids
        if move < tol:
            break

    d2 = _sq_dists(X, centroids)
    assign = d2.argmin(axis=1)
    objective = float(d2[np.arange(n), assign].sum())
    history.append(objective)
    return ClusterModel(
        centroids=centroids,
        assignments=assign,
        objective=objective,
        feature_names=tuple(feature_names),
        objective_history=tuple(history),
    )


def assign_baseline_cluster(model, x_reduced):
    """Index of the nearest centroid; ties go to the lowest index."""
    x = np.asarray(x_reduced, dtype=np.float64).ravel()
    if x.shape[0] != model.centroids.shape[1]:
        raise WidthError(
            f"reduced sample width {x.shape[0]} != centroid width "
            f"{model.centroids.shape[1]}"
        )
    return int(((model.centroids - x) ** 2).sum(axis=1).argmin())


def cluster_baseline_set(model, data, x_reduced, sample_ids=None):
    """Baseline set of the training members of the explicand's nearest cluster."""
    data = np.asarray(data, dtype=np.float64)
    if data.shape[0] != model.assignments.shape[0]:
        raise WidthError("data rows do not match the fitted assignments")
    c = assign_baseline_cluster(model, x_reduced)
    idx = np.nonzero(model.assignments == c)[0]
    ids = None if sample_ids is None else [sample_ids[i] for i in idx]
    return BaselineSet.from_samples(
        data[idx],
        sample_ids=ids,
        provenance={
            "kind": "kmeans",
            "cluster": int(c),
            "centroid": [float(v) for v in model.centroids[c]],
        },
    )
