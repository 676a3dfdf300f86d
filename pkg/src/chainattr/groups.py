"""Group-level attribution: sums over named feature groups plus a residual.

Disjoint covering groups pass through as raw sums.  Overlapping or partial
groups are rescaled by (sum of feature attributions) / (sum of raw group
sums), the unique multiplicative factor restoring group-level efficiency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

RESIDUAL_NAME = "_residual"
_NEAR_ZERO_REL = 1e-12


@dataclass(frozen=True)
class GroupSpec:
    """Named, possibly overlapping feature groups; the residual is derived."""

    groups: tuple  # of (name, tuple of feature indices)

    def __post_init__(self):
        names = [n for n, _ in self.groups]
        if len(set(names)) != len(names):
            raise ValueError("group names must be unique")
        if RESIDUAL_NAME in names:
            raise ValueError(f"{RESIDUAL_NAME!r} is reserved for the residual group")
        object.__setattr__(
            self,
            "groups",
            tuple((str(n), tuple(sorted(int(i) for i in idx))) for n, idx in self.groups),
        )

    def validate(self, m):
        for name, idx in self.groups:
            for i in idx:
                if not 0 <= i < m:
                    raise IndexError(f"group {name!r} references feature {i} (width {m})")

    def residual(self, m):
        covered = {i for _, idx in self.groups for i in idx}
        return tuple(i for i in range(m) if i not in covered)

    def is_disjoint_cover(self, m):
        flat = [i for _, idx in self.groups for i in idx]
        return len(flat) == len(set(flat)) and len(set(flat)) == m


@dataclass(frozen=True)
class GroupAttribution:
    names: tuple  # group names, residual last
    values: np.ndarray
    raw_sums: np.ndarray
    normalization: float  # 1.0 when no rescale was applied
    flags: dict = field(default_factory=dict)

    def to_doc(self):
        return {
            "groups": [
                {"group": n, "value": float(v)} for n, v in zip(self.names, self.values)
            ],
            "normalization": float(self.normalization),
            "flags": dict(self.flags),
        }


def group_attr(phi, spec, member_weights=None):
    """Aggregate a feature attribution vector into group attributions.

    ``member_weights`` optionally weights each feature before summation
    (default uniform).  Efficiency (group sums equal the feature total) holds
    exactly for disjoint covers and is restored by rescaling otherwise; when
    the raw group total is too close to zero to divide by, raw sums are
    returned with an ``unnormalizable_overlap`` flag instead.
    """
    phi = np.asarray(phi, dtype=np.float64)
    if not np.isfinite(phi).all():
        raise ValueError("attribution vector must be finite")
    m = phi.shape[0]
    spec.validate(m)
    weighted = phi if member_weights is None else phi * np.asarray(member_weights)

    names = tuple(n for n, _ in spec.groups) + (RESIDUAL_NAME,)
    index_sets = [np.asarray(idx, dtype=np.intp) for _, idx in spec.groups]
    index_sets.append(np.asarray(spec.residual(m), dtype=np.intp))
    raw = np.array([weighted[idx].sum() if idx.size else 0.0 for idx in index_sets])

    flags = {}
    if spec.is_disjoint_cover(m) and member_weights is None:
        values, factor = raw.copy(), 1.0
    else:
        total = phi.sum()
        raw_total = raw.sum()
        if abs(raw_total) <= _NEAR_ZERO_REL * np.abs(raw).sum():
            flags["unnormalizable_overlap"] = True
            values, factor = raw.copy(), 1.0
        else:
            factor = total / raw_total
            values = raw * factor
    return GroupAttribution(
        names=names, values=values, raw_sums=raw, normalization=factor, flags=flags
    )
