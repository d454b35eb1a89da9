"""Polarization indices.

Both variants combine a population polarization term P with an edgewise
disagreement term D into I = P + D, mapped to (0, 1) by I / (1 + I).

Classic variant, on any single embedding table H:

    P = total variance of H (summed over dimensions)
    D = weighted mean over edges of ||h_i - h_j||

Unified variant, on a polarized/invariant pair: every quantity is read
relative to the invariant channel, which cancels scale shared by the
two channels:

    P = Var(polarized) / (Var(invariant) + eps)
    D = weighted mean over edges of ||dpo_ij|| / (||din_ij|| + eps)

Edge weights default to 1; D is a weighted mean (not a raw sum) so the
index is comparable across graph sizes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, ValidationError


@dataclass
class IndexReport:
    variant: str
    polarization: float
    disagreement: float
    index: float
    normalized: float

    def to_dict(self):
        """External report schema."""
        return {"variant": self.variant, "P": self.polarization,
                "D": self.disagreement, "I": self.index,
                "normalized": self.normalized}


def normalize_index(value):
    """Map a non-negative index to (0, 1) via x / (1 + x)."""
    if value < 0:
        raise ValidationError(f"index must be non-negative, got {value}")
    return value / (1.0 + value)


def _total_variance(h):
    return float(h.var(axis=0).sum())


def _edge_weights(edges, weights):
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if weights is None:
        weights = np.ones(edges.shape[0])
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape[0] != edges.shape[0]:
            raise ValidationError("weights length does not match edge count")
        if (weights < 0).any():
            raise ValidationError("edge weights must be non-negative")
    return edges, weights


def classic_index(h, edges, weights=None):
    """Variance-plus-disagreement index on one embedding table."""
    h = np.asarray(h, dtype=np.float64)
    edges, weights = _edge_weights(edges, weights)
    p = _total_variance(h)
    if edges.shape[0] == 0 or weights.sum() == 0:
        d = 0.0
    else:
        dist = np.linalg.norm(h[edges[:, 0]] - h[edges[:, 1]], axis=1)
        d = float((weights * dist).sum() / weights.sum())
    idx = p + d
    return IndexReport("classic", p, d, idx, normalize_index(idx))


def unified_index(e, edges, weights=None, eps=1e-8):
    """Invariant-relative index on an embedding pair.

    Raises on zero invariant variance: with no background variation the
    ratio is meaningless rather than infinitely polarized.
    """
    edges, weights = _edge_weights(edges, weights)
    var_in = _total_variance(e.invariant)
    if var_in == 0.0:
        raise DegenerateDataError("invariant embeddings have zero variance")
    p = _total_variance(e.polarized) / (var_in + eps)
    if edges.shape[0] == 0 or weights.sum() == 0:
        d = 0.0
    else:
        d_po = np.linalg.norm(e.polarized[edges[:, 0]] - e.polarized[edges[:, 1]], axis=1)
        d_in = np.linalg.norm(e.invariant[edges[:, 0]] - e.invariant[edges[:, 1]], axis=1)
        d = float((weights * (d_po / (d_in + eps))).sum() / weights.sum())
    idx = p + d
    return IndexReport("unified", p, d, idx, normalize_index(idx))
