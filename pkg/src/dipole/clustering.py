"""Soft two-way clustering of polarized embeddings.

Membership uses an exponential kernel on plain (not squared) distances,

    r_ik = exp(-beta * ||h_i - mu_k||) / sum_l exp(-beta * ||h_i - mu_l||)

which for two centroids reduces to a numerically stable sigmoid of the
distance gap.  Centroids are the membership-weighted means.  Neutral
nodes are those with no confident side; irrelevant nodes are flagged by
their invariant embedding sitting far from the population.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import (ConfigError, DegenerateDataError, EvaluationError,
                     ValidationError)


@dataclass
class SoftAssignment:
    """(N, 2) membership matrix; rows sum to 1."""

    matrix: np.ndarray
    sharpness: float

    def hard(self):
        """Column index per node; exact ties go to the first column."""
        return (self.matrix[:, 1] > self.matrix[:, 0]).astype(np.int64)


@dataclass
class Centroids:
    centers: np.ndarray  # (2, d)


def _kmeans_pp_init(h, rng):
    n = h.shape[0]
    first = int(rng.integers(n))
    d2 = ((h - h[first]) ** 2).sum(axis=1)
    total = d2.sum()
    if total <= 0:
        raise DegenerateDataError("all embeddings are identical; nothing to cluster")
    second = int(rng.choice(n, p=d2 / total))
    return np.stack([h[first], h[second]])


def soft_assign(h, centers, sharpness=5.0):
    """Membership of each row of h under two fixed centers.

    For two centroids the exponential kernel on plain distances reduces
    to r_i0 = sigmoid(sharpness * (d_i1 - d_i0)), which is evaluated in
    its numerically stable form.
    """
    if sharpness <= 0:
        raise ConfigError("sharpness must be positive")
    h = np.atleast_2d(np.asarray(h, dtype=np.float64))
    d0 = np.linalg.norm(h - centers[0], axis=1)
    d1 = np.linalg.norm(h - centers[1], axis=1)
    r0 = expit(sharpness * (d1 - d0))
    return SoftAssignment(matrix=np.stack([r0, 1.0 - r0], axis=1),
                          sharpness=sharpness)


def centers_from_labels(h, labels):
    """Mean embedding per labeled class; classes with no labeled member
    fall back to the global labeled mean."""
    idx = np.array(sorted(labels), dtype=np.int64)
    cls = np.array([labels[i] for i in idx], dtype=np.int64)
    out = np.zeros((2, h.shape[1]))
    overall = h[idx].mean(axis=0)
    for k in (0, 1):
        members = idx[cls == k]
        out[k] = h[members].mean(axis=0) if members.size else overall
    return out


def centers_from_assignment(h, r0):
    """Soft-assignment-weighted means, guarding near-empty columns."""
    out = np.zeros((2, h.shape[1]))
    for k in (0, 1):
        mass = r0[:, k].sum()
        out[k] = (r0[:, k, None] * h).sum(axis=0) / mass if mass > 1e-12 else h.mean(axis=0)
    return out


def soft_kmeans(h, sharpness=5.0, iters=100, seed=0, tol=1e-8, init_centers=None):
    """Two-centroid soft k-means.

    Returns (SoftAssignment, Centroids).  Seeding is k-means++ style
    (second center drawn proportionally to squared distance), so runs
    are deterministic for a fixed seed.  ``init_centers`` replaces that
    draw with explicit (2, d) starting centers, pinning the basin the
    iteration refines; coincident starting centers carry no information
    and fall back to the seeded draw.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 2 or h.shape[0] < 2:
        raise ValidationError("soft_kmeans needs at least two embedding rows")
    if sharpness <= 0:
        raise ConfigError("sharpness must be positive")
    if iters < 1:
        raise ConfigError("iteration count must be at least 1")
    rng = np.random.default_rng(seed)
    if init_centers is not None:
        centers = np.asarray(init_centers, dtype=np.float64).copy()
        if centers.shape != (2, h.shape[1]):
            raise ValidationError(f"init_centers must have shape (2, {h.shape[1]}), "
                                  f"got {centers.shape}")
        if float(np.abs(centers[0] - centers[1]).max()) < 1e-12:
            centers = _kmeans_pp_init(h, rng)
    else:
        centers = _kmeans_pp_init(h, rng)
    for _ in range(iters):
        r = soft_assign(h, centers, sharpness).matrix
        new_centers = centers.copy()
        for k in (0, 1):
            mass = r[:, k].sum()
            if mass > 1e-12:
                new_centers[k] = (r[:, k, None] * h).sum(axis=0) / mass
        moved = float(np.abs(new_centers - centers).max())
        centers = new_centers
        if moved < tol:
            break
    return soft_assign(h, centers, sharpness), Centroids(centers=centers)


def flag_neutral(assignment, threshold=0.7):
    """True where no membership reaches the threshold (strictly)."""
    if not 0.5 < threshold <= 1.0:
        raise ConfigError(f"neutral threshold must lie in (0.5, 1], got {threshold}")
    return assignment.matrix.max(axis=1) < threshold


def flag_irrelevant(h_inv, n_std=2.0):
    """True where the invariant embedding sits strictly more than n_std
    robust standard deviations from the population center.

    Deviations are distances to the coordinate-wise median; the scale is
    their median absolute deviation rescaled to the Gaussian standard
    deviation.  Median estimates keep a contaminated population from
    inflating its own threshold and masking the outliers."""
    if n_std <= 0:
        raise ConfigError("n_std must be positive")
    h_inv = np.asarray(h_inv, dtype=np.float64)
    dev = np.linalg.norm(h_inv - np.median(h_inv, axis=0), axis=1)
    center = float(np.median(dev))
    scale = 1.4826 * float(np.median(np.abs(dev - center)))
    return dev > center + n_std * scale


@dataclass
class NodeFlags:
    neutral: np.ndarray
    irrelevant: np.ndarray


def cluster_and_flag(polarized, invariant, sharpness=5.0, iters=100, seed=0,
                     neutral_threshold=0.7, outlier_std=2.0, init_centers=None):
    """Full clustering step: flag irrelevant nodes, fit centroids on the
    rest, assign everyone, then flag neutrals from the memberships.

    Irrelevant-flagged rows are held out of the centroid fit so that a
    dense background population cannot claim one of the two centers for
    itself; the flagged rows still receive memberships against the
    fitted centers.  When the filter leaves fewer than two rows the fit
    falls back to the full matrix.  ``init_centers`` seeds the fit, the
    natural place for partial labels or a prior assignment to orient
    the two groups.
    """
    polarized = np.asarray(polarized, dtype=np.float64)
    irrelevant = flag_irrelevant(invariant, outlier_std)
    keep = np.flatnonzero(~irrelevant)
    fit_rows = polarized[keep] if keep.size >= 2 else polarized
    _, centroids = soft_kmeans(fit_rows, sharpness=sharpness, iters=iters,
                               seed=seed, init_centers=init_centers)
    assignment = soft_assign(polarized, centroids.centers, sharpness)
    flags = NodeFlags(neutral=flag_neutral(assignment, neutral_threshold),
                      irrelevant=irrelevant)
    return assignment, centroids, flags


def clustering_accuracy(assignment, labels, flags=None):
    """Best-over-permutations agreement between hard assignments and a
    binary label dict.  Irrelevant-flagged nodes are excluded; neutral
    nodes still count (an uncommitted but correct side is correct)."""
    if not labels:
        raise EvaluationError("no labeled nodes to score")
    hard = assignment.hard() if isinstance(assignment, SoftAssignment) else np.asarray(assignment)
    idx = np.array(sorted(labels), dtype=np.int64)
    if flags is not None:
        idx = idx[~flags.irrelevant[idx]]
    if idx.size == 0:
        raise EvaluationError("every labeled node was flagged irrelevant")
    y = np.array([labels[i] for i in idx], dtype=np.int64)
    pred = hard[idx]
    direct = float((pred == y).mean())
    flipped = float((1 - pred == y).mean())
    return max(direct, flipped)
