"""Silence-driven negative sampling.

Positive context for an anchor is simply its neighborhood.  Negatives
are the nodes the anchor plausibly chose not to engage with: a node j
(not a neighbor, not the anchor) is a negative when

  1. its predicted interaction score with the anchor is low
     (score < low threshold), and
  2. some admissible augmentation of the anchor's polarized embedding
     would raise that score above a high threshold, i.e. the silence is
     attributable to the polarized side rather than to irrelevance.

The exact sampler maximizes the score over the augmentation family
directly.  For bounded additive perturbations of the polarized part
under an inner-product score the maximum is closed form:

    max_{|mu|_inf <= B} (h_po + mu, h_in) . h_j  =  base + B * |h_j_po|_1

For an MLP-adaptor score the inner maximum is approximated by a few
steps of projected sign-gradient ascent.

The fast sampler replaces the inner maximization with a factorized
criterion: total adaptor score below the low threshold while the
invariant-channel score alone stays above a third threshold, meaning
the backgrounds agree and the gap must come from the polarized side.
Adaptor outputs are computed once per embedding table, so a full sweep
over anchors costs two matrix products.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ValidationError

CONNECT_KINDS = ("inner-product", "adaptor-mlp")
AUGMENTATION_KINDS = ("perturbation", "interpolation")
SAMPLER_KINDS = ("fast", "exact", "random")


@dataclass
class Adaptor:
    """One-hidden-layer MLP  h -> relu(h W1 + b1) W2 + b2."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    def apply(self, h):
        h = np.atleast_2d(h)
        return np.maximum(h @ self.w1 + self.b1, 0.0) @ self.w2 + self.b2

    def input_grad(self, h, upstream):
        """d(upstream . output)/dh for each row of h."""
        h = np.atleast_2d(h)
        z = h @ self.w1 + self.b1
        return ((upstream @ self.w2.T) * (z > 0)) @ self.w1.T

    @classmethod
    def identity(cls, d):
        """Exact identity map: relu(x) - relu(-x) = x.  Test scaffolding
        and a sane default before any fitting has happened."""
        eye = np.eye(d)
        return cls(w1=np.hstack([eye, -eye]), b1=np.zeros(2 * d),
                   w2=np.vstack([eye, -eye]), b2=np.zeros(d))

    @classmethod
    def random(cls, rng, d_in, d_hidden, d_out):
        s1 = np.sqrt(6.0 / (d_in + d_hidden))
        s2 = np.sqrt(6.0 / (d_hidden + d_out))
        return cls(w1=rng.uniform(-s1, s1, (d_in, d_hidden)), b1=np.zeros(d_hidden),
                   w2=rng.uniform(-s2, s2, (d_hidden, d_out)), b2=np.zeros(d_out))


@dataclass
class ConnectModel:
    """Link scorer.  "inner-product" scores full embeddings directly;
    "adaptor-mlp" factorizes into per-channel adaptors whose outputs are
    dotted and summed:  M_po(h_i_po) . M_po(h_j_po) + M_in(h_i_in) . M_in(h_j_in).
    """

    kind: str
    adaptor_po: Adaptor | None = None
    adaptor_in: Adaptor | None = None

    def __post_init__(self):
        if self.kind not in CONNECT_KINDS:
            raise ConfigError(f"unknown connect kind {self.kind!r}")
        if self.kind == "adaptor-mlp" and (self.adaptor_po is None or self.adaptor_in is None):
            raise ConfigError("adaptor-mlp connect model needs both adaptors")


def adaptor_components(e, m):
    """Per-node adaptor outputs (U_po, U_in); the factorized score is
    S[i, j] = U_po[i] . U_po[j] + U_in[i] . U_in[j]."""
    if m.kind != "adaptor-mlp":
        raise ConfigError("adaptor components require an adaptor-mlp connect model")
    return m.adaptor_po.apply(e.polarized), m.adaptor_in.apply(e.invariant)


def connect_score_rows(e, m, anchors=None):
    """Score rows against every node.  anchors=None scores all pairs."""
    if m.kind == "inner-product":
        full = e.full
        left = full if anchors is None else full[anchors]
        return left @ full.T
    u_po, u_in = adaptor_components(e, m)
    left_po = u_po if anchors is None else u_po[anchors]
    left_in = u_in if anchors is None else u_in[anchors]
    return left_po @ u_po.T + left_in @ u_in.T


def connect_score(e, i, j, m):
    row = connect_score_rows(e, m, anchors=np.array([i]))
    return float(row[0, j])


def _margin_step(adaptor, h_src, h_dst, h_src_neg, h_dst_neg, active, lr):
    """One gradient step of the pairwise margin loss for one channel.

    loss = mean(max(0, 1 - s_pos + s_neg)) with s = M(a) . M(b); the
    other channel's contribution is an additive constant absorbed by the
    shared margin mask (``active``).
    """
    n = h_src.shape[0]
    scale = 1.0 / n

    def acc(a_rows, b_rows, sign):
        # d loss / d M(a) = sign * M(b) on active rows, and symmetrically.
        ua = np.maximum(a_rows @ adaptor.w1 + adaptor.b1, 0.0)
        ub_out = adaptor.apply(b_rows)
        upstream = sign * scale * active[:, None] * ub_out
        z = a_rows @ adaptor.w1 + adaptor.b1
        dz = (upstream @ adaptor.w2.T) * (z > 0)
        gw1 = a_rows.T @ dz
        gb1 = dz.sum(axis=0)
        gw2 = ua.T @ upstream
        gb2 = upstream.sum(axis=0)
        return gw1, gb1, gw2, gb2

    total = [np.zeros_like(adaptor.w1), np.zeros_like(adaptor.b1),
             np.zeros_like(adaptor.w2), np.zeros_like(adaptor.b2)]
    for a_rows, b_rows, sign in ((h_src, h_dst, -1.0), (h_dst, h_src, -1.0),
                                 (h_src_neg, h_dst_neg, 1.0), (h_dst_neg, h_src_neg, 1.0)):
        for t, g in zip(total, acc(a_rows, b_rows, sign)):
            t += g
    adaptor.w1 -= lr * total[0]
    adaptor.b1 -= lr * total[1]
    adaptor.w2 -= lr * total[2]
    adaptor.b2 -= lr * total[3]


def _input_scale(h):
    rms = float(np.sqrt((h * h).mean()))
    return 1.0 / rms if rms > 1e-12 else 1.0


def fit_connect(g, e, kind="adaptor-mlp", d_adapt=16, hidden=16, steps=60,
                lr=0.05, seed=0, max_edges=4096):
    """Fit a connect model to the observed edges.

    The adaptor-mlp variant trains both channel adaptors with a pairwise
    margin objective: observed edges should outscore sampled non-edges
    by 1.  Fitting happens on RMS-normalized embeddings (the effective
    step would otherwise grow with the squared embedding scale); the
    scalar is folded back into the input layer so the returned adaptors
    consume raw embeddings.  "inner-product" has nothing to fit and
    returns immediately.  Deterministic for a fixed seed.
    """
    if kind == "inner-product":
        return ConnectModel(kind="inner-product")
    if kind != "adaptor-mlp":
        raise ConfigError(f"unknown connect kind {kind!r}")
    rng = np.random.default_rng(seed)
    m = ConnectModel(
        kind="adaptor-mlp",
        adaptor_po=Adaptor.random(rng, e.polarized.shape[1], hidden, d_adapt),
        adaptor_in=Adaptor.random(rng, e.invariant.shape[1], hidden, d_adapt),
    )
    idx, _ = g.edge_index()
    if idx.shape[0] == 0:
        return m
    if idx.shape[0] > max_edges:
        keep = rng.choice(idx.shape[0], size=max_edges, replace=False)
        idx = idx[keep]
    s_po = _input_scale(e.polarized)
    s_in = _input_scale(e.invariant)
    h_po = e.polarized * s_po
    h_in = e.invariant * s_in
    src, dst = idx[:, 0], idx[:, 1]
    n = g.num_nodes
    for _ in range(steps):
        # resample non-edges each step; collisions with true edges are
        # rare enough at realistic densities to ignore
        neg_src = rng.integers(0, n, size=src.shape[0])
        neg_dst = rng.integers(0, n, size=src.shape[0])
        clash = neg_src == neg_dst
        neg_dst[clash] = (neg_dst[clash] + 1) % n
        u_po = m.adaptor_po.apply(h_po)
        u_in = m.adaptor_in.apply(h_in)
        s_pos = (u_po[src] * u_po[dst]).sum(axis=1) + (u_in[src] * u_in[dst]).sum(axis=1)
        s_neg = (u_po[neg_src] * u_po[neg_dst]).sum(axis=1) + (u_in[neg_src] * u_in[neg_dst]).sum(axis=1)
        active = (1.0 - s_pos + s_neg) > 0
        if not active.any():
            break
        _margin_step(m.adaptor_po, h_po[src], h_po[dst],
                     h_po[neg_src], h_po[neg_dst], active, lr)
        _margin_step(m.adaptor_in, h_in[src], h_in[dst],
                     h_in[neg_src], h_in[neg_dst], active, lr)
    m.adaptor_po.w1 *= s_po
    m.adaptor_in.w1 *= s_in
    return m


@dataclass
class AugmentationSpec:
    """Admissible rewrites of an anchor's polarized embedding.

    "perturbation" adds a shift vector bounded in the max norm by
    ``bound``; "interpolation" blends the anchor with another node's
    polarized embedding using fixed weights mix_a + mix_b = 1.
    """

    kind: str = "perturbation"
    bound: float = 1.0
    shift: np.ndarray | None = None
    mix_a: float = 0.5
    mix_b: float = 0.5

    def __post_init__(self):
        if self.kind not in AUGMENTATION_KINDS:
            raise ConfigError(f"unknown augmentation kind {self.kind!r}")
        if self.kind == "perturbation":
            if self.bound <= 0:
                raise ConfigError("perturbation bound must be positive")
            if self.shift is not None and np.max(np.abs(self.shift)) > self.bound + 1e-12:
                raise ConfigError("shift exceeds the perturbation bound")
        else:
            if abs(self.mix_a + self.mix_b - 1.0) > 1e-9:
                raise ConfigError("interpolation weights must sum to 1")


def augment(spec, h_po, other_po=None):
    """Apply the augmentation to one polarized embedding."""
    if spec.kind == "perturbation":
        shift = np.zeros_like(h_po) if spec.shift is None else spec.shift
        return h_po + shift
    if other_po is None:
        raise ValidationError("interpolation needs a second embedding")
    return spec.mix_a * h_po + spec.mix_b * other_po


@dataclass
class SamplerThresholds:
    """Low / high / invariant cutoffs.

    Each threshold is either absolute (``low`` etc.) or, when the
    absolute value is None, resolved per anchor as a quantile of that
    anchor's score distribution over all other nodes.
    """

    low: float | None = None
    high: float | None = None
    invariant_min: float | None = None
    low_quantile: float = 0.30
    high_quantile: float = 0.70
    invariant_quantile: float = 0.50

    def __post_init__(self):
        for name in ("low_quantile", "high_quantile", "invariant_quantile"):
            q = getattr(self, name)
            if not 0.0 <= q <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {q}")

    def resolve(self, scores):
        """(low, high) cutoffs for one anchor's score row."""
        low = self.low if self.low is not None else float(np.quantile(scores, self.low_quantile))
        high = self.high if self.high is not None else float(np.quantile(scores, self.high_quantile))
        if low > high:
            raise ConfigError(f"low threshold {low} exceeds high threshold {high}")
        return low, high

    def resolve_invariant(self, scores):
        if self.invariant_min is not None:
            return self.invariant_min
        return float(np.quantile(scores, self.invariant_quantile))


@dataclass
class SamplerConfig:
    """Everything the trainer needs to produce contrastive samples."""

    kind: str = "fast"
    connect: str = "adaptor-mlp"
    augmentation: str = "perturbation"
    bound: float = 1.0
    thresholds: SamplerThresholds = field(default_factory=SamplerThresholds)
    d_adapt: int = 16
    adapt_hidden: int = 16
    fit_steps: int = 60
    fit_lr: float = 0.05
    refit_every: int = 10
    mu_lr: float = 0.1
    ascent_steps: int = 5

    def __post_init__(self):
        if self.kind not in SAMPLER_KINDS:
            raise ConfigError(f"unknown sampler kind {self.kind!r}")
        if self.connect not in CONNECT_KINDS:
            raise ConfigError(f"unknown connect kind {self.connect!r}")
        if self.augmentation not in AUGMENTATION_KINDS:
            raise ConfigError(f"unknown augmentation kind {self.augmentation!r}")


def sample_positives(g, i):
    """Positive context = the anchor's neighbors."""
    return set(g.neighbors(i))


def _candidate_mask(g, i):
    mask = np.ones(g.num_nodes, dtype=bool)
    mask[i] = False
    for j in g.neighbors(i):
        mask[j] = False
    return mask


def _ascent_max_scores(e, m, i, cand, spec, steps):
    """Approximate max over the perturbation ball of the adaptor score,
    one independent shift per candidate, by projected sign-gradient
    ascent from zero."""
    u_po, u_in = adaptor_components(e, m)
    inv_part = u_in[cand] @ u_in[i]
    anchor = e.polarized[i]
    shifts = np.zeros((cand.size, anchor.size))
    step = spec.bound / steps
    for _ in range(steps):
        grad = m.adaptor_po.input_grad(anchor[None, :] + shifts, u_po[cand])
        shifts = np.clip(shifts + step * np.sign(grad), -spec.bound, spec.bound)
    po_part = (m.adaptor_po.apply(anchor[None, :] + shifts) * u_po[cand]).sum(axis=1)
    return po_part + inv_part


def sample_negatives_exact(g, i, e, m, thresholds, spec, ascent_steps=5):
    """Exact silence criterion for one anchor.

    Thresholds are resolved on the anchor's score row over all other
    nodes.  For inner-product scores with a perturbation family the
    inner maximum is closed form (base + bound * l1(h_j_po)); adaptor
    scores fall back to sign-gradient ascent.  Interpolation has no
    per-candidate maximization target and is rejected here.
    """
    if spec.kind != "perturbation":
        raise ConfigError("the exact sampler supports only the perturbation family")
    scores = connect_score_rows(e, m, anchors=np.array([i]))[0]
    others = np.arange(g.num_nodes) != i
    low, high = thresholds.resolve(scores[others])
    mask = _candidate_mask(g, i)
    mask &= scores < low
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        return set()
    if m.kind == "inner-product":
        best = scores[cand] + spec.bound * np.abs(e.polarized[cand]).sum(axis=1)
    else:
        best = _ascent_max_scores(e, m, i, cand, spec, ascent_steps)
    return set(cand[best > high].tolist())


def sample_negatives_fast(g, i, e, m, thresholds):
    """Factorized criterion for one anchor: total score below the low
    cutoff while the invariant channel alone clears its cutoff."""
    s_po, s_in = factorized_score_rows(e, m, anchors=np.array([i]))
    return _fast_from_scores(g, i, s_po[0], s_in[0], thresholds)


def factorized_score_rows(e, m, anchors=None):
    """Per-channel score rows (polarized part, invariant part)."""
    u_po, u_in = adaptor_components(e, m)
    left_po = u_po if anchors is None else u_po[anchors]
    left_in = u_in if anchors is None else u_in[anchors]
    return left_po @ u_po.T, left_in @ u_in.T


def _fast_from_scores(g, i, row_po, row_in, thresholds):
    total = row_po + row_in
    others = np.arange(g.num_nodes) != i
    low, _ = thresholds.resolve(total[others])
    inv_min = thresholds.resolve_invariant(row_in[others])
    mask = _candidate_mask(g, i)
    mask &= total < low
    mask &= row_in > inv_min
    return set(np.flatnonzero(mask).tolist())


def sample_negatives_fast_all(g, e, m, thresholds):
    """Fast criterion for every anchor at once; returns a list of sets.

    Score tables are computed once and the per-anchor quantiles resolve
    in a single row-wise call (bitwise identical to resolving each
    anchor's row alone), which is what makes the factorized path cheap
    inside the training loop.
    """
    if (thresholds.low is not None and thresholds.high is not None
            and thresholds.low > thresholds.high):
        raise ConfigError(f"low threshold {thresholds.low} exceeds "
                          f"high threshold {thresholds.high}")
    s_po, s_in = factorized_score_rows(e, m)
    n = g.num_nodes
    total = s_po + s_in
    off_diag = ~np.eye(n, dtype=bool)
    if thresholds.low is not None:
        low = np.full(n, thresholds.low)
    else:
        low = np.quantile(total[off_diag].reshape(n, n - 1),
                          thresholds.low_quantile, axis=1)
    if thresholds.invariant_min is not None:
        inv_min = np.full(n, thresholds.invariant_min)
    else:
        inv_min = np.quantile(s_in[off_diag].reshape(n, n - 1),
                              thresholds.invariant_quantile, axis=1)
    keep = off_diag & (total < low[:, None]) & (s_in > inv_min[:, None])
    for i in range(n):
        keep[i, list(g.neighbors(i))] = False
    return [set(np.flatnonzero(keep[i]).tolist()) for i in range(n)]


def sample_negatives_random(g, i, rng, count):
    """Uniform non-neighbors; the ablation stand-in for the silence
    criterion."""
    mask = _candidate_mask(g, i)
    cand = np.flatnonzero(mask)
    if cand.size == 0:
        return set()
    take = min(count, cand.size)
    return set(rng.choice(cand, size=take, replace=False).tolist())
