"""Contrastive objectives and the alternating training loop.

Two losses drive self-supervision:

* interaction loss, a ratio form over (anchor, positive, negative)
  triples of polarized embeddings,

      mean  d(h_a, h_p) / (d(h_a, h_p) + d(h_a, h_n) + eps)

  pulling engaged pairs together relative to silent ones; and

* feature loss, over ordered node pairs,

      sum  d(h_i_po, h_j_po) / (d(h_i_in, h_j_in) + eps)

  whose maximization decouples the polarized geometry from the
  invariant one.

The trainer minimizes

    interaction - feature_weight * feature_mean + anchor_weight * anchors

where ``feature_mean`` is the feature loss divided by the number of
sampled pairs and ``anchors`` holds the per-node means of the optional
supervision terms (both normalizations keep one scale across graph
sizes): labeled nodes are pulled to their class centroids once warmup
ends, initial-assignment anchoring is active only during warmup.
Warmup epochs train on the feature term (plus anchors) alone;
interaction sampling starts after.  Even epochs update the polarized
tower, odd epochs the invariant one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .clustering import centers_from_assignment, centers_from_labels
from .encoder import backward, encode, encode_with_cache, init_params
from .errors import ConfigError, DegenerateDataError, TrainingError
from .graph import normalized_adjacency
from .sampler import (AugmentationSpec, SamplerConfig, fit_connect,
                      sample_negatives_exact, sample_negatives_fast_all,
                      sample_negatives_random)

DISTANCE_KINDS = ("euclidean", "cosine")


@dataclass
class LossConfig:
    feature_weight: float = 1.0
    anchor_weight: float = 4.0
    eps: float = 1e-8
    n_neg: int = 5
    pairs_per_node: int = 10
    interaction_distance: str = "euclidean"
    feature_distance: str = "euclidean"

    def __post_init__(self):
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.anchor_weight < 0:
            raise ConfigError("anchor_weight must be non-negative")
        if self.n_neg < 1:
            raise ConfigError("n_neg must be at least 1")
        if self.pairs_per_node < 1:
            raise ConfigError("pairs_per_node must be at least 1")
        for name in ("interaction_distance", "feature_distance"):
            if getattr(self, name) not in DISTANCE_KINDS:
                raise ConfigError(f"unknown distance kind {getattr(self, name)!r}")


@dataclass
class ContrastiveSampleSet:
    """Per-anchor positive and negative index arrays."""

    positives: list
    negatives: list


def _pair_distance_grads(a, b, kind):
    """Rowwise distance between a[r] and b[r] plus gradients w.r.t. both.

    Euclidean uses (a-b)/d with a zero subgradient at coincident points;
    cosine distance is 1 - cos with norms floored at 1e-12.
    """
    if kind == "euclidean":
        diff = a - b
        d = np.sqrt((diff * diff).sum(axis=1))
        safe = np.where(d > 0, d, 1.0)
        ga = diff / safe[:, None]
        ga[d == 0] = 0.0
        return d, ga, -ga
    na = np.maximum(np.linalg.norm(a, axis=1), 1e-12)
    nb = np.maximum(np.linalg.norm(b, axis=1), 1e-12)
    dot = (a * b).sum(axis=1)
    cos = dot / (na * nb)
    ga = -(b / (na * nb)[:, None] - (cos / na ** 2)[:, None] * a)
    gb = -(a / (na * nb)[:, None] - (cos / nb ** 2)[:, None] * b)
    return 1.0 - cos, ga, gb


def _triple_arrays(samples):
    anchors, pos, neg = [], [], []
    for i, (p, n) in enumerate(zip(samples.positives, samples.negatives)):
        p = np.asarray(p, dtype=np.int64)
        n = np.asarray(n, dtype=np.int64)
        if p.size == 0 or n.size == 0:
            continue
        pp = np.repeat(p, n.size)
        nn = np.tile(n, p.size)
        anchors.append(np.full(pp.size, i, dtype=np.int64))
        pos.append(pp)
        neg.append(nn)
    if not anchors:
        raise DegenerateDataError("no anchor has both positives and negatives")
    return np.concatenate(anchors), np.concatenate(pos), np.concatenate(neg)


def interaction_grads(e, samples, cfg):
    """Interaction loss and its gradient on the polarized embeddings."""
    a, p, n = _triple_arrays(samples)
    h = e.polarized
    d_pos, ga_pos, gp = _pair_distance_grads(h[a], h[p], cfg.interaction_distance)
    d_neg, ga_neg, gn = _pair_distance_grads(h[a], h[n], cfg.interaction_distance)
    denom = d_pos + d_neg + cfg.eps
    terms = d_pos / denom
    loss = float(terms.mean())
    t = terms.size
    c_pos = ((d_neg + cfg.eps) / denom ** 2 / t)[:, None]
    c_neg = (-d_pos / denom ** 2 / t)[:, None]
    grad = np.zeros_like(h)
    np.add.at(grad, a, c_pos * ga_pos + c_neg * ga_neg)
    np.add.at(grad, p, c_pos * gp)
    np.add.at(grad, n, c_neg * gn)
    return loss, grad


def interaction_loss(e, samples, cfg):
    loss, _ = interaction_grads(e, samples, cfg)
    return loss


def feature_grads(e, pairs, cfg):
    """Feature loss (a sum over the given ordered pairs) and gradients on
    both embedding tables."""
    pairs = np.asarray(pairs, dtype=np.int64)
    if pairs.ndim != 2 or pairs.shape[1] != 2 or pairs.shape[0] == 0:
        raise DegenerateDataError("feature loss needs a non-empty (n, 2) pair array")
    if (pairs[:, 0] == pairs[:, 1]).any():
        raise DegenerateDataError("feature-loss pairs must join distinct nodes")
    i, j = pairs[:, 0], pairs[:, 1]
    d_po, gi_po, gj_po = _pair_distance_grads(e.polarized[i], e.polarized[j],
                                              cfg.feature_distance)
    d_in, gi_in, gj_in = _pair_distance_grads(e.invariant[i], e.invariant[j],
                                              cfg.feature_distance)
    denom = d_in + cfg.eps
    loss = float((d_po / denom).sum())
    c_po = (1.0 / denom)[:, None]
    c_in = (-d_po / denom ** 2)[:, None]
    grad_po = np.zeros_like(e.polarized)
    grad_in = np.zeros_like(e.invariant)
    np.add.at(grad_po, i, c_po * gi_po)
    np.add.at(grad_po, j, c_po * gj_po)
    np.add.at(grad_in, i, c_in * gi_in)
    np.add.at(grad_in, j, c_in * gj_in)
    return loss, grad_po, grad_in


def feature_loss(e, pairs, cfg):
    loss, _, _ = feature_grads(e, pairs, cfg)
    return loss


def supervised_anchor_grads(e, labels, centroids):
    """Sum of distances from labeled polarized embeddings to their class
    centroid (centroids held fixed), with gradient."""
    if not labels:
        return 0.0, np.zeros_like(e.polarized)
    idx = np.array(sorted(labels), dtype=np.int64)
    cls = np.array([labels[i] for i in idx], dtype=np.int64)
    diff = e.polarized[idx] - centroids[cls]
    d = np.sqrt((diff * diff).sum(axis=1))
    safe = np.where(d > 0, d, 1.0)
    g = diff / safe[:, None]
    g[d == 0] = 0.0
    grad = np.zeros_like(e.polarized)
    np.add.at(grad, idx, g)
    return float(d.sum()), grad


def supervised_anchor_loss(e, labels, centroids):
    loss, _ = supervised_anchor_grads(e, labels, centroids)
    return loss


def assignment_anchor_grads(e, r0, centroids):
    """Soft anchoring to an initial assignment: sum_i sum_k r0[i, k] *
    ||h_i - mu_k|| with fixed centroids, plus gradient."""
    grad = np.zeros_like(e.polarized)
    loss = 0.0
    for k in range(centroids.shape[0]):
        diff = e.polarized - centroids[k]
        d = np.sqrt((diff * diff).sum(axis=1))
        safe = np.where(d > 0, d, 1.0)
        g = diff / safe[:, None]
        g[d == 0] = 0.0
        loss += float((r0[:, k] * d).sum())
        grad += r0[:, k, None] * g
    return loss, grad


def assignment_anchor_loss(e, r0, centroids):
    loss, _ = assignment_anchor_grads(e, r0, centroids)
    return loss


@dataclass
class Supervision:
    """Optional anchors for training: a (possibly partial) label dict
    used as semi-supervised anchors, and/or an initial soft assignment
    used during warmup."""

    labels: dict | None = None
    r0: np.ndarray | None = None


@dataclass
class TrainConfig:
    epochs: int = 200
    init_epochs: int = 20
    lr: float = 0.01
    momentum: float = 0.9
    seed: int = 0
    d_h: int = 64
    d_po: int = 32
    d_in: int = 32
    adjacency: str = "unsigned"
    grad_clip: float = 10.0
    early_stop_tol: float = 1e-4
    early_stop_window: int = 10
    alternate: bool = True
    use_interaction: bool = True
    use_feature: bool = True

    def __post_init__(self):
        if self.epochs < 0 or self.init_epochs < 0:
            raise ConfigError("epoch counts must be non-negative")
        if self.lr <= 0:
            raise ConfigError("learning rate must be positive")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must lie in [0, 1)")
        if self.early_stop_window < 1:
            raise ConfigError("early_stop_window must be at least 1")
        if self.adjacency not in ("unsigned", "signed", "auto"):
            raise ConfigError(f"unknown adjacency variant {self.adjacency!r}")


@dataclass
class TrainHistory:
    interaction: list = field(default_factory=list)
    feature: list = field(default_factory=list)
    anchors: list = field(default_factory=list)
    total: list = field(default_factory=list)
    seconds: list = field(default_factory=list)

    def rows(self):
        return [
            {"epoch": i, "interaction": self.interaction[i], "feature": self.feature[i],
             "anchors": self.anchors[i], "total": self.total[i], "seconds": self.seconds[i]}
            for i in range(len(self.total))
        ]


@dataclass
class TrainResult:
    params: object
    embeddings: object
    history: TrainHistory
    epochs_run: int
    stopped_early: bool


def _child_seed(seed, stream):
    return int(np.random.SeedSequence([int(seed), int(stream)]).generate_state(1)[0])


def _clip_gradients(grads, names, clip):
    if clip is None or clip <= 0:
        return
    total = np.sqrt(sum(float((grads[n] ** 2).sum()) for n in names))
    if total > clip:
        scale = clip / total
        for n in names:
            grads[n] = grads[n] * scale


def _epoch_negatives(g, e, sampler_cfg, connect, rng, n_neg):
    if sampler_cfg.kind == "random":
        return [sample_negatives_random(g, i, rng, n_neg) for i in range(g.num_nodes)]
    if sampler_cfg.kind == "fast":
        return sample_negatives_fast_all(g, e, connect, sampler_cfg.thresholds)
    spec = AugmentationSpec(kind=sampler_cfg.augmentation, bound=sampler_cfg.bound)
    return [sample_negatives_exact(g, i, e, connect, sampler_cfg.thresholds, spec,
                                   ascent_steps=sampler_cfg.ascent_steps)
            for i in range(g.num_nodes)]


def train(g, cfg=None, loss_cfg=None, sampler_cfg=None, supervision=None):
    """Alternating momentum-SGD training of the twin encoders.

    Deterministic for a fixed ``cfg.seed``: encoder init, connect
    fitting, negative subsampling and pair sampling each draw from their
    own stream derived from it.  With ``epochs == 0`` the initialized
    parameters and their embeddings are returned untouched.  Stops early
    once the total objective moves less than ``early_stop_tol``
    (relative) across ``early_stop_window`` epochs after warmup.
    """
    cfg = cfg or TrainConfig()
    loss_cfg = loss_cfg or LossConfig()
    sampler_cfg = sampler_cfg or SamplerConfig()
    labels = supervision.labels if supervision and supervision.labels else None
    r0 = supervision.r0 if supervision is not None else None

    adj = normalized_adjacency(g, variant=cfg.adjacency)
    x = g.encoder_features()
    params = init_params(x.shape[1], cfg.d_h, cfg.d_po, cfg.d_in,
                         seed=_child_seed(cfg.seed, 0), signed=(adj.variant == "signed"))
    velocity = {n: np.zeros_like(a) for n, a in params.as_dict().items()}
    neg_rng = np.random.default_rng(_child_seed(cfg.seed, 2))
    pair_rng = np.random.default_rng(_child_seed(cfg.seed, 3))
    connect_seed = _child_seed(cfg.seed, 1)

    pos_arrays = [np.fromiter(g.neighbors(i), dtype=np.int64)
                  for i in range(g.num_nodes)]
    n = g.num_nodes
    history = TrainHistory()
    connect = None
    stopped = False
    epoch = 0

    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        pair, cache = encode_with_cache(adj, x, params)
        if not (np.isfinite(pair.polarized).all() and np.isfinite(pair.invariant).all()):
            raise TrainingError(f"non-finite embeddings at epoch {epoch}")

        warmup = cfg.use_feature and epoch < cfg.init_epochs
        d_po = np.zeros_like(pair.polarized)
        d_in = np.zeros_like(pair.invariant)
        li_val = 0.0
        lf_val = 0.0
        anchor_val = 0.0
        total = 0.0

        if cfg.use_interaction and not warmup:
            if sampler_cfg.kind != "random" and (
                    connect is None or (sampler_cfg.refit_every > 0
                                        and epoch % max(1, sampler_cfg.refit_every) == 0)):
                connect = fit_connect(g, pair, kind=sampler_cfg.connect,
                                      d_adapt=sampler_cfg.d_adapt,
                                      hidden=sampler_cfg.adapt_hidden,
                                      steps=sampler_cfg.fit_steps,
                                      lr=sampler_cfg.fit_lr, seed=connect_seed)
            negatives = _epoch_negatives(g, pair, sampler_cfg, connect,
                                         neg_rng, loss_cfg.n_neg)
            trimmed = []
            for i in range(n):
                cand = np.fromiter(negatives[i], dtype=np.int64)
                if cand.size > loss_cfg.n_neg:
                    cand = np.sort(neg_rng.choice(cand, size=loss_cfg.n_neg, replace=False))
                trimmed.append(cand)
            samples = ContrastiveSampleSet(positives=pos_arrays, negatives=trimmed)
            try:
                li_val, g_po = interaction_grads(pair, samples, loss_cfg)
                d_po += g_po
                total += li_val
            except DegenerateDataError:
                li_val = 0.0  # nothing to contrast this epoch; keep going

        if cfg.use_feature:
            n_pairs = loss_cfg.pairs_per_node * n
            left = pair_rng.integers(0, n, size=n_pairs)
            shift = pair_rng.integers(1, n, size=n_pairs)
            right = (left + shift) % n
            pairs = np.stack([left, right], axis=1)
            lf_sum, gf_po, gf_in = feature_grads(pair, pairs, loss_cfg)
            lf_val = lf_sum / n_pairs
            d_po -= loss_cfg.feature_weight / n_pairs * gf_po
            d_in -= loss_cfg.feature_weight / n_pairs * gf_in
            total -= loss_cfg.feature_weight * lf_val

        w_anchor = loss_cfg.anchor_weight / n  # per-node mean keeps anchors from drowning the rest
        if labels and not warmup:
            centroids = centers_from_labels(pair.polarized, labels)
            ln_sum, g_sup = supervised_anchor_grads(pair, labels, centroids)
            d_po += w_anchor * g_sup
            anchor_val += w_anchor * ln_sum
            total += w_anchor * ln_sum

        if r0 is not None and warmup:
            centroids0 = centers_from_assignment(pair.polarized, r0)
            lc_sum, g_r0 = assignment_anchor_grads(pair, r0, centroids0)
            d_po += w_anchor * g_r0
            anchor_val += w_anchor * lc_sum
            total += w_anchor * lc_sum

        if cfg.alternate:
            update_po = epoch % 2 == 0
            update_in = not update_po
        else:
            update_po = update_in = True
        grads = backward(adj, cache, params,
                         d_po=d_po if update_po else None,
                         d_in=d_in if update_in else None)
        names = []
        if update_po:
            names += ["w1_po", "w2_po"]
        if update_in:
            names += ["w1_in", "w2_in"]
        _clip_gradients(grads, names, cfg.grad_clip)
        for name in names:
            if not np.isfinite(grads[name]).all():
                raise TrainingError(f"non-finite gradient for {name} at epoch {epoch}")
            velocity[name] = cfg.momentum * velocity[name] - cfg.lr * grads[name]
            getattr(params, name)[...] += velocity[name]

        history.interaction.append(li_val)
        history.feature.append(lf_val)
        history.anchors.append(anchor_val)
        history.total.append(total)
        history.seconds.append(time.perf_counter() - t0)

        lookback = epoch - cfg.early_stop_window
        if lookback >= cfg.init_epochs and epoch >= cfg.init_epochs + cfg.early_stop_window:
            then = history.total[lookback]
            if abs(total - then) < cfg.early_stop_tol * max(1.0, abs(then)):
                stopped = True
                break

    final = encode(adj, x, params)
    epochs_run = 0 if cfg.epochs == 0 else epoch + 1
    return TrainResult(params=params, embeddings=final, history=history,
                       epochs_run=epochs_run, stopped_early=stopped)
