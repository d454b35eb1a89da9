"""Optional supervision on top of the self-supervised encoders.

Two regimes, chosen by labeled fraction: above 5 percent of nodes a
logistic classifier is fit on the frozen embeddings and replaces
clustering; at or below that, the labels act as anchors inside the
training objective (see objectives.supervised_anchor_grads) and
clustering stays in charge.

Prompt tuning adapts a frozen encoder to labels without touching its
weights: a small set of learnable prompt feature rows is appended to
the graph, each prompt is wired to the nodes it scores highest against
under the connect model (edges recomputed every epoch as the prompt
moves), and the prompt features are optimized so labeled nodes sit
close to their class prompt in polarized space.  Gradients reach the
prompt features through the encoder input; encoder weights stay frozen.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .encoder import EmbeddingPair, backward, encode, encode_with_cache
from .errors import ConfigError, FitError, ValidationError
from .graph import EdgeRecord, build_graph, normalized_adjacency
from .objectives import supervised_anchor_grads
from .sampler import connect_score_rows

CLASSIFIER_FRACTION = 0.05


def choose_supervision_path(label_fraction):
    """"classifier" strictly above 5 percent labeled, else "semi-objective"."""
    if not 0.0 <= label_fraction <= 1.0:
        raise ValidationError(f"label fraction must lie in [0, 1], got {label_fraction}")
    return "classifier" if label_fraction > CLASSIFIER_FRACTION else "semi-objective"


@dataclass
class LinearClassifier:
    weights: np.ndarray
    bias: float

    def scores(self, h):
        return h @ self.weights + self.bias

    def predict(self, h):
        return (self.scores(h) > 0).astype(np.int64)

    def accuracy(self, h, labels):
        idx = np.array(sorted(labels), dtype=np.int64)
        y = np.array([labels[i] for i in idx])
        return float((self.predict(h[idx]) == y).mean())


def train_classifier(h, labels, seed=0, lr=0.5, steps=500, l2=1e-4):
    """Logistic regression by full-batch gradient descent on the frozen
    embeddings.  Deterministic for a fixed seed; requires both classes."""
    if not labels:
        raise FitError("no labels to fit")
    idx = np.array(sorted(labels), dtype=np.int64)
    y = np.array([labels[i] for i in idx], dtype=np.float64)
    if y.min() == y.max():
        raise FitError("classifier fitting needs both classes present")
    features = h[idx]
    rng = np.random.default_rng(seed)
    w = 0.01 * rng.standard_normal(features.shape[1])
    b = 0.0
    n = features.shape[0]
    for _ in range(steps):
        p = expit(features @ w + b)
        err = p - y
        gw = features.T @ err / n + l2 * w
        gb = float(err.mean())
        w -= lr * gw
        b -= lr * gb
    return LinearClassifier(weights=w, bias=b)


@dataclass
class PromptSet:
    """Learnable feature rows, one per class, plus induction degree."""

    features: np.ndarray  # (P, d_x)
    k_induced: int = 10

    @property
    def count(self):
        return self.features.shape[0]


def make_prompts(g, labels, k_induced=10):
    """Initialize one prompt per class at the labeled class feature mean
    (global mean when a class has no labeled nodes)."""
    if k_induced < 1:
        raise ConfigError("k_induced must be at least 1")
    if g.heterogeneous:
        raise ConfigError("prompt tuning supports homogeneous user graphs only")
    x = g.x
    overall = x.mean(axis=0)
    feats = np.zeros((2, x.shape[1]))
    for k in (0, 1):
        members = [i for i, c in (labels or {}).items() if c == k]
        feats[k] = x[members].mean(axis=0) if members else overall
    return PromptSet(features=feats.copy(), k_induced=k_induced)


def _isolated_embedding(features, params):
    """Encode rows as isolated nodes: the normalized adjacency of a
    lone node is the 1x1 identity, so propagation reduces to the two
    weight layers."""
    w1, w2 = params.w1_po, params.w2_po
    if params.signed:
        h1 = np.maximum(features @ w1, 0.0)
        h_po = np.hstack([h1, h1]) @ w2
        h1i = np.maximum(features @ params.w1_in, 0.0)
        h_in = np.hstack([h1i, h1i]) @ params.w2_in
    else:
        h_po = np.maximum(features @ w1, 0.0) @ w2
        h_in = np.maximum(features @ params.w1_in, 0.0) @ params.w2_in
    return h_po, h_in


def induced_edges(g, e, m, prompts, params):
    """Top-k connect scores between each prompt (encoded in isolation)
    and the real nodes; deterministic ties break toward lower node id."""
    if prompts.k_induced >= g.num_nodes:
        raise ConfigError("k_induced must be smaller than the node count")
    p_po, p_in = _isolated_embedding(prompts.features, params)
    stacked = EmbeddingPair(np.vstack([e.polarized, p_po]),
                            np.vstack([e.invariant, p_in]))
    n = g.num_nodes
    anchors = np.arange(n, n + prompts.count)
    rows = connect_score_rows(stacked, m, anchors=anchors)[:, :n]
    edges = []
    for p in range(prompts.count):
        order = np.lexsort((np.arange(n), -rows[p]))
        for j in order[:prompts.k_induced]:
            edges.append(EdgeRecord(n + p, int(j), "uu", "0", 1.0))
    return edges


def attach_prompts(g, e, m, prompts, params):
    """Non-destructive: returns a new graph with prompt nodes appended
    and wired by induced_edges.  Prompt rows get uniform initial
    assignment; labels are untouched."""
    if g.heterogeneous:
        raise ConfigError("prompt tuning supports homogeneous user graphs only")
    edges = list(g.edges) + induced_edges(g, e, m, prompts, params)
    x = np.vstack([g.x, prompts.features])
    kind = np.concatenate([g.node_kind, np.zeros(prompts.count, dtype=np.int8)])
    r0 = g.r0
    if r0 is not None:
        r0 = np.vstack([r0, np.full((prompts.count, 2), 0.5)])
    return build_graph(g.num_nodes + prompts.count, edges, x,
                       labels=g.labels, r0=r0, node_kind=kind)


@dataclass
class PromptTuneResult:
    prompts: PromptSet
    history: list
    accuracy_before: float
    accuracy_after: float


def prompt_accuracy(pair, labels, num_real):
    """Classify labeled nodes by nearest prompt in polarized space
    (prompt k stands for class k)."""
    idx = np.array(sorted(labels), dtype=np.int64)
    y = np.array([labels[i] for i in idx])
    d0 = np.linalg.norm(pair.polarized[idx] - pair.polarized[num_real], axis=1)
    d1 = np.linalg.norm(pair.polarized[idx] - pair.polarized[num_real + 1], axis=1)
    pred = (d1 < d0).astype(np.int64)
    return float((pred == y).mean())


def prompt_tune(params, g, prompts, labels, m, epochs=30, lr=0.05,
                adjacency="unsigned"):
    """Tune prompt features against a frozen encoder.

    Each epoch rebuilds the induced edges from the current prompt
    features, encodes the extended graph, measures how far each labeled
    node sits from its class prompt, and descends that objective through
    the encoder's input gradient, updating only the prompt rows.
    """
    if not labels:
        raise FitError("prompt tuning needs labeled nodes")
    if epochs < 0:
        raise ConfigError("epochs must be non-negative")
    prompts = PromptSet(features=prompts.features.copy(), k_induced=prompts.k_induced)
    n = g.num_nodes
    base_adj = normalized_adjacency(g, variant=adjacency)
    base_pair = encode(base_adj, g.encoder_features(), params)
    history = []
    acc_before = None
    for epoch in range(epochs + 1):
        extended = attach_prompts(g, base_pair, m, prompts, params)
        adj = normalized_adjacency(extended, variant=adjacency)
        pair, cache = encode_with_cache(adj, extended.encoder_features(), params)
        acc = prompt_accuracy(pair, labels, n)
        if acc_before is None:
            acc_before = acc
        if epoch == epochs:
            history.append({"epoch": epoch, "accuracy": acc})
            return PromptTuneResult(prompts=prompts, history=history,
                                    accuracy_before=acc_before, accuracy_after=acc)
        centroids = pair.polarized[n:n + 2]
        loss, g_po = supervised_anchor_grads(pair, labels, centroids)
        # pull each class prompt toward its labeled nodes as well
        for k in (0, 1):
            members = np.array([i for i, c in labels.items() if c == k], dtype=np.int64)
            if members.size == 0:
                continue
            diff = pair.polarized[n + k] - pair.polarized[members]
            d = np.linalg.norm(diff, axis=1)
            safe = np.where(d > 0, d, 1.0)
            g_po[n + k] += (diff / safe[:, None]).sum(axis=0)
        grads = backward(adj, cache, params, d_po=g_po, need_input_grad=True)
        dx = grads["x"]
        prompts.features -= lr * dx[n:]
        history.append({"epoch": epoch, "loss": loss, "accuracy": acc})
