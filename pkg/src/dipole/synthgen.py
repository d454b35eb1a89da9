"""Synthetic polarized-graph generator.

Two equally sized blocks with opposite feature signal, optional
neutral nodes sitting between them, optional irrelevant nodes with a
displaced background, and an Erdos-Renyi generator matched in expected
density for unpolarized controls.

Block nodes draw intra-block edges with probability p_intra and
inter-block edges with p_inter; inter-block edges are marked hostile
(sign "-") with probability hostile_frac.  Neutral nodes attach to both
blocks at the average rate, irrelevant nodes attach sparsely anywhere.

Features are unit-variance Gaussians.  The first ceil(d_x / 2)
dimensions carry the class signal (means +-signal/2), the rest share a
common background mean; irrelevant nodes get that background shifted by
irrelevant_offset per dimension so their invariant profile stands
apart.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GraphParseError, ValidationError
from .graph import EdgeRecord, build_graph, save_graph


@dataclass
class SynthConfig:
    n_per_class: int = 500
    p_intra: float = 0.02
    p_inter: float = 0.002
    hostile_frac: float = 0.0
    neutral_frac: float = 0.0
    irrelevant_frac: float = 0.0
    d_x: int = 16
    signal: float = 3.0
    irrelevant_offset: float = 4.0
    seed: int = 0

    def __post_init__(self):
        if self.n_per_class < 2:
            raise ConfigError(f"n_per_class must be at least 2, got {self.n_per_class}")
        for name in ("p_intra", "p_inter", "hostile_frac", "neutral_frac", "irrelevant_frac"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {v}")
        if self.d_x < 2:
            raise ConfigError(f"d_x must be at least 2, got {self.d_x}")
        if self.signal < 0:
            raise ConfigError(f"signal must be non-negative, got {self.signal}")
        if self.irrelevant_offset < 0:
            raise ConfigError(f"irrelevant_offset must be non-negative, got {self.irrelevant_offset}")

    @property
    def counts(self):
        n = self.n_per_class
        nn = int(round(self.neutral_frac * 2 * n))
        ni = int(round(self.irrelevant_frac * 2 * n))
        return n, nn, ni

    @property
    def num_nodes(self):
        n, nn, ni = self.counts
        return 2 * n + nn + ni


@dataclass
class SynthResult:
    graph: object
    labels: dict           # block nodes only
    neutral: np.ndarray    # ground-truth flags over all nodes
    irrelevant: np.ndarray


def _pairs_within(rng, ids, p):
    if len(ids) < 2 or p == 0.0:
        return []
    iu, ju = np.triu_indices(len(ids), k=1)
    keep = rng.random(iu.size) < p
    return list(zip(ids[iu[keep]], ids[ju[keep]]))


def _pairs_between(rng, left, right, p):
    if len(left) == 0 or len(right) == 0 or p == 0.0:
        return []
    grid_i, grid_j = np.meshgrid(left, right, indexing="ij")
    keep = rng.random(grid_i.shape) < p
    return list(zip(grid_i[keep], grid_j[keep]))


def generate(cfg):
    """Build one synthetic instance.  Deterministic for a fixed seed."""
    rng = np.random.default_rng(cfg.seed)
    n, nn, ni = cfg.counts
    total = cfg.num_nodes
    block0 = np.arange(n)
    block1 = np.arange(n, 2 * n)
    neutral_ids = np.arange(2 * n, 2 * n + nn)
    irr_ids = np.arange(2 * n + nn, total)

    d_sig = (cfg.d_x + 1) // 2
    base = rng.standard_normal(cfg.d_x - d_sig)
    means = np.zeros((total, cfg.d_x))
    means[:, d_sig:] = base
    means[block0, :d_sig] = cfg.signal / 2.0
    means[block1, :d_sig] = -cfg.signal / 2.0
    means[irr_ids, d_sig:] = base + cfg.irrelevant_offset
    x = means + rng.standard_normal((total, cfg.d_x))

    p_mix = 0.5 * (cfg.p_intra + cfg.p_inter)
    core = np.concatenate([block0, block1])
    plain = []
    plain += _pairs_within(rng, block0, cfg.p_intra)
    plain += _pairs_within(rng, block1, cfg.p_intra)
    inter = _pairs_between(rng, block0, block1, cfg.p_inter)
    plain += _pairs_between(rng, neutral_ids, core, p_mix)
    plain += _pairs_within(rng, neutral_ids, cfg.p_inter)
    plain += _pairs_between(rng, irr_ids, np.arange(2 * n + nn), cfg.p_inter)

    edges = [EdgeRecord(int(a), int(b), "uu", "0", 1.0) for a, b in plain]
    if inter:
        hostile = rng.random(len(inter)) < cfg.hostile_frac
        edges += [EdgeRecord(int(a), int(b), "uu", "-" if h else "0", 1.0)
                  for (a, b), h in zip(inter, hostile)]

    labels = {int(i): 0 for i in block0}
    labels.update({int(i): 1 for i in block1})
    neutral = np.zeros(total, dtype=bool)
    neutral[neutral_ids] = True
    irrelevant = np.zeros(total, dtype=bool)
    irrelevant[irr_ids] = True

    g = build_graph(total, edges, x, labels=labels)
    return SynthResult(graph=g, labels=labels, neutral=neutral, irrelevant=irrelevant)


def expected_edge_count(cfg):
    """Expected number of sampled edges under the generator."""
    n, nn, ni = cfg.counts
    p_mix = 0.5 * (cfg.p_intra + cfg.p_inter)
    count = 2 * (n * (n - 1) / 2) * cfg.p_intra
    count += n * n * cfg.p_inter
    count += nn * 2 * n * p_mix
    count += nn * (nn - 1) / 2 * cfg.p_inter
    count += ni * (2 * n + nn) * cfg.p_inter
    return count


def matched_density_probability(cfg):
    """Erdos-Renyi probability giving the same expected edge count on
    the same node population."""
    total = cfg.num_nodes
    possible = total * (total - 1) / 2
    return expected_edge_count(cfg) / possible


def generate_unpolarized(num_nodes, p, d_x=16, seed=0):
    """Erdos-Renyi control: random edges, one Gaussian feature cloud."""
    if num_nodes < 2:
        raise ConfigError("unpolarized graph needs at least two nodes")
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"edge probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    ids = np.arange(num_nodes)
    pairs = _pairs_within(rng, ids, p)
    edges = [EdgeRecord(int(a), int(b), "uu", "0", 1.0) for a, b in pairs]
    x = rng.standard_normal((num_nodes, d_x))
    return build_graph(num_nodes, edges, x)


def write_synth(result, out_dir):
    """Write the four dataset files; returns their paths."""
    paths = {
        "edges": os.path.join(out_dir, "edges.txt"),
        "features": os.path.join(out_dir, "features.txt"),
        "labels": os.path.join(out_dir, "labels.txt"),
        "truth": os.path.join(out_dir, "truth.txt"),
    }
    save_graph(result.graph, paths["edges"], paths["features"], label_path=paths["labels"])
    with open(paths["truth"], "w") as fh:
        for i in range(result.graph.num_nodes):
            cls = result.labels.get(i, -1)
            fh.write(f"{i} {cls} {int(result.neutral[i])} {int(result.irrelevant[i])}\n")
    return paths


def load_ground_truth(path):
    """Read a truth file back into (labels dict, neutral, irrelevant)."""
    rows = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise GraphParseError(f"{path}:{lineno}: expected 'node_id class neutral irrelevant'")
            try:
                rows.append(tuple(int(v) for v in parts))
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: non-integer field") from None
    if not rows:
        raise ValidationError(f"{path}: empty ground-truth file")
    total = max(r[0] for r in rows) + 1
    labels = {}
    neutral = np.zeros(total, dtype=bool)
    irrelevant = np.zeros(total, dtype=bool)
    for i, cls, neu, irr in rows:
        if cls in (0, 1):
            labels[i] = cls
        neutral[i] = bool(neu)
        irrelevant[i] = bool(irr)
    return labels, neutral, irrelevant
