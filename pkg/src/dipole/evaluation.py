"""End-to-end pipeline and the ablation/robustness suites.

The same entry points back the command-line ``eval`` report and the
acceptance checks: train on a (usually synthetic) graph, cluster the
polarized embeddings, flag neutral and irrelevant nodes, and score
against ground truth.  Variants toggle one ingredient at a time:

  full              the complete objective and sampler
  no-interaction    drop the interaction loss
  no-feature        drop the feature loss (and with it the warmup)
  random-negatives  replace the silence criterion with uniform negatives
  labels-N          N percent of ground-truth labels as anchors
  r0-N              initial assignment with N percent of rows corrupted
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import (NodeFlags, centers_from_assignment,
                         centers_from_labels, cluster_and_flag,
                         clustering_accuracy)
from .config import child_rng, child_seed
from .errors import ConfigError
from .index import classic_index, unified_index
from .objectives import Supervision, train
from .supervision import choose_supervision_path, train_classifier
from .synthgen import generate, generate_unpolarized, matched_density_probability


@dataclass
class PipelineResult:
    params: object
    embeddings: object
    history: object
    assignment: object
    centroids: object
    flags: NodeFlags
    accuracy: float | None
    classifier: object = None
    classifier_accuracy: float | None = None
    supervision_path: str | None = None
    epochs_run: int = 0


def run_pipeline(g, cfg, supervision=None, truth_labels=None,
                 train_overrides=None, sampler_overrides=None):
    """Train, cluster, flag, and (when truth is available) score.

    ``supervision`` carries partial labels and/or an initial assignment.
    Labeled fractions above the classifier cutoff switch to the frozen
    classifier path: training runs unsupervised and a logistic model on
    the frozen embeddings provides predictions; otherwise labels join
    the objective as anchors and clustering stays in charge.
    """
    train_cfg = cfg.train_config(**(train_overrides or {}))
    sampler_cfg = cfg.sampler_config(**(sampler_overrides or {}))
    loss_cfg = cfg.loss_config()

    path = None
    effective = supervision
    if supervision and supervision.labels:
        path = choose_supervision_path(len(supervision.labels) / g.num_nodes)
        if path == "classifier":
            effective = Supervision(labels=None, r0=supervision.r0)

    result = train(g, train_cfg, loss_cfg, sampler_cfg, supervision=effective)
    pair = result.embeddings

    # whatever supervision exists also orients the clustering basin
    init_centers = None
    if supervision is not None:
        if supervision.labels:
            init_centers = centers_from_labels(pair.polarized, supervision.labels)
        elif supervision.r0 is not None:
            init_centers = centers_from_assignment(pair.polarized, supervision.r0)
    assignment, centroids, flags = cluster_and_flag(
        pair.polarized, pair.invariant, sharpness=cfg.sharpness,
        iters=cfg.kmeans_iters, seed=child_seed(cfg.seed, "kmeans"),
        neutral_threshold=cfg.neutral_threshold, outlier_std=cfg.outlier_std,
        init_centers=init_centers)

    classifier = None
    classifier_accuracy = None
    if path == "classifier":
        classifier = train_classifier(pair.full, supervision.labels,
                                      seed=child_seed(cfg.seed, "classifier"))
        classifier_accuracy = classifier.accuracy(pair.full, supervision.labels)

    accuracy = None
    if truth_labels:
        accuracy = clustering_accuracy(assignment, truth_labels, flags)

    return PipelineResult(params=result.params, embeddings=pair,
                          history=result.history, assignment=assignment,
                          centroids=centroids, flags=flags, accuracy=accuracy,
                          classifier=classifier,
                          classifier_accuracy=classifier_accuracy,
                          supervision_path=path, epochs_run=result.epochs_run)


def subsample_labels(labels, fraction, rng):
    """Deterministic stratified subsample: the same share of each class."""
    out = {}
    for cls in (0, 1):
        members = np.array(sorted(i for i, c in labels.items() if c == cls))
        take = max(1, int(round(fraction * members.size))) if members.size else 0
        if take:
            out.update({int(i): cls for i in rng.choice(members, size=take, replace=False)})
    return out


def corrupted_r0(labels, num_nodes, corrupt_frac, rng, confidence=0.9):
    """Initial assignment from ground truth with a fraction of labeled
    rows flipped; unlabeled rows stay uniform."""
    r0 = np.full((num_nodes, 2), 0.5)
    idx = np.array(sorted(labels))
    flip = rng.random(idx.size) < corrupt_frac
    for pos, i in enumerate(idx):
        cls = labels[i]
        if flip[pos]:
            cls = 1 - cls
        r0[i, cls] = confidence
        r0[i, 1 - cls] = 1.0 - confidence
    return r0


def r0_argmax_accuracy(r0, labels):
    """Accuracy of reading the initial assignment directly (best
    permutation), the baseline a trained run must beat."""
    hard = (r0[:, 1] > r0[:, 0]).astype(np.int64)
    idx = np.array(sorted(labels))
    y = np.array([labels[i] for i in idx])
    direct = float((hard[idx] == y).mean())
    return max(direct, 1.0 - direct)


def variant_setup(variant, truth_labels, num_nodes, rng):
    """(train overrides, sampler overrides, supervision) for one variant."""
    train_over = {}
    sampler_over = {}
    supervision = None
    if variant == "full":
        pass
    elif variant == "no-interaction":
        train_over["use_interaction"] = False
    elif variant == "no-feature":
        train_over["use_feature"] = False
    elif variant == "random-negatives":
        sampler_over["kind"] = "random"
    elif variant.startswith("labels-"):
        fraction = float(variant.split("-", 1)[1]) / 100.0
        supervision = Supervision(labels=subsample_labels(truth_labels, fraction, rng))
    elif variant.startswith("r0-"):
        frac = float(variant.split("-", 1)[1]) / 100.0
        supervision = Supervision(r0=corrupted_r0(truth_labels, num_nodes, frac, rng))
    else:
        raise ConfigError(f"unknown eval variant {variant!r}")
    return train_over, sampler_over, supervision


def run_variant(data, cfg, variant, run_seed):
    """One variant on one generated instance; returns a result row."""
    rng = child_rng(run_seed, "eval")
    train_over, sampler_over, supervision = variant_setup(
        variant, data.labels, data.graph.num_nodes, rng)
    train_over["seed"] = run_seed
    res = run_pipeline(data.graph, cfg, supervision=supervision,
                       truth_labels=data.labels, train_overrides=train_over,
                       sampler_overrides=sampler_over)
    row = {"variant": variant, "seed": run_seed, "accuracy": res.accuracy,
           "epochs_run": res.epochs_run}
    if supervision is not None and supervision.r0 is not None:
        row["r0_accuracy"] = r0_argmax_accuracy(supervision.r0, data.labels)
    return row


def run_eval_suite(cfg, variants=None, seeds=None, suite_name="synthetic"):
    """The full table: every variant on the same per-seed instances.

    Returns (aggregate rows, per-run rows).  Instances and training are
    seeded from the run seed so the whole table reproduces exactly.
    """
    variants = list(variants if variants is not None else cfg.eval_variants)
    seeds = list(seeds if seeds is not None else range(cfg.eval_seeds))
    datasets = {s: generate(cfg.synth_config(seed=child_seed(cfg.seed, "synth") + s))
                for s in seeds}
    per_run = []
    for variant in variants:
        for s in seeds:
            row = run_variant(datasets[s], cfg, variant, run_seed=cfg.seed + s)
            row["suite"] = suite_name
            per_run.append(row)
    aggregates = []
    for variant in variants:
        accs = [r["accuracy"] for r in per_run if r["variant"] == variant]
        agg = {"suite": suite_name, "variant": variant, "seeds": len(accs),
               "mean_accuracy": float(np.mean(accs)),
               "std_accuracy": float(np.std(accs))}
        baselines = [r["r0_accuracy"] for r in per_run
                     if r["variant"] == variant and "r0_accuracy" in r]
        if baselines:
            agg["mean_r0_accuracy"] = float(np.mean(baselines))
        aggregates.append(agg)
    return aggregates, per_run


def index_separation_study(cfg, seeds=None):
    """Normalized indices on polarized instances versus density-matched
    unpolarized controls.

    The unified gap is the point; the classic baseline, which reads the
    raw attribute table and has no invariant reference to discount
    background variation, is what it should beat.
    """
    seeds = list(seeds if seeds is not None else range(cfg.eval_seeds))
    scores = {"unified_polarized": [], "unified_unpolarized": [],
              "classic_polarized": [], "classic_unpolarized": []}

    def _score(kind, graph, result):
        edges, weights = graph.edge_index()
        pair = result.embeddings
        scores[f"unified_{kind}"].append(unified_index(pair, edges, weights).normalized)
        scores[f"classic_{kind}"].append(classic_index(graph.x, edges, weights).normalized)

    for s in seeds:
        synth_cfg = cfg.synth_config(seed=child_seed(cfg.seed, "synth") + s)
        data = generate(synth_cfg)
        res = run_pipeline(data.graph, cfg, truth_labels=data.labels,
                           train_overrides={"seed": cfg.seed + s})
        _score("polarized", data.graph, res)

        control = generate_unpolarized(synth_cfg.num_nodes,
                                       matched_density_probability(synth_cfg),
                                       d_x=synth_cfg.d_x, seed=synth_cfg.seed)
        res_u = run_pipeline(control, cfg, train_overrides={"seed": cfg.seed + s})
        _score("unpolarized", control, res_u)

    out = {k: v for k, v in scores.items()}
    for variant in ("unified", "classic"):
        gap = (np.mean(scores[f"{variant}_polarized"])
               - np.mean(scores[f"{variant}_unpolarized"]))
        out[f"{variant}_separation"] = float(gap)
    return out
