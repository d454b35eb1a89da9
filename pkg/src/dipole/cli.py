"""Command-line driver.

Subcommands: generate, train, cluster, index, eval, prompt-tune.
Configuration comes from JSON (--config), overridden by repeatable
--set key=value flags and then by dedicated flags.  Every command
echoes the resolved configuration into the output directory and writes
machine-readable reports (JSON/JSONL) next to rendered figures.

Exit codes: 0 success, 2 configuration or input error, 3 training or
fitting failure, 4 degenerate data.
"""

from __future__ import annotations

import argparse
import os
import sys

from . import report
from .clustering import cluster_and_flag, clustering_accuracy
from .config import apply_overrides, child_seed, load_config, parse_override, RunConfig
from .encoder import encode, file_digest, load_params, save_params
from .errors import (ConfigError, DegenerateDataError, EvaluationError,
                     FitError, GraphParseError, TrainingError, ValidationError)
from .evaluation import run_eval_suite, run_pipeline
from .graph import load_graph, normalized_adjacency, save_graph
from .index import classic_index, unified_index
from .objectives import Supervision
from .sampler import fit_connect
from .supervision import make_prompts, prompt_tune
from .synthgen import generate, generate_unpolarized, matched_density_probability, write_synth

INPUT_ERRORS = (ConfigError, GraphParseError, ValidationError, EvaluationError)
RUN_ERRORS = (TrainingError, FitError)


def _add_common(p):
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--set", dest="overrides", action="append", default=[],
                   metavar="KEY=VALUE", help="override one config key")
    p.add_argument("--seed", type=int, help="override the run seed")
    p.add_argument("--out", required=True, help="output directory")


def _add_data_flags(p, checkpoint=False):
    p.add_argument("--edges", help="edge file")
    p.add_argument("--features", help="feature file")
    p.add_argument("--labels", help="label file")
    p.add_argument("--r0", help="initial assignment file")
    if checkpoint:
        p.add_argument("--checkpoint", help="parameter checkpoint")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dipole",
        description="Detect binary polarized groups in attributed social graphs.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset")
    _add_common(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train the twin encoders")
    _add_common(p)
    _add_data_flags(p)
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("cluster", help="cluster embeddings from a checkpoint")
    _add_common(p)
    _add_data_flags(p, checkpoint=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("index", help="compute polarization indices")
    _add_common(p)
    _add_data_flags(p, checkpoint=True)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("eval", help="run the ablation and robustness table")
    _add_common(p)
    p.add_argument("--epochs", type=int, help="override epoch count")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("prompt-tune", help="tune label prompts against a frozen encoder")
    _add_common(p)
    _add_data_flags(p, checkpoint=True)
    p.set_defaults(func=cmd_prompt_tune)

    return parser


def resolve_config(args):
    cfg = load_config(args.config) if args.config else RunConfig()
    overrides = dict(parse_override(t) for t in args.overrides)
    for flag in ("edges", "features", "labels", "r0", "checkpoint"):
        value = getattr(args, flag, None)
        if value is not None:
            key = {"edges": "edge_file", "features": "feature_file",
                   "labels": "label_file", "r0": "r0_file"}.get(flag, flag)
            overrides[key] = value
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if args.seed is not None:
        overrides["seed"] = args.seed
    return apply_overrides(cfg, overrides)


def _echo_config(cfg, out):
    return report.write_json(os.path.join(out, "config.json"), cfg.to_dict())


def _require(cfg, *fields):
    for f in fields:
        if getattr(cfg, f) is None:
            raise ConfigError(f"missing required input: set {f} (config) or the matching flag")


def _load_inputs(cfg):
    _require(cfg, "edge_file", "feature_file")
    return load_graph(cfg.edge_file, cfg.feature_file,
                      label_path=cfg.label_file, r0_path=cfg.r0_file)


def cmd_generate(args, cfg):
    out = report.ensure_dir(args.out)
    _echo_config(cfg, out)
    if cfg.graph_kind == "unpolarized":
        synth_cfg = cfg.synth_config()
        g = generate_unpolarized(synth_cfg.num_nodes,
                                 matched_density_probability(synth_cfg),
                                 d_x=cfg.d_x, seed=cfg.seed)
        save_graph(g, os.path.join(out, "edges.txt"), os.path.join(out, "features.txt"))
        stats = g.degree_stats()
        print(f"unpolarized graph: {stats.node_count} nodes, {stats.edge_count} edges "
              f"(mean degree {stats.mean_degree:.2f})")
        return 0
    result = generate(cfg.synth_config())
    paths = write_synth(result, out)
    stats = result.graph.degree_stats()
    print(f"polarized graph: {stats.node_count} nodes, {stats.edge_count} edges "
          f"(mean degree {stats.mean_degree:.2f})")
    print(f"files: {', '.join(sorted(paths.values()))}")
    return 0


def cmd_train(args, cfg):
    out = report.ensure_dir(args.out)
    _echo_config(cfg, out)
    g = _load_inputs(cfg)
    supervision = None
    if g.labels or g.r0 is not None:
        supervision = Supervision(labels=g.labels, r0=g.r0)
    res = run_pipeline(g, cfg, supervision=supervision, truth_labels=g.labels)

    ckpt = os.path.join(out, "checkpoint.bin")
    save_params(res.params, ckpt)
    report.write_jsonl(os.path.join(out, "history.jsonl"), res.history.rows())
    report.write_history_text(os.path.join(out, "history.txt"), res.history)
    report.render_training_curves(res.history, os.path.join(out, "training_curves.png"))

    summary = {
        "epochs_run": res.epochs_run,
        "final_total": res.history.total[-1] if res.history.total else None,
        "final_interaction": res.history.interaction[-1] if res.history.interaction else None,
        "final_feature": res.history.feature[-1] if res.history.feature else None,
        "checkpoint": ckpt,
        "checkpoint_digest": file_digest(ckpt),
        "supervision_path": res.supervision_path,
        "accuracy": res.accuracy,
        "classifier_accuracy": res.classifier_accuracy,
    }
    report.write_json(os.path.join(out, "train_report.json"), summary)
    print(f"trained {res.epochs_run} epochs; checkpoint {ckpt}")
    if res.accuracy is not None:
        print(f"clustering accuracy vs labels: {res.accuracy:.4f}")
    if res.classifier_accuracy is not None:
        print(f"classifier accuracy on labeled nodes: {res.classifier_accuracy:.4f}")
    return 0


def _encode_from_checkpoint(cfg):
    _require(cfg, "checkpoint")
    g = _load_inputs(cfg)
    params = load_params(cfg.checkpoint)
    adj = normalized_adjacency(g, variant="signed" if params.signed else "unsigned")
    return g, params, encode(adj, g.encoder_features(), params)


def cmd_cluster(args, cfg):
    out = report.ensure_dir(args.out)
    _echo_config(cfg, out)
    g, params, pair = _encode_from_checkpoint(cfg)
    assignment, centroids, flags = cluster_and_flag(
        pair.polarized, pair.invariant, sharpness=cfg.sharpness,
        iters=cfg.kmeans_iters, seed=child_seed(cfg.seed, "kmeans"),
        neutral_threshold=cfg.neutral_threshold, outlier_std=cfg.outlier_std)
    hard = assignment.hard()
    rows = [{"node": i, "r1": float(assignment.matrix[i, 0]),
             "r2": float(assignment.matrix[i, 1]), "group": int(hard[i]),
             "neutral": bool(flags.neutral[i]), "irrelevant": bool(flags.irrelevant[i])}
            for i in range(g.num_nodes)]
    report.write_jsonl(os.path.join(out, "assignments.jsonl"), rows)
    summary = {
        "nodes": g.num_nodes,
        "group_sizes": [int((hard == 0).sum()), int((hard == 1).sum())],
        "neutral": int(flags.neutral.sum()),
        "irrelevant": int(flags.irrelevant.sum()),
    }
    if g.labels:
        summary["accuracy"] = clustering_accuracy(assignment, g.labels, flags)
    report.write_json(os.path.join(out, "cluster_report.json"), summary)
    report.render_cluster_scatter(pair.polarized, hard, flags.neutral,
                                  flags.irrelevant, os.path.join(out, "cluster_scatter.png"))
    print(f"groups: {summary['group_sizes']}, neutral {summary['neutral']}, "
          f"irrelevant {summary['irrelevant']}")
    if "accuracy" in summary:
        print(f"clustering accuracy vs labels: {summary['accuracy']:.4f}")
    return 0


def cmd_index(args, cfg):
    out = report.ensure_dir(args.out)
    _echo_config(cfg, out)
    g, params, pair = _encode_from_checkpoint(cfg)
    edges, weights = g.edge_index()
    # classic baseline reads the raw attribute table (it predates the
    # decoupled embeddings); unified reads the trained pair
    classic = classic_index(g.x, edges, weights)
    unified = unified_index(pair, edges, weights, eps=cfg.eps)
    payload = {"classic": classic.to_dict(), "unified": unified.to_dict()}
    report.write_json(os.path.join(out, "index_report.json"), payload)
    report.render_index_bars(payload, os.path.join(out, "index_bars.png"))
    for name, rep in payload.items():
        print(f"{name}: P={rep['P']:.4f} D={rep['D']:.4f} I={rep['I']:.4f} "
              f"normalized={rep['normalized']:.4f}")
    return 0


def cmd_eval(args, cfg):
    out = report.ensure_dir(args.out)
    _echo_config(cfg, out)
    aggregates, per_run = run_eval_suite(cfg)
    report.write_jsonl(os.path.join(out, "eval_runs.jsonl"), per_run)
    report.write_jsonl(os.path.join(out, "eval_table.jsonl"), aggregates)
    report.render_eval_bars(aggregates, os.path.join(out, "eval_accuracy.png"))
    lines = [f"{'variant':<18} {'mean':>7} {'std':>7}  (n={cfg.eval_seeds})"]
    for row in aggregates:
        lines.append(f"{row['variant']:<18} {row['mean_accuracy']:7.4f} "
                     f"{row['std_accuracy']:7.4f}")
    text = "\n".join(lines)
    with open(os.path.join(out, "eval_summary.txt"), "w") as fh:
        fh.write(text + "\n")
    print(text)
    return 0


def cmd_prompt_tune(args, cfg):
    out = report.ensure_dir(args.out)
    _echo_config(cfg, out)
    _require(cfg, "checkpoint", "label_file")
    g, params, pair = _encode_from_checkpoint(cfg)
    if not g.labels:
        raise ConfigError("prompt tuning needs a non-empty label file")
    digest_before = file_digest(cfg.checkpoint)
    connect = fit_connect(g, pair, kind=cfg.connect, d_adapt=cfg.d_adapt,
                          hidden=cfg.adapt_hidden, steps=cfg.connect_fit_steps,
                          lr=cfg.connect_fit_lr, seed=child_seed(cfg.seed, "connect"))
    prompts = make_prompts(g, g.labels, k_induced=cfg.prompt_k_induced)
    result = prompt_tune(params, g, prompts, g.labels, connect,
                         epochs=cfg.prompt_epochs, lr=cfg.prompt_lr,
                         adjacency=cfg.adjacency)
    report.write_json(os.path.join(out, "prompts.json"), {
        "features": result.prompts.features.tolist(),
        "k_induced": result.prompts.k_induced,
    })
    report.write_json(os.path.join(out, "prompt_report.json"), {
        "accuracy_before": result.accuracy_before,
        "accuracy_after": result.accuracy_after,
        "epochs": cfg.prompt_epochs,
        "checkpoint_digest_before": digest_before,
        "checkpoint_digest_after": file_digest(cfg.checkpoint),
    })
    report.render_prompt_curve(result.history, os.path.join(out, "prompt_curve.png"))
    print(f"nearest-prompt accuracy: {result.accuracy_before:.4f} -> "
          f"{result.accuracy_after:.4f}")
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except DegenerateDataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except RUN_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
