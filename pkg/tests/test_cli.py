import json
import os

import numpy as np
import pytest

from dipole.cli import main
from dipole.encoder import file_digest

FAST = [
    "--set", "n_per_class=20", "--set", "d_x=6", "--set", "p_intra=0.3",
    "--set", "p_inter=0.02", "--set", "signal=3.0",
]
SMALL_TRAIN = [
    "--set", "epochs=10", "--set", "init_epochs=3", "--set", "d_h=8",
    "--set", "d_po=4", "--set", "d_in=4", "--set", "connect_fit_steps=15",
]


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = os.path.join(root, "data")
    assert main(["generate", "--out", data, "--seed", "0"] + FAST) == 0
    run = os.path.join(root, "run")
    argv = ["train", "--out", run, "--seed", "0",
            "--edges", os.path.join(data, "edges.txt"),
            "--features", os.path.join(data, "features.txt"),
            "--labels", os.path.join(data, "labels.txt")] + FAST + SMALL_TRAIN
    assert main(argv) == 0
    return {"root": str(root), "data": data, "run": run,
            "ckpt": os.path.join(run, "checkpoint.bin"), "argv_train": argv}


def test_generate_writes_dataset(workspace):
    for name in ("edges.txt", "features.txt", "labels.txt", "truth.txt",
                 "config.json"):
        assert os.path.exists(os.path.join(workspace["data"], name)), name


def test_generate_unpolarized(tmp_path):
    out = str(tmp_path / "ctrl")
    assert main(["generate", "--out", out, "--set", "graph_kind=unpolarized",
                 "--set", "n_per_class=15"]) == 0
    assert os.path.exists(os.path.join(out, "edges.txt"))
    assert os.path.exists(os.path.join(out, "features.txt"))
    assert not os.path.exists(os.path.join(out, "truth.txt"))


def test_train_outputs(workspace):
    run = workspace["run"]
    for name in ("checkpoint.bin", "history.jsonl", "history.txt",
                 "training_curves.png", "train_report.json", "config.json"):
        assert os.path.exists(os.path.join(run, name)), name
    rep = read_json(os.path.join(run, "train_report.json"))
    assert rep["epochs_run"] == 10
    assert rep["checkpoint_digest"] == file_digest(workspace["ckpt"])
    # every block node is labeled, so the classifier path kicks in
    assert rep["supervision_path"] == "classifier"
    assert rep["classifier_accuracy"] is not None
    history = read_jsonl(os.path.join(run, "history.jsonl"))
    assert len(history) == 10
    assert {"epoch", "interaction", "feature", "total"} <= history[0].keys()
    with open(os.path.join(run, "history.txt")) as fh:
        lines = [l for l in fh if l.strip()]
    assert lines[0].startswith("#")
    assert len(lines) == 11


def test_train_deterministic_checkpoints(workspace, tmp_path):
    other = str(tmp_path / "again")
    argv = list(workspace["argv_train"])
    argv[argv.index("--out") + 1] = other
    assert main(argv) == 0
    assert file_digest(os.path.join(other, "checkpoint.bin")) == \
        file_digest(workspace["ckpt"])
    third = str(tmp_path / "reseeded")
    argv[argv.index("--out") + 1] = third
    argv[argv.index("--seed") + 1] = "1"
    assert main(argv) == 0
    assert file_digest(os.path.join(third, "checkpoint.bin")) != \
        file_digest(workspace["ckpt"])


def test_cluster_outputs(workspace, tmp_path):
    out = str(tmp_path / "cluster")
    assert main(["cluster", "--out", out,
                 "--edges", os.path.join(workspace["data"], "edges.txt"),
                 "--features", os.path.join(workspace["data"], "features.txt"),
                 "--labels", os.path.join(workspace["data"], "labels.txt"),
                 "--checkpoint", workspace["ckpt"]] + SMALL_TRAIN) == 0
    rows = read_jsonl(os.path.join(out, "assignments.jsonl"))
    assert len(rows) == 40
    assert {"node", "r1", "r2", "group", "neutral", "irrelevant"} == rows[0].keys()
    for row in rows:
        assert row["r1"] + row["r2"] == pytest.approx(1.0, abs=1e-9)
    rep = read_json(os.path.join(out, "cluster_report.json"))
    assert sum(rep["group_sizes"]) == 40
    assert 0.0 <= rep["accuracy"] <= 1.0
    assert os.path.exists(os.path.join(out, "cluster_scatter.png"))


def test_index_outputs(workspace, tmp_path):
    out = str(tmp_path / "index")
    assert main(["index", "--out", out,
                 "--edges", os.path.join(workspace["data"], "edges.txt"),
                 "--features", os.path.join(workspace["data"], "features.txt"),
                 "--checkpoint", workspace["ckpt"]] + SMALL_TRAIN) == 0
    rep = read_json(os.path.join(out, "index_report.json"))
    assert set(rep) == {"classic", "unified"}
    for variant in rep.values():
        assert set(variant) == {"variant", "P", "D", "I", "normalized"}
        assert 0.0 <= variant["normalized"] < 1.0
    assert os.path.exists(os.path.join(out, "index_bars.png"))


def test_prompt_tune_outputs(workspace, tmp_path):
    out = str(tmp_path / "prompt")
    assert main(["prompt-tune", "--out", out,
                 "--edges", os.path.join(workspace["data"], "edges.txt"),
                 "--features", os.path.join(workspace["data"], "features.txt"),
                 "--labels", os.path.join(workspace["data"], "labels.txt"),
                 "--checkpoint", workspace["ckpt"],
                 "--set", "prompt_epochs=3", "--set", "prompt_k_induced=5"]
                + SMALL_TRAIN) == 0
    rep = read_json(os.path.join(out, "prompt_report.json"))
    # the encoder checkpoint is read-only for prompt tuning
    assert rep["checkpoint_digest_before"] == rep["checkpoint_digest_after"]
    assert 0.0 <= rep["accuracy_after"] <= 1.0
    prompts = read_json(os.path.join(out, "prompts.json"))
    assert np.asarray(prompts["features"]).shape == (2, 6)
    assert os.path.exists(os.path.join(out, "prompt_curve.png"))


def test_eval_table(tmp_path):
    out = str(tmp_path / "eval")
    assert main(["eval", "--out", out, "--seed", "0",
                 "--set", 'eval_variants=["full", "random-negatives"]',
                 "--set", "eval_seeds=2", "--set", "epochs=6",
                 "--set", "init_epochs=2"] + FAST + SMALL_TRAIN[2:]) == 0
    table = read_jsonl(os.path.join(out, "eval_table.jsonl"))
    runs = read_jsonl(os.path.join(out, "eval_runs.jsonl"))
    assert [r["variant"] for r in table] == ["full", "random-negatives"]
    assert len(runs) == 4
    assert all(r["seeds"] == 2 for r in table)
    assert os.path.exists(os.path.join(out, "eval_accuracy.png"))
    assert os.path.exists(os.path.join(out, "eval_summary.txt"))


def test_exit_code_2_on_bad_input(workspace, tmp_path):
    out = str(tmp_path / "x")
    # unknown config key
    assert main(["generate", "--out", out, "--set", "no_such_key=1"]) == 2
    # invalid probability, message names the key
    assert main(["generate", "--out", out, "--set", "p_intra=1.5"]) == 2
    # malformed override
    assert main(["generate", "--out", out, "--set", "p_intra"]) == 2
    # missing required inputs
    assert main(["train", "--out", out]) == 2
    # nonexistent checkpoint
    assert main(["cluster", "--out", out,
                 "--edges", os.path.join(workspace["data"], "edges.txt"),
                 "--features", os.path.join(workspace["data"], "features.txt"),
                 "--checkpoint", str(tmp_path / "missing.bin")]) == 2


def test_exit_code_3_on_divergence(workspace, tmp_path):
    out = str(tmp_path / "diverge")
    argv = ["train", "--out", out, "--seed", "0",
            "--edges", os.path.join(workspace["data"], "edges.txt"),
            "--features", os.path.join(workspace["data"], "features.txt"),
            "--set", "lr=1e160", "--set", "grad_clip=0.0",
            "--set", "momentum=0.0", "--set", "epochs=4",
            "--set", "init_epochs=2"] + SMALL_TRAIN[4:]
    with np.errstate(over="ignore", invalid="ignore"):
        assert main(argv) == 3


def test_exit_code_4_on_degenerate_data(tmp_path):
    edges = tmp_path / "edges.txt"
    feats = tmp_path / "features.txt"
    zeros = tmp_path / "zeros.txt"
    edges.write_text("0 1 uu 0\n1 2 uu 0\n2 3 uu 0\n")
    feats.write_text("4 2\n1.0 0.0\n0.0 1.0\n-1.0 0.0\n0.0 -1.0\n")
    # all-zero features encode to identical embeddings: nothing to cluster
    zeros.write_text("4 2\n" + "0.0 0.0\n" * 4)
    train_out = str(tmp_path / "t")
    assert main(["train", "--out", train_out, "--edges", str(edges),
                 "--features", str(feats), "--set", "epochs=0"]
                + SMALL_TRAIN[2:]) == 0
    out = str(tmp_path / "c")
    assert main(["cluster", "--out", out, "--edges", str(edges),
                 "--features", str(zeros),
                 "--checkpoint", os.path.join(train_out, "checkpoint.bin")]
                + SMALL_TRAIN[2:]) == 4


def test_config_echo_roundtrips(workspace):
    echoed = read_json(os.path.join(workspace["run"], "config.json"))
    assert echoed["epochs"] == 10
    assert echoed["seed"] == 0
    assert echoed["d_h"] == 8
