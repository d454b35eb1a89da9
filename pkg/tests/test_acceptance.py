"""End-to-end acceptance checks, one per shipping requirement.

Each check prints a single PASS/FAIL line (repeated after the run via
the terminal-summary hook in conftest) and asserts the same condition,
so a missed bar fails the suite.  The checks exercise the public API at
synthetic scale:

  1. recovery   full pipeline accuracy on easy synthetic graphs
  2. ablation   both contrastive losses earn their keep, in order
  3. gradients  analytic gradients of all four loss terms through the
                encoder match central finite differences
  4. sampler    the factorized fast sampler equals an exhaustive pair
                scan, exactly
  5. closed     the closed-form augmentation maximum equals grid search
  6. index      the unified index separates polarized graphs from
                density-matched controls; the classic index does worse
  7. anchors    sparse labels beat unsupervised; a mostly-corrupted
                initial assignment is repaired, not echoed
  8. contracts  row-stochastic assignments, permutation-max scoring,
                rescale invariance, frozen-encoder digests, bitwise
                reproducibility

The heavier checks train many models; the module takes a few minutes.
"""

from __future__ import annotations

import itertools
import time
from contextlib import contextmanager
from functools import lru_cache

import numpy as np

from conftest import ACCEPTANCE_LINES
from dipole.clustering import (SoftAssignment, clustering_accuracy,
                               soft_assign, soft_kmeans)
from dipole.config import RunConfig, child_seed
from dipole.encoder import (EmbeddingPair, backward, encode_with_cache,
                            file_digest, grad_check, init_params, save_params)
from dipole.evaluation import index_separation_study, run_eval_suite
from dipole.graph import EdgeRecord, build_graph, normalized_adjacency
from dipole.index import unified_index
from dipole.objectives import (ContrastiveSampleSet, LossConfig,
                               assignment_anchor_grads, feature_grads,
                               interaction_grads, supervised_anchor_grads,
                               train)
from dipole.sampler import (Adaptor, AugmentationSpec, ConnectModel,
                            SamplerThresholds, factorized_score_rows,
                            fit_connect, sample_negatives_exact,
                            sample_negatives_fast)
from dipole.supervision import make_prompts, prompt_tune, train_classifier
from dipole.synthgen import generate


@contextmanager
def criterion(number, name):
    """Record exactly one PASS/FAIL line for one acceptance check."""
    state = _CriterionState(number, name)
    try:
        yield state
    except BaseException as exc:
        if state.line is None:
            state.check(False, f"errored: {type(exc).__name__}: {exc}")
        raise
    if state.line is None:
        state.check(False, "no measurement recorded")
    assert state.ok, state.line


class _CriterionState:
    def __init__(self, number, name):
        self.number = number
        self.name = name
        self.line = None
        self.ok = False

    def check(self, ok, detail):
        self.ok = bool(ok)
        verdict = "PASS" if self.ok else "FAIL"
        self.line = f"[{self.number}/8] {self.name}: {verdict} — {detail}"
        ACCEPTANCE_LINES.append(self.line)
        print(self.line)


# ---------------------------------------------------------------------------
# 1. synthetic recovery at the default configuration


def test_synthetic_recovery_meets_accuracy_and_time_budget():
    cfg = RunConfig(n_per_class=500, p_intra=0.02, p_inter=0.002, signal=3.0)
    with criterion(1, "synthetic recovery") as c:
        start = time.perf_counter()
        aggregates, _ = run_eval_suite(cfg, variants=["full"], seeds=range(5))
        elapsed = time.perf_counter() - start
        mean = aggregates[0]["mean_accuracy"]
        c.check(mean >= 0.95 and elapsed <= 300.0,
                f"mean accuracy {mean:.4f} (need >= 0.95) over 5 seeds "
                f"in {elapsed:.0f}s (budget 300s)")


# ---------------------------------------------------------------------------
# 2 and 7 share one mid-difficulty suite: weaker feature signal, plus
# neutral and irrelevant bystanders, where the losses actually compete.


@lru_cache(maxsize=1)
def _mid_suite():
    cfg = RunConfig(n_per_class=100, p_intra=0.05, p_inter=0.01, d_x=16,
                    signal=1.5, neutral_frac=0.15, irrelevant_frac=0.2,
                    epochs=80, init_epochs=10, feature_weight=0.1,
                    eval_variants=["full", "no-feature", "no-interaction",
                                   "labels-5", "r0-60"])
    aggregates, per_run = run_eval_suite(cfg, seeds=range(5))
    return {row["variant"]: row for row in aggregates}, per_run


def test_ablation_ordering_on_mid_difficulty_suite():
    with criterion(2, "ablation ordering") as c:
        agg, _ = _mid_suite()
        full = agg["full"]["mean_accuracy"]
        no_f = agg["no-feature"]["mean_accuracy"]
        no_i = agg["no-interaction"]["mean_accuracy"]
        c.check(full > no_f > no_i and full - no_i >= 0.02,
                f"full {full:.4f} > no-feature {no_f:.4f} > "
                f"no-interaction {no_i:.4f}, full-vs-no-interaction gap "
                f"{full - no_i:.4f} (need >= 0.02)")


# ---------------------------------------------------------------------------
# 3. analytic gradients of every loss term, differentiated through the
# encoder, against central finite differences


def _tiny_instance():
    rng = np.random.default_rng(11)
    n, d_x = 12, 4
    x = rng.standard_normal((n, d_x))
    edges = [EdgeRecord(i, (i + 1) % n, "uu", "+") for i in range(n)]
    edges += [EdgeRecord(0, 5, "uu", "+"), EdgeRecord(2, 8, "uu", "+"),
              EdgeRecord(4, 10, "uu", "+")]
    g = build_graph(n, edges, x)
    adj = normalized_adjacency(g)
    params = init_params(d_x, d_h=6, d_po=3, d_in=3, seed=7)
    return g, adj, params


def test_gradients_of_all_loss_terms_match_finite_differences():
    g, adj, params = _tiny_instance()
    n = g.num_nodes
    cfg = LossConfig()
    rng = np.random.default_rng(3)

    samples = ContrastiveSampleSet(
        positives=[np.array(sorted(g.neighbors(i)))[:2] for i in range(n)],
        negatives=[np.array([(i + 4) % n, (i + 6) % n]) for i in range(n)])
    pairs = np.array([(i, (i + 3) % n) for i in range(n)])
    labels = {0: 0, 3: 1, 6: 0, 9: 1}
    r0 = rng.dirichlet((1.0, 1.0), size=n)

    # anchor centroids are constants within a training epoch, so they
    # are fixed here at their initial-embedding values
    pair0, _ = encode_with_cache(adj, g.x, params)
    mu_lab = np.stack([pair0.polarized[[0, 6]].mean(axis=0),
                       pair0.polarized[[3, 9]].mean(axis=0)])
    mu_r0 = np.stack([pair0.polarized[rng.permutation(n)[:4]].mean(axis=0)
                      for _ in range(2)])

    def through_encoder(loss_fn):
        def objective(p):
            pair, cache = encode_with_cache(adj, g.x, p)
            val, d_po, d_in = loss_fn(pair)
            return val, backward(adj, cache, p, d_po=d_po, d_in=d_in)
        return objective

    def interaction(pair):
        val, grad = interaction_grads(pair, samples, cfg)
        return val, grad, None

    def feature(pair):
        val, g_po, g_in = feature_grads(pair, pairs, cfg)
        return val, g_po, g_in

    def label_anchor(pair):
        val, grad = supervised_anchor_grads(pair, labels, mu_lab)
        return val, grad, None

    def assignment_anchor(pair):
        val, grad = assignment_anchor_grads(pair, r0, mu_r0)
        return val, grad, None

    with criterion(3, "gradient correctness") as c:
        errors = {}
        for name, fn in (("interaction", interaction), ("feature", feature),
                         ("label-anchor", label_anchor),
                         ("assignment-anchor", assignment_anchor)):
            report = grad_check(through_encoder(fn), params, step=1e-5)
            errors[name] = report.max_rel_error
        worst = max(errors.values())
        c.check(worst <= 1e-4,
                "max relative error vs central differences "
                + ", ".join(f"{k} {v:.2e}" for k, v in errors.items())
                + " (need <= 1e-4)")


# ---------------------------------------------------------------------------
# 4. the fast sampler against an exhaustive pure-python pair scan


def test_fast_sampler_equals_exhaustive_pair_scan():
    with criterion(4, "sampler oracle equivalence") as c:
        graphs = 0
        anchors_checked = 0
        for trial in range(20):
            rng = np.random.default_rng(500 + trial)
            n = int(rng.integers(10, 201))
            d_po, d_in = 3, 2
            e = EmbeddingPair(rng.standard_normal((n, d_po)),
                              rng.standard_normal((n, d_in)))
            seen = {(int(a), int(b))
                    for a, b in rng.integers(0, n, size=(3 * n, 2)) if a != b}
            edges = [EdgeRecord(min(a, b), max(a, b), "uu", "0")
                     for a, b in seen]
            g = build_graph(n, edges, np.zeros((n, 1)))
            m = ConnectModel(kind="adaptor-mlp",
                             adaptor_po=Adaptor.random(rng, d_po, 5, 4),
                             adaptor_in=Adaptor.random(rng, d_in, 5, 4))
            t = SamplerThresholds()
            s_po, s_in = factorized_score_rows(e, m)
            for i in range(n):
                got = sample_negatives_fast(g, i, e, m, t)
                expected = set()
                others = [j for j in range(n) if j != i]
                total = s_po[i] + s_in[i]
                low, _ = t.resolve(total[others])
                inv_min = t.resolve_invariant(s_in[i][others])
                for j in others:
                    if j in g.neighbors(i):
                        continue
                    if total[j] < low and s_in[i, j] > inv_min:
                        expected.add(j)
                if got != expected:
                    c.check(False, f"graph {trial} anchor {i}: fast gave "
                                   f"{sorted(got)}, scan gave {sorted(expected)}")
                    return
                anchors_checked += 1
            graphs += 1
        c.check(True, f"exact set equality on {graphs} graphs "
                      f"({anchors_checked} anchors, up to 200 nodes)")


# ---------------------------------------------------------------------------
# 5. closed-form augmentation maximum against brute-force grid search


def test_closed_form_augmentation_max_equals_grid_search():
    with criterion(5, "closed-form augmentation max") as c:
        bound = 2.0
        grid_axis = np.linspace(-bound, bound, 101)  # step = bound / 50
        cases = 0
        for d_po, seed in ((1, 0), (1, 1), (2, 2), (2, 3)):
            rng = np.random.default_rng(seed)
            n = 14
            e = EmbeddingPair(rng.standard_normal((n, d_po)),
                              rng.standard_normal((n, 2)))
            g = build_graph(n, [], np.zeros((n, 1)))
            m = ConnectModel(kind="inner-product")
            t = SamplerThresholds(low=0.3, high=1.7)
            spec = AugmentationSpec(kind="perturbation", bound=bound)
            anchor = 0
            got = sample_negatives_exact(g, anchor, e, m, t, spec)

            full = e.full
            base = full @ full[anchor]
            expected = set()
            for j in range(n):
                if j == anchor or base[j] >= t.low:
                    continue
                best = -np.inf
                for mu in itertools.product(grid_axis, repeat=d_po):
                    shifted = e.polarized[anchor] + np.array(mu)
                    s = float(np.concatenate([shifted, e.invariant[anchor]])
                              @ full[j])
                    best = max(best, s)
                if best > t.high:
                    expected.add(j)
            if got != expected:
                c.check(False, f"{d_po}-d seed {seed}: closed form gave "
                               f"{sorted(got)}, grid gave {sorted(expected)}")
                return
            cases += 1
        c.check(True, f"exact set equality on {cases} instances "
                      f"(1-d and 2-d, grid step bound/50)")


# ---------------------------------------------------------------------------
# 6. unified index separation against density-matched controls


def test_unified_index_separates_and_beats_classic():
    cfg = RunConfig(n_per_class=100, p_intra=0.08, p_inter=0.01, d_x=16,
                    signal=3.0, epochs=150, init_epochs=10,
                    feature_weight=0.05, d_po=16, d_in=48)
    with criterion(6, "index separation") as c:
        study = index_separation_study(cfg, seeds=range(5))
        uni = study["unified_separation"]
        cls = study["classic_separation"]
        c.check(uni >= 0.3 and cls < uni,
                f"unified separation {uni:.4f} (need >= 0.3), "
                f"classic separation {cls:.4f} (must be smaller)")


# ---------------------------------------------------------------------------
# 7. supervision: sparse labels help; corrupted initializations get
# repaired rather than echoed


def test_supervision_benefit_and_initialization_robustness():
    with criterion(7, "semi-supervision benefit") as c:
        agg, per_run = _mid_suite()
        full = agg["full"]["mean_accuracy"]
        lab5 = agg["labels-5"]["mean_accuracy"]
        r0_final = agg["r0-60"]["mean_accuracy"]
        r0_base = agg["r0-60"]["mean_r0_accuracy"]
        c.check(lab5 >= full + 0.01 and r0_final >= r0_base,
                f"5% labels {lab5:.4f} vs unsupervised {full:.4f} "
                f"(need +0.01); 60%-corrupted start: trained {r0_final:.4f} "
                f"vs reading the start directly {r0_base:.4f}")


# ---------------------------------------------------------------------------
# 8. numeric contracts


def _contract_row_sums():
    rng = np.random.default_rng(0)
    h = rng.standard_normal((300, 6))
    centers = rng.standard_normal((2, 6))
    worst = np.abs(soft_assign(h, centers).matrix.sum(axis=1) - 1.0).max()
    assignment, _ = soft_kmeans(h, seed=1)
    worst = max(worst, np.abs(assignment.matrix.sum(axis=1) - 1.0).max())
    return worst <= 1e-9, f"max |row sum - 1| = {worst:.1e}"


def _contract_permutation_floor():
    rng = np.random.default_rng(1)
    floor = 1.0
    for _ in range(10):
        n = 400
        cols = rng.integers(0, 2, size=n)
        assignment = SoftAssignment(matrix=np.eye(2)[cols], sharpness=5.0)
        labels = {i: int(v) for i, v in enumerate(rng.integers(0, 2, size=n))}
        floor = min(floor, clustering_accuracy(assignment, labels))
    return floor >= 0.5, f"worst permutation-max accuracy {floor:.3f}"


def _contract_rescale_invariance():
    rng = np.random.default_rng(2)
    n = 40
    e = EmbeddingPair(5.0 * rng.standard_normal((n, 4)),
                      5.0 * rng.standard_normal((n, 4)))
    edges = [(i, (i + 7) % n) for i in range(n)]
    base = unified_index(e, edges)
    worst = 0.0
    for scale in (0.5, 2.0, 10.0):
        scaled = unified_index(EmbeddingPair(scale * e.polarized,
                                             scale * e.invariant), edges)
        worst = max(worst,
                    abs(scaled.index - base.index) / abs(base.index),
                    abs(scaled.normalized - base.normalized) / base.normalized)
    return worst <= 1e-9, f"relative drift {worst:.1e} under joint rescale"


def _contract_freeze_digests(tmp_path):
    cfg = RunConfig(n_per_class=25, p_intra=0.3, p_inter=0.02, d_x=8,
                    signal=3.0, d_h=16, d_po=8, d_in=8, epochs=15,
                    init_epochs=3, seed=5)
    data = generate(cfg.synth_config(seed=3))
    result = train(data.graph, cfg.train_config(), cfg.loss_config(),
                   cfg.sampler_config())

    def digest(tag):
        path = tmp_path / f"{tag}.ckpt"
        save_params(result.params, path)
        return file_digest(path)

    before = digest("before")
    train_classifier(result.embeddings.full, data.labels,
                     seed=child_seed(cfg.seed, "classifier"))
    after_classifier = digest("after-classifier")
    prompts = make_prompts(data.graph, data.labels, k_induced=5)
    m = fit_connect(data.graph, result.embeddings, seed=0)
    prompt_tune(result.params, data.graph, prompts, data.labels, m, epochs=5)
    after_prompts = digest("after-prompts")
    ok = before == after_classifier == after_prompts
    return ok, ("encoder digest constant across classifier and prompt paths"
                if ok else "a supervision path touched the frozen encoder")


def _contract_bitwise_rerun(tmp_path):
    cfg = RunConfig(n_per_class=30, p_intra=0.25, p_inter=0.02, d_x=8,
                    signal=2.0, d_h=16, d_po=8, d_in=8, epochs=12,
                    init_epochs=3, seed=9)
    data = generate(cfg.synth_config(seed=4))
    digests = []
    matrices = []
    for run in range(2):
        result = train(data.graph, cfg.train_config(), cfg.loss_config(),
                       cfg.sampler_config())
        path = tmp_path / f"run{run}.ckpt"
        save_params(result.params, path)
        digests.append(file_digest(path))
        assignment, _ = soft_kmeans(result.embeddings.polarized,
                                    seed=child_seed(cfg.seed, "kmeans"))
        matrices.append(assignment.matrix)
    ok = digests[0] == digests[1] and np.array_equal(matrices[0], matrices[1])
    return ok, ("checkpoints and assignments bit-identical"
                if ok else "fixed-seed rerun diverged")


def test_numeric_contracts(tmp_path):
    checks = {
        "row sums": _contract_row_sums(),
        "permutation floor": _contract_permutation_floor(),
        "rescale invariance": _contract_rescale_invariance(),
        "frozen encoder": _contract_freeze_digests(tmp_path),
        "bitwise rerun": _contract_bitwise_rerun(tmp_path),
    }
    with criterion(8, "numeric contracts") as c:
        failed = {k: msg for k, (ok, msg) in checks.items() if not ok}
        if failed:
            c.check(False, "; ".join(f"{k}: {msg}" for k, msg in failed.items()))
        else:
            c.check(True, "; ".join(f"{k}: {msg}"
                                    for k, (ok, msg) in checks.items()))
