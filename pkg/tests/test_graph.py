import numpy as np
import pytest

from dipole.errors import GraphParseError, ValidationError
from dipole.graph import (EdgeRecord, build_graph, infer_node_kinds,
                          load_graph, merge_edges, normalized_adjacency,
                          save_graph, ITEM, USER)


def write(path, text):
    path.write_text(text)
    return str(path)


def small_files(tmp_path, edges="0 1 uu + 1.0\n1 2 uu - 2.0\n",
                features="3 2\n1.0 2.0\n3.0 4.0\n5.0 6.0\n"):
    return (write(tmp_path / "edges.txt", edges),
            write(tmp_path / "features.txt", features))


def test_load_basic(tmp_path):
    ep, fp = small_files(tmp_path)
    g = load_graph(ep, fp)
    assert g.num_nodes == 3
    assert len(g.edges) == 2
    assert g.x.shape == (3, 2)
    assert g.neighbors(1) == {0, 2}
    assert g.neighbors(0) == {1}


def test_comments_and_blank_lines(tmp_path):
    ep, fp = small_files(tmp_path, edges="# header\n\n0 1 uu + 1.0  # trailing\n")
    g = load_graph(ep, fp)
    assert len(g.edges) == 1


def test_default_weight(tmp_path):
    ep, fp = small_files(tmp_path, edges="0 1 uu +\n")
    g = load_graph(ep, fp)
    assert g.edges[0].weight == 1.0


def test_duplicate_edges_merge(tmp_path):
    ep, fp = small_files(tmp_path, edges="0 1 uu + 1.0\n1 0 uu + 2.5\n0 1 uu - 1.0\n")
    g = load_graph(ep, fp)
    # same endpoints+type+sign merge regardless of orientation; the
    # differently signed edge stays separate
    assert len(g.edges) == 2
    merged = [e for e in g.edges if e.sign == "+"][0]
    assert merged.weight == 3.5


def test_malformed_line_reports_lineno(tmp_path):
    ep, fp = small_files(tmp_path, edges="0 1 uu + 1.0\n0 oops uu + 1.0\n")
    with pytest.raises(GraphParseError, match=":2"):
        load_graph(ep, fp)


def test_bad_sign_and_type(tmp_path):
    ep, fp = small_files(tmp_path, edges="0 1 zz + 1.0\n")
    with pytest.raises(ValidationError):
        load_graph(ep, fp)
    ep2, _ = small_files(tmp_path, edges="0 1 uu ? 1.0\n")
    with pytest.raises(ValidationError):
        load_graph(ep2, fp)


def test_self_loop_rejected(tmp_path):
    ep, fp = small_files(tmp_path, edges="1 1 uu + 1.0\n")
    with pytest.raises(ValidationError, match="self loop"):
        load_graph(ep, fp)


def test_dangling_endpoint_rejected(tmp_path):
    ep, fp = small_files(tmp_path, edges="0 9 uu + 1.0\n")
    with pytest.raises(ValidationError):
        load_graph(ep, fp)


def test_negative_weight_rejected(tmp_path):
    ep, fp = small_files(tmp_path, edges="0 1 uu + -2.0\n")
    with pytest.raises(ValidationError):
        load_graph(ep, fp)


def test_feature_row_count_mismatch(tmp_path):
    ep, fp = small_files(tmp_path, features="4 2\n1 2\n3 4\n5 6\n")
    with pytest.raises(ValidationError):
        load_graph(ep, fp)


def test_feature_width_mismatch(tmp_path):
    ep, fp = small_files(tmp_path, features="3 2\n1 2\n3 4 5\n5 6\n")
    with pytest.raises(GraphParseError, match=":3"):
        load_graph(ep, fp)


def test_labels_and_r0(tmp_path):
    ep, fp = small_files(tmp_path)
    lp = write(tmp_path / "labels.txt", "0 0\n2 1\n")
    rp = write(tmp_path / "r0.txt", "0 0.9 0.1\n1 0.5 0.5\n")
    g = load_graph(ep, fp, label_path=lp, r0_path=rp)
    assert g.labels == {0: 0, 2: 1}
    assert np.allclose(g.r0[0], [0.9, 0.1])
    # omitted rows default to the uniform assignment
    assert np.allclose(g.r0[2], [0.5, 0.5])


def test_bad_label_class(tmp_path):
    ep, fp = small_files(tmp_path)
    lp = write(tmp_path / "labels.txt", "0 3\n")
    with pytest.raises(ValidationError):
        load_graph(ep, fp, label_path=lp)


def test_r0_row_sum_checked(tmp_path):
    ep, fp = small_files(tmp_path)
    rp = write(tmp_path / "r0.txt", "0 0.9 0.2\n")
    with pytest.raises(ValidationError):
        load_graph(ep, fp, r0_path=rp)


def test_kind_inference_and_conflict():
    edges = [EdgeRecord(0, 1, "uu", "+"), EdgeRecord(1, 2, "ui", "+"),
             EdgeRecord(2, 3, "ii", "+")]
    kinds = infer_node_kinds(5, edges)
    assert kinds[0] == USER and kinds[1] == USER
    assert kinds[2] == ITEM and kinds[3] == ITEM
    assert kinds[4] == USER  # isolated defaults to user

    with pytest.raises(ValidationError, match="both"):
        infer_node_kinds(3, [EdgeRecord(0, 1, "uu", "+"), EdgeRecord(1, 2, "ii", "+")])


def test_encoder_features_onehot_only_when_heterogeneous():
    x = np.ones((3, 2))
    g_homo = build_graph(3, [EdgeRecord(0, 1, "uu", "+")], x)
    assert g_homo.encoder_features().shape == (3, 2)
    g_het = build_graph(3, [EdgeRecord(0, 1, "ui", "+")], x)
    feats = g_het.encoder_features()
    assert feats.shape == (3, 4)
    assert feats[0, 2] == 1.0 and feats[1, 3] == 1.0
    # the stored feature matrix is untouched
    assert g_het.x.shape == (3, 2)


def test_roundtrip_exact(tmp_path):
    rng = np.random.default_rng(7)
    x = rng.standard_normal((6, 3))
    edges = [EdgeRecord(0, 1, "uu", "+", 1.25), EdgeRecord(2, 3, "uu", "-", 0.1),
             EdgeRecord(4, 5, "uu", "0", 2.0), EdgeRecord(1, 2, "uu", "+", 1.0)]
    labels = {0: 0, 5: 1}
    r0 = np.column_stack([rng.random(6), np.zeros(6)])
    r0[:, 1] = 1.0 - r0[:, 0]
    g = build_graph(6, edges, x, labels=labels, r0=r0)
    paths = [str(tmp_path / n) for n in ("e.txt", "f.txt", "l.txt", "r.txt")]
    save_graph(g, *paths)
    g2 = load_graph(*paths)
    assert g2.num_nodes == g.num_nodes
    assert [e.key() for e in g2.edges] == [e.key() for e in g.edges]
    assert [e.weight for e in g2.edges] == [e.weight for e in g.edges]
    assert np.array_equal(g2.x, g.x)
    assert g2.labels == g.labels
    assert np.array_equal(g2.r0, g.r0)
    # saving again gives identical bytes
    paths2 = [str(tmp_path / n) for n in ("e2.txt", "f2.txt", "l2.txt", "r2.txt")]
    save_graph(g2, *paths2)
    for a, b in zip(paths, paths2):
        assert open(a, "rb").read() == open(b, "rb").read()


def test_normalized_adjacency_hand_value():
    # two nodes, one unit edge: A+I is all ones, degrees are 2, so every
    # entry of the normalized matrix is 1/2
    g = build_graph(2, [EdgeRecord(0, 1, "uu", "+")], np.ones((2, 1)))
    adj = normalized_adjacency(g)
    assert adj.variant == "unsigned"
    assert np.allclose(adj.matrix.toarray(), 0.5 * np.ones((2, 2)))


def test_normalized_adjacency_rows_with_selfloop_only():
    g = build_graph(2, [], np.ones((2, 1)))
    adj = normalized_adjacency(g)
    assert np.allclose(adj.matrix.toarray(), np.eye(2))


def test_normalized_adjacency_signed_dispatch():
    x = np.ones((3, 1))
    g = build_graph(3, [EdgeRecord(0, 1, "uu", "+"), EdgeRecord(1, 2, "uu", "-")], x)
    adj = normalized_adjacency(g)
    assert adj.variant == "signed"
    # positive channel ignores the hostile edge
    pos = adj.pos.toarray()
    assert pos[1, 2] == 0.0 and pos[0, 1] > 0
    neg = adj.neg.toarray()
    assert neg[1, 2] > 0 and neg[0, 1] == 0.0
    forced = normalized_adjacency(g, variant="unsigned")
    assert forced.variant == "unsigned"
    assert forced.matrix[0, 1] > 0 and forced.matrix[1, 2] > 0


def test_degree_stats_identity():
    # mean degree equals 2E/N on a graph with no duplicate edges
    rng = np.random.default_rng(3)
    n = 40
    pairs = {(int(a), int(b)) for a, b in rng.integers(0, n, size=(120, 2)) if a != b}
    edges = [EdgeRecord(min(a, b), max(a, b), "uu", "0") for a, b in pairs]
    g = build_graph(n, edges, np.zeros((n, 1)))
    stats = g.degree_stats()
    assert stats.mean_degree == pytest.approx(2 * stats.edge_count / n)


def test_reported_mean_degree_matches_published_scale():
    # the themarker graph: 69.4k nodes and 1.6M edges imply mean degree
    # 2E/N ~= 46.1, consistent with the published rounded value 47
    assert abs(2 * 1_600_000 / 69_400 - 47) < 1.0
    # same ratio at one-tenth scale, checked through degree_stats on a
    # ring lattice with 23 forward neighbors per node
    n, k = 6940, 23
    edges = [EdgeRecord(i, (i + d) % n, "uu", "0")
             for i in range(n) for d in range(1, k + 1)]
    g = build_graph(n, edges, np.zeros((n, 1)))
    stats = g.degree_stats()
    assert stats.edge_count == n * k
    assert stats.mean_degree == pytest.approx(2 * n * k / n)
    assert abs(stats.mean_degree - 46.1) < 0.2


def test_merge_edges_is_deterministic():
    e1 = [EdgeRecord(3, 1, "uu", "+"), EdgeRecord(0, 2, "uu", "+")]
    e2 = list(reversed(e1))
    assert [e.key() for e in merge_edges(e1)] == [e.key() for e in merge_edges(e2)]
