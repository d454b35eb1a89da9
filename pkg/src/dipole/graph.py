"""Attributed-graph data model and text file ingestion.

Node ids are dense integers ``0 .. N-1``.  Edges are undirected:
``(src, dst)`` and ``(dst, src)`` with the same type and sign denote the
same edge, and duplicates are merged by summing weights.  Self loops are
rejected.  Node kinds (user or item) are inferred from edge types:
``uu`` edges join two users, ``ii`` two items, and a ``ui`` edge joins a
user (its src endpoint) to an item (its dst endpoint).  A node implied
to be both kinds is a validation error; isolated nodes default to user.

File formats
------------
Edge file: one edge per line, ``src dst etype sign weight`` with the
trailing ``weight`` optional (default 1.0), ``etype`` in {uu, ui, ii},
``sign`` in {+, -, 0}.  Blank lines and ``#`` comments are ignored.

Feature file: header line ``N d_x`` followed by N rows of d_x floats.

Label file: lines ``node_id class`` with class in {0, 1}.

Initial-assignment file: lines ``node_id r1 r2``; omitted nodes default
to (0.5, 0.5); each row must sum to 1 within 1e-9.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, GraphParseError, ValidationError

ETYPES = ("uu", "ui", "ii")
SIGNS = ("+", "-", "0")

USER = 0
ITEM = 1
KIND_NAMES = ("user", "item")


@dataclass(frozen=True)
class EdgeRecord:
    """One undirected edge.  For ``ui`` edges src is the user endpoint."""

    src: int
    dst: int
    etype: str = "uu"
    sign: str = "0"
    weight: float = 1.0

    def __post_init__(self):
        if self.etype not in ETYPES:
            raise ValidationError(f"unknown edge type {self.etype!r}")
        if self.sign not in SIGNS:
            raise ValidationError(f"unknown edge sign {self.sign!r}")
        if self.src == self.dst:
            raise ValidationError(f"self loop on node {self.src}")
        if self.src < 0 or self.dst < 0:
            raise ValidationError("negative node id")
        if not np.isfinite(self.weight) or self.weight < 0:
            raise ValidationError(f"edge weight must be a non-negative real, got {self.weight}")

    def key(self):
        """Canonical merge key; orientation-insensitive."""
        a, b = (self.src, self.dst) if self.src <= self.dst else (self.dst, self.src)
        return (a, b, self.etype, self.sign)


def merge_edges(edges):
    """Merge duplicate edges (same endpoints, type and sign) by summing
    weights.  Keeps the first seen orientation and returns records sorted
    by canonical key, so the result is deterministic."""
    merged = {}
    for e in edges:
        k = e.key()
        if k in merged:
            prev = merged[k]
            merged[k] = EdgeRecord(prev.src, prev.dst, prev.etype, prev.sign,
                                   prev.weight + e.weight)
        else:
            merged[k] = e
    return [merged[k] for k in sorted(merged)]


def infer_node_kinds(num_nodes, edges):
    """Derive user/item kinds from edge types; conflicts raise."""
    kind = np.full(num_nodes, -1, dtype=np.int8)

    def assign(node, k):
        if kind[node] not in (-1, k):
            raise ValidationError(
                f"node {node} is implied to be both "
                f"{KIND_NAMES[kind[node]]} and {KIND_NAMES[k]}")
        kind[node] = k

    for e in edges:
        if e.etype == "uu":
            assign(e.src, USER)
            assign(e.dst, USER)
        elif e.etype == "ii":
            assign(e.src, ITEM)
            assign(e.dst, ITEM)
        else:
            assign(e.src, USER)
            assign(e.dst, ITEM)
    kind[kind == -1] = USER
    return kind


@dataclass
class DegreeStats:
    node_count: int
    edge_count: int
    mean_degree: float
    max_degree: int


@dataclass
class AttributedGraph:
    """Immutable-by-convention graph with node features.

    Attributes
    ----------
    num_nodes : int
    node_kind : int8 array, USER or ITEM per node
    edges : list of EdgeRecord, merged and canonically sorted
    x : (N, d_x) float64 node feature matrix
    labels : optional dict node id -> class in {0, 1}
    r0 : optional (N, 2) initial soft assignment, rows sum to 1
    """

    num_nodes: int
    node_kind: np.ndarray
    edges: list
    x: np.ndarray
    labels: dict | None = None
    r0: np.ndarray | None = None
    _adj: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.num_nodes <= 0:
            raise ValidationError("graph needs at least one node")
        if self.x.shape[0] != self.num_nodes:
            raise ValidationError(
                f"feature rows ({self.x.shape[0]}) != node count ({self.num_nodes})")
        if self.node_kind.shape[0] != self.num_nodes:
            raise ValidationError("node_kind length mismatch")
        for e in self.edges:
            if e.src >= self.num_nodes or e.dst >= self.num_nodes:
                raise ValidationError(
                    f"edge ({e.src}, {e.dst}) references a node outside 0..{self.num_nodes - 1}")
        if self.labels is not None:
            for i, c in self.labels.items():
                if not 0 <= i < self.num_nodes:
                    raise ValidationError(f"label references unknown node {i}")
                if c not in (0, 1):
                    raise ValidationError(f"label class must be 0 or 1, got {c}")
        if self.r0 is not None:
            if self.r0.shape != (self.num_nodes, 2):
                raise ValidationError("initial assignment must be (N, 2)")
            bad = np.flatnonzero(np.abs(self.r0.sum(axis=1) - 1.0) > 1e-9)
            if bad.size:
                raise ValidationError(
                    f"initial assignment row for node {bad[0]} does not sum to 1")

    @property
    def neighbor_sets(self):
        """List of neighbor sets, built lazily and cached."""
        if "nbrs" not in self._adj:
            nbrs = [set() for _ in range(self.num_nodes)]
            for e in self.edges:
                nbrs[e.src].add(e.dst)
                nbrs[e.dst].add(e.src)
            self._adj["nbrs"] = nbrs
        return self._adj["nbrs"]

    def neighbors(self, i):
        if not 0 <= i < self.num_nodes:
            raise ValidationError(f"node {i} out of range")
        return self.neighbor_sets[i]

    @property
    def heterogeneous(self):
        return bool((self.node_kind == ITEM).any())

    @property
    def has_negative_edges(self):
        return any(e.sign == "-" for e in self.edges)

    def edge_index(self):
        """Return ((E, 2) endpoint array, (E,) weight array)."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64), np.zeros(0)
        idx = np.array([(e.src, e.dst) for e in self.edges], dtype=np.int64)
        w = np.array([e.weight for e in self.edges])
        return idx, w

    def encoder_features(self):
        """Feature matrix seen by encoders.

        For heterogeneous graphs a two-column kind one-hot is appended so
        users and items stay distinguishable; homogeneous graphs pass
        through untouched.
        """
        if not self.heterogeneous:
            return self.x
        onehot = np.zeros((self.num_nodes, 2))
        onehot[np.arange(self.num_nodes), self.node_kind] = 1.0
        return np.hstack([self.x, onehot])

    def degree_stats(self):
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        for e in self.edges:
            deg[e.src] += 1
            deg[e.dst] += 1
        return DegreeStats(
            node_count=self.num_nodes,
            edge_count=len(self.edges),
            mean_degree=float(deg.mean()) if self.num_nodes else 0.0,
            max_degree=int(deg.max()) if self.num_nodes else 0,
        )


def build_graph(num_nodes, edges, x, labels=None, r0=None, node_kind=None):
    """Assemble a graph: merges duplicate edges and infers node kinds."""
    edges = list(edges)
    for e in edges:
        if e.src >= num_nodes or e.dst >= num_nodes:
            raise ValidationError(
                f"edge ({e.src}, {e.dst}) references a node outside 0..{num_nodes - 1}")
    if node_kind is None:
        node_kind = infer_node_kinds(num_nodes, edges)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValidationError("feature matrix must be 2-D")
    return AttributedGraph(num_nodes=num_nodes, node_kind=node_kind,
                           edges=merge_edges(edges), x=x, labels=labels, r0=r0)


def _data_lines(path):
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if line:
                yield lineno, line


def _parse_features(path):
    rows = []
    header = None
    for lineno, line in _data_lines(path):
        parts = line.split()
        if header is None:
            if len(parts) != 2:
                raise GraphParseError(f"{path}:{lineno}: expected header 'N d_x'")
            try:
                header = (int(parts[0]), int(parts[1]))
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: non-integer header") from None
            if header[0] <= 0 or header[1] <= 0:
                raise GraphParseError(f"{path}:{lineno}: header values must be positive")
            continue
        if len(parts) != header[1]:
            raise GraphParseError(
                f"{path}:{lineno}: expected {header[1]} values, got {len(parts)}")
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise GraphParseError(f"{path}:{lineno}: non-numeric feature value") from None
    if header is None:
        raise GraphParseError(f"{path}: empty feature file")
    if len(rows) != header[0]:
        raise ValidationError(
            f"{path}: header promises {header[0]} feature rows, found {len(rows)}")
    return np.array(rows, dtype=np.float64)


def _parse_edges(path, num_nodes):
    edges = []
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) not in (4, 5):
            raise GraphParseError(
                f"{path}:{lineno}: expected 'src dst etype sign [weight]', got {len(parts)} fields")
        try:
            src, dst = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(f"{path}:{lineno}: non-integer endpoint") from None
        etype, sign = parts[2], parts[3]
        weight = 1.0
        if len(parts) == 5:
            try:
                weight = float(parts[4])
            except ValueError:
                raise GraphParseError(f"{path}:{lineno}: non-numeric weight") from None
        try:
            rec = EdgeRecord(src, dst, etype, sign, weight)
        except ValidationError as exc:
            raise ValidationError(f"{path}:{lineno}: {exc}") from None
        if src >= num_nodes or dst >= num_nodes:
            raise ValidationError(
                f"{path}:{lineno}: endpoint outside 0..{num_nodes - 1}")
        edges.append(rec)
    return edges


def _parse_labels(path, num_nodes):
    labels = {}
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 2:
            raise GraphParseError(f"{path}:{lineno}: expected 'node_id class'")
        try:
            i, c = int(parts[0]), int(parts[1])
        except ValueError:
            raise GraphParseError(f"{path}:{lineno}: non-integer field") from None
        if not 0 <= i < num_nodes:
            raise ValidationError(f"{path}:{lineno}: unknown node {i}")
        if c not in (0, 1):
            raise ValidationError(f"{path}:{lineno}: class must be 0 or 1")
        labels[i] = c
    return labels


def _parse_r0(path, num_nodes):
    r0 = np.full((num_nodes, 2), 0.5)
    for lineno, line in _data_lines(path):
        parts = line.split()
        if len(parts) != 3:
            raise GraphParseError(f"{path}:{lineno}: expected 'node_id r1 r2'")
        try:
            i = int(parts[0])
            r1, r2 = float(parts[1]), float(parts[2])
        except ValueError:
            raise GraphParseError(f"{path}:{lineno}: non-numeric field") from None
        if not 0 <= i < num_nodes:
            raise ValidationError(f"{path}:{lineno}: unknown node {i}")
        if abs(r1 + r2 - 1.0) > 1e-9:
            raise ValidationError(f"{path}:{lineno}: assignment row does not sum to 1")
        r0[i] = (r1, r2)
    return r0


def load_graph(edge_path, feature_path, label_path=None, r0_path=None):
    """Load a graph from the text formats described in the module docstring."""
    x = _parse_features(feature_path)
    num_nodes = x.shape[0]
    edges = _parse_edges(edge_path, num_nodes)
    labels = _parse_labels(label_path, num_nodes) if label_path else None
    r0 = _parse_r0(r0_path, num_nodes) if r0_path else None
    return build_graph(num_nodes, edges, x, labels=labels, r0=r0)


def save_graph(g, edge_path, feature_path, label_path=None, r0_path=None):
    """Write a graph back to disk.  Floats are written with repr so the
    values survive a save/load round trip bit-exactly."""
    with open(edge_path, "w") as fh:
        for e in g.edges:
            fh.write(f"{e.src} {e.dst} {e.etype} {e.sign} {float(e.weight)!r}\n")
    with open(feature_path, "w") as fh:
        fh.write(f"{g.num_nodes} {g.x.shape[1]}\n")
        for row in g.x:
            fh.write(" ".join(repr(float(v)) for v in row) + "\n")
    if label_path is not None and g.labels is not None:
        with open(label_path, "w") as fh:
            for i in sorted(g.labels):
                fh.write(f"{i} {g.labels[i]}\n")
    if r0_path is not None and g.r0 is not None:
        with open(r0_path, "w") as fh:
            for i in range(g.num_nodes):
                fh.write(f"{i} {float(g.r0[i, 0])!r} {float(g.r0[i, 1])!r}\n")


@dataclass
class NormalizedAdjacency:
    """Symmetrically normalized adjacency with self loops.

    ``variant`` is "unsigned" (single matrix) or "signed" (separate
    positively and negatively normalized matrices).
    """

    variant: str
    matrix: sp.csr_matrix | None = None
    pos: sp.csr_matrix | None = None
    neg: sp.csr_matrix | None = None


def _normalize(num_nodes, rows, cols, weights):
    a = sp.coo_matrix((weights, (rows, cols)), shape=(num_nodes, num_nodes))
    a = a + a.T + sp.eye(num_nodes, format="coo")
    a = a.tocsr()
    deg = np.asarray(a.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)
    d = sp.diags(inv_sqrt)
    return (d @ a @ d).tocsr()


def normalized_adjacency(g, variant="auto"):
    """Build D^{-1/2} (A + I) D^{-1/2}.

    variant "auto" picks "signed" when any negative-sign edge is present,
    else "unsigned".  The unsigned form pools every edge regardless of
    sign; the signed form normalizes the non-negative and negative edge
    sets separately so hostile interactions propagate through their own
    channel.
    """
    if variant == "auto":
        variant = "signed" if g.has_negative_edges else "unsigned"
    if variant not in ("unsigned", "signed"):
        raise ConfigError(f"unknown adjacency variant {variant!r}")
    n = g.num_nodes
    if variant == "unsigned":
        rows = np.array([e.src for e in g.edges], dtype=np.int64)
        cols = np.array([e.dst for e in g.edges], dtype=np.int64)
        w = np.array([e.weight for e in g.edges])
        return NormalizedAdjacency("unsigned", matrix=_normalize(n, rows, cols, w))
    pos_edges = [e for e in g.edges if e.sign != "-"]
    neg_edges = [e for e in g.edges if e.sign == "-"]

    def part(edges):
        rows = np.array([e.src for e in edges], dtype=np.int64)
        cols = np.array([e.dst for e in edges], dtype=np.int64)
        w = np.array([e.weight for e in edges])
        return _normalize(n, rows, cols, w)

    return NormalizedAdjacency("signed", pos=part(pos_edges), neg=part(neg_edges))
