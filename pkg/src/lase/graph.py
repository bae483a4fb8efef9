"""Attributed graph container, TSV loading, splits and synthetic generators.

Graphs are immutable after construction: node features, link features and the
per-node adjacency (lists of (neighbor id, link id) pairs, sorted by neighbor
id) are plain numpy arrays / tuples.  Node files are tab-separated
``id<TAB>label<TAB>f1,f2,...`` with ``-`` for a missing label; link files are
``src<TAB>dst<TAB>f1,f2,...``.  A sidecar JSON manifest may carry
``{d_node, d_link, n_labels, undirected}`` and overrides inference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np


class GraphError(ValueError):
    """Invalid graph data (format, dimensions, endpoints, values)."""


@dataclass(frozen=True)
class Split:
    train: tuple
    val: tuple
    test: tuple


class AttributedGraph:
    """Nodes and links with feature vectors; undirected by default."""

    def __init__(self, node_features, labels, links, link_features,
                 n_labels, undirected=True):
        self.node_features = np.asarray(node_features, dtype=np.float64)
        if self.node_features.ndim != 2 or self.node_features.shape[1] < 1:
            raise GraphError("node features must be (n_nodes, d_node) with d_node > 0")
        self.labels = list(labels)
        self.links = [(int(s), int(d)) for (s, d) in links]
        self.link_features = np.asarray(link_features, dtype=np.float64)
        if len(self.links) == 0 and self.link_features.ndim != 2:
            d = self.link_features.shape[-1] if self.link_features.ndim else 1
            self.link_features = self.link_features.reshape(0, max(d, 1))
        if self.link_features.ndim != 2:
            raise GraphError("link features must be (n_links, d_link)")
        self.n_labels = int(n_labels)
        self.undirected = bool(undirected)
        self._validate()
        self.adjacency = self._build_adjacency()

    # -- construction helpers ------------------------------------------------

    def _validate(self):
        n = self.n_nodes
        if not np.all(np.isfinite(self.node_features)):
            raise GraphError("non-finite node feature value")
        if self.link_features.size and not np.all(np.isfinite(self.link_features)):
            raise GraphError("non-finite link feature value")
        if len(self.links) != self.link_features.shape[0]:
            raise GraphError("link count disagrees with link feature rows")
        seen = set()
        for (s, d) in self.links:
            if not (0 <= s < n and 0 <= d < n):
                raise GraphError("dangling link endpoint (%d, %d)" % (s, d))
            if s == d:
                raise GraphError("self-loop (%d, %d) not supported" % (s, d))
            key = (min(s, d), max(s, d)) if self.undirected else (s, d)
            if key in seen:
                raise GraphError("duplicate link between %d and %d" % (s, d))
            seen.add(key)
        for lab in self.labels:
            if lab is not None and not (0 <= lab < self.n_labels):
                raise GraphError("label %r out of range" % (lab,))

    def _build_adjacency(self):
        adj = [[] for _ in range(self.n_nodes)]
        for eid, (s, d) in enumerate(self.links):
            adj[s].append((d, eid))
            if self.undirected:
                adj[d].append((s, eid))
        return tuple(tuple(sorted(a)) for a in adj)

    # -- basic accessors -----------------------------------------------------

    @property
    def n_nodes(self):
        return self.node_features.shape[0]

    @property
    def n_links(self):
        return len(self.links)

    @property
    def d_node(self):
        return self.node_features.shape[1]

    @property
    def d_link(self):
        return self.link_features.shape[1]

    def neighbors(self, u):
        """Sorted (neighbor id, link id) pairs of node u."""
        return self.adjacency[u]

    def degree(self, u):
        return len(self.adjacency[u])

    def with_link_features(self, new_features):
        """Copy of this graph with replaced link features."""
        return AttributedGraph(self.node_features.copy(), self.labels,
                               self.links, new_features, self.n_labels,
                               self.undirected)


# ---------------------------------------------------------------------------
# TSV + manifest I/O
# ---------------------------------------------------------------------------

def _parse_feats(text, expect, what, lineno):
    try:
        vals = [float(t) for t in text.split(",")]
    except ValueError:
        raise GraphError("%s line %d: bad feature list" % (what, lineno))
    if expect is not None and len(vals) != expect:
        raise GraphError("%s line %d: feature dimension %d, expected %d"
                         % (what, lineno, len(vals), expect))
    for v in vals:
        if not math.isfinite(v):
            raise GraphError("%s line %d: non-finite feature" % (what, lineno))
    return vals


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            yield lineno, line


def load_graph(nodes_path, links_path, manifest_path=None, undirected=True):
    """Load an AttributedGraph from node/link TSV files."""
    manifest = {}
    if manifest_path is not None:
        with open(manifest_path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        undirected = bool(manifest.get("undirected", undirected))

    feats, labels = [], []
    d_node = manifest.get("d_node")
    for lineno, line in _data_lines(nodes_path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphError("node line %d: expected 3 tab-separated fields" % lineno)
        nid = int(parts[0])
        if nid != len(feats):
            raise GraphError("node line %d: ids must be dense and in order" % lineno)
        labels.append(None if parts[1] == "-" else int(parts[1]))
        row = _parse_feats(parts[2], d_node, "node", lineno)
        if d_node is None:
            d_node = len(row)
        feats.append(row)

    links, lfeats = [], []
    d_link = manifest.get("d_link")
    for lineno, line in _data_lines(links_path):
        parts = line.split("\t")
        if len(parts) != 3:
            raise GraphError("link line %d: expected 3 tab-separated fields" % lineno)
        links.append((int(parts[0]), int(parts[1])))
        row = _parse_feats(parts[2], d_link, "link", lineno)
        if d_link is None:
            d_link = len(row)
        lfeats.append(row)

    n_labels = manifest.get("n_labels")
    if n_labels is None:
        n_labels = 1 + max((l for l in labels if l is not None), default=-1)
    lf = np.asarray(lfeats, dtype=np.float64)
    if lf.size == 0:
        lf = np.zeros((0, d_link or 1))
    return AttributedGraph(np.asarray(feats, dtype=np.float64), labels,
                           links, lf, n_labels, undirected=undirected)


def save_graph(g, nodes_path, links_path, manifest_path=None):
    """Write a graph back out in the loader's format (bit-exact floats)."""
    with open(nodes_path, "w", encoding="utf-8") as fh:
        for i in range(g.n_nodes):
            lab = "-" if g.labels[i] is None else str(g.labels[i])
            fh.write("%d\t%s\t%s\n" % (
                i, lab, ",".join(repr(float(v)) for v in g.node_features[i])))
    with open(links_path, "w", encoding="utf-8") as fh:
        for eid, (s, d) in enumerate(g.links):
            fh.write("%d\t%d\t%s\n" % (
                s, d, ",".join(repr(float(v)) for v in g.link_features[eid])))
    if manifest_path is not None:
        with open(manifest_path, "w", encoding="utf-8") as fh:
            json.dump({"d_node": g.d_node, "d_link": g.d_link,
                       "n_labels": g.n_labels, "undirected": g.undirected},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def make_split(g, fractions=(0.65, 0.15, 0.20), seed=0):
    """Deterministic train/val/test split; isolated nodes never train."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(g.n_nodes)
    n_train = int(math.floor(fractions[0] * g.n_nodes))
    n_val = int(math.floor(fractions[1] * g.n_nodes))
    train = [int(u) for u in order[:n_train] if g.degree(int(u)) > 0]
    val = [int(u) for u in order[n_train:n_train + n_val]]
    test = [int(u) for u in order[n_train + n_val:]]
    if not train:
        raise ValueError("empty train set: all candidate train nodes are isolated")
    return Split(tuple(sorted(train)), tuple(sorted(val)), tuple(sorted(test)))


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------

SYNTH_KINDS = ("interaction", "concat-blind", "random")


def _random_regular_links(n, deg, rng):
    """Approximately deg-regular simple undirected link list."""
    links = set()
    degree = np.zeros(n, dtype=int)
    for u in range(n):
        tries = 0
        while degree[u] < deg and tries < 50 * deg:
            v = int(rng.integers(n))
            tries += 1
            key = (min(u, v), max(u, v))
            if v == u or key in links:
                continue
            links.add(key)
            degree[u] += 1
            degree[v] += 1
    return sorted(links)


def _pairing_rule(g, u):
    """Ground-truth statistic of the interaction generator for node u."""
    s = 0.0
    for v, eid in g.neighbors(u):
        s += float(g.node_features[v] @ g.link_features[eid])
    return s


def interaction_label(g, u):
    """Replay the interaction generator's labelling rule for node u."""
    return int(_pairing_rule(g, u) > 0.0)


def synth_graph(kind, n, seed=0):
    """Generate a labelled synthetic graph and a split.

    ``interaction``: labels depend only on the sign of the summed elementwise
    node-feature / link-feature interactions in each neighborhood (features
    are +-1 with odd dimension and odd degree, so the sum is never zero).
    ``concat-blind``: disjoint 6-node blocks, each holding two star
    neighborhoods whose node-sums and link-sums agree while the (node, link)
    pairings - and the center labels - differ.
    ``random``: labels independent of everything.
    """
    if kind not in SYNTH_KINDS:
        raise ValueError("unknown synthetic kind %r" % (kind,))
    if n < 10:
        raise ValueError("n must be >= 10")
    rng = np.random.default_rng(seed)

    if kind == "interaction":
        d = 3
        deg = 5
        links = _random_regular_links(n, deg, rng)
        nf = rng.choice([-1.0, 1.0], size=(n, d))
        lf = rng.choice([-1.0, 1.0], size=(len(links), d))
        g = AttributedGraph(nf, [None] * n, links, lf, 2)
        # Odd per-neighbor contributions; nodes with even degree can tie at 0,
        # so bump their feature sign on one coordinate until the tie breaks.
        labels = []
        for u in range(n):
            s = _pairing_rule(g, u)
            labels.append(int(s > 0.0) if s != 0.0 else int(rng.integers(2)))
        g = AttributedGraph(nf, labels, links, lf, 2)
        return g, make_split(g, seed=seed + 1)

    if kind == "concat-blind":
        blocks = max(2, n // 6)
        d_node, d_link = 3, 3
        nf, lf, links, labels = [], [], [], []
        for b in range(blocks):
            center = rng.normal(size=d_node)
            a, bb = rng.normal(size=d_node), rng.normal(size=d_node)
            x, y = rng.normal(size=d_link), rng.normal(size=d_link)
            base = 6 * b
            # Block layout: [u, v1, v2, u', v1', v2'].
            nf += [center, a, bb, center, a, bb]
            labels += [0, 0, 0, 1, 1, 1]
            links += [(base, base + 1), (base, base + 2),
                      (base + 3, base + 4), (base + 3, base + 5)]
            lf += [x, y, y, x]
        g = AttributedGraph(np.array(nf), labels, links, np.array(lf), 2)
        return g, make_split(g, seed=seed + 1)

    # random
    d = 4
    links = _random_regular_links(n, 4, rng)
    nf = rng.normal(size=(n, d))
    lf = rng.normal(size=(len(links), d))
    n_labels = 3
    labels = [int(rng.integers(n_labels)) for _ in range(n)]
    g = AttributedGraph(nf, labels, links, lf, n_labels)
    return g, make_split(g, seed=seed + 1)


def concat_blind_duos(g):
    """Paired center node ids (u, u') of a concat-blind graph."""
    return [(b, b + 3) for b in range(0, g.n_nodes, 6)]
