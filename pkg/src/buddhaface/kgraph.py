"""Artistic knowledge graph and node2vec embeddings.

The graph is bipartite: one node per statue image, one node per
(attribute family, value), and an edge from every image to each attribute
value of its statue. Embeddings come from second-order biased random walks
fed to a skip-gram model with negative sampling.
"""

from __future__ import annotations

import bisect
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numba
import numpy as np

from .catalog import MATERIAL_FAMILIES, StatueRecord
from .errors import ValidationError

log = logging.getLogger(__name__)

EMBEDDING_DIM = 128

KG_FAMILIES = ("dimensions", *MATERIAL_FAMILIES, "construction_method", "statue_type")
KG_TIME_FAMILIES = (*KG_FAMILIES, "century")


@dataclass(frozen=True)
class Node:
    id: str
    kind: str  # "statue_image" | "attribute_value"
    family: str | None = None
    value: object = None


@dataclass
class KnowledgeGraph:
    nodes: dict[str, Node] = field(default_factory=dict)
    edges: set[tuple[str, str]] = field(default_factory=set)
    families: tuple[str, ...] = ()

    def adjacency(self) -> dict[str, list[str]]:
        adj: dict[str, list[str]] = {n: [] for n in sorted(self.nodes)}
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        for nbrs in adj.values():
            nbrs.sort()
        return adj

    def check(self):
        """Raise if the graph is not a simple image/attribute bipartite graph."""
        for a, b in self.edges:
            if a == b:
                raise ValidationError(f"self-loop on {a!r}")
            kinds = {self.nodes[a].kind, self.nodes[b].kind}
            if kinds != {"statue_image", "attribute_value"}:
                raise ValidationError(f"edge {a!r}-{b!r} is not image-attribute")
        if len({tuple(sorted(e)) for e in self.edges}) != len(self.edges):
            raise ValidationError("duplicate edge")


def attribute_node_id(family: str, value) -> str:
    return f"{family}={value}"


def build_kg(records: Sequence[StatueRecord], include_time: bool = False) -> KnowledgeGraph:
    families = KG_TIME_FAMILIES if include_time else KG_FAMILIES
    kg = KnowledgeGraph(families=families)
    for rec in records:
        for image_id in rec.image_ids:
            if image_id in kg.nodes:
                raise ValidationError(f"image_id {image_id!r} clashes with another node")
            kg.nodes[image_id] = Node(image_id, "statue_image")
        for fam in families:
            for value in sorted(rec.attribute_values(fam), key=str):
                aid = attribute_node_id(fam, value)
                existing = kg.nodes.get(aid)
                if existing is None:
                    kg.nodes[aid] = Node(aid, "attribute_value", fam, value)
                elif existing.kind != "attribute_value":
                    raise ValidationError(f"attribute node {aid!r} clashes with an image_id")
                for image_id in rec.image_ids:
                    kg.edges.add((image_id, aid))
    kg.check()
    return kg


@dataclass(frozen=True)
class Node2VecConfig:
    walk_length: int = 80
    walks_per_node: int = 10
    return_p: float = 1.0
    inout_q: float = 1.0
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    learning_rate: float = 0.025
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        for name in ("walk_length", "walks_per_node", "window", "negatives", "epochs", "workers"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("return_p", "inout_q", "learning_rate"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


class _Walker:
    """Second-order transition sampler with cached cumulative weights."""

    def __init__(self, adj: Mapping[str, Sequence[str]], p: float, q: float):
        self.adj = {k: list(v) for k, v in adj.items()}
        self.nbr_sets = {k: set(v) for k, v in adj.items()}
        self.p = p
        self.q = q
        self._cache: dict[tuple[str, str], np.ndarray] = {}

    def weights(self, prev: str, cur: str) -> np.ndarray:
        prev_nbrs = self.nbr_sets[prev]
        w = [
            1.0 / self.p if x == prev else 1.0 if x in prev_nbrs else 1.0 / self.q
            for x in self.adj[cur]
        ]
        return np.asarray(w)

    def _cdf(self, prev: str, cur: str) -> np.ndarray:
        key = (prev, cur)
        cdf = self._cache.get(key)
        if cdf is None:
            cdf = np.cumsum(self.weights(prev, cur))
            cdf /= cdf[-1]
            self._cache[key] = cdf
        return cdf

    def walk(self, start: str, length: int, rng: np.random.Generator) -> list[str]:
        path = [start]
        nbrs = self.adj[start]
        if not nbrs or length < 2:
            return path
        path.append(nbrs[int(rng.integers(len(nbrs)))])
        while len(path) < length:
            prev, cur = path[-2], path[-1]
            cdf = self._cdf(prev, cur)
            idx = min(bisect.bisect_right(cdf, rng.random()), len(cdf) - 1)
            path.append(self.adj[cur][idx])
        return path[:length]


def _as_adjacency(graph) -> dict[str, list[str]]:
    if isinstance(graph, KnowledgeGraph):
        return graph.adjacency()
    return {k: sorted(v) for k, v in sorted(graph.items())}


def random_walks(graph, cfg: Node2VecConfig) -> list[list[str]]:
    """``walks_per_node`` biased walks from every node.

    ``graph`` is a :class:`KnowledgeGraph` or a plain ``node -> neighbours``
    mapping. Each walk draws from its own generator seeded by
    (seed, round, node index), so walks do not depend on generation order.
    """
    adj = _as_adjacency(graph)
    if not adj:
        raise ValueError("graph has no nodes")
    isolated = [n for n, nb in adj.items() if not nb]
    if isolated:
        log.info("%d isolated node(s) give length-1 walks", len(isolated))
    walker = _Walker(adj, cfg.return_p, cfg.inout_q)
    nodes = list(adj)
    walks = []
    for r in range(cfg.walks_per_node):
        order = np.random.default_rng([cfg.seed, r]).permutation(len(nodes))
        for i in order:
            rng = np.random.default_rng([cfg.seed, r, int(i)])
            walks.append(walker.walk(nodes[i], cfg.walk_length, rng))
    return walks


@dataclass
class NodeEmbedding:
    ids: list[str]
    matrix: np.ndarray  # (n_nodes, 128)

    @property
    def dimension(self) -> int:
        return self.matrix.shape[1]

    def __getitem__(self, node_id: str) -> np.ndarray:
        return self.matrix[self._index[node_id]]

    def __contains__(self, node_id) -> bool:
        return node_id in self._index

    def __post_init__(self):
        self._index = {n: i for i, n in enumerate(self.ids)}

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {n: self.matrix[i] for i, n in enumerate(self.ids)}


@numba.njit(cache=True)
def _sigmoid(x):
    if x > 20.0:
        return 1.0
    if x < -20.0:
        return 0.0
    return 1.0 / (1.0 + np.exp(-x))


@numba.njit(cache=True)
def _sgns_update(w_in, w_out, center, context, cdf, negatives, lr, grad):
    dim = w_in.shape[1]
    grad[:] = 0.0
    for d in range(negatives + 1):
        if d == 0:
            target = context
            label = 1.0
        else:
            target = np.searchsorted(cdf, np.random.random(), side="right")
            if target >= cdf.shape[0]:
                target = cdf.shape[0] - 1
            if target == context:
                continue
            label = 0.0
        f = 0.0
        for k in range(dim):
            f += w_in[center, k] * w_out[target, k]
        g = (label - _sigmoid(f)) * lr
        for k in range(dim):
            grad[k] += g * w_out[target, k]
            w_out[target, k] += g * w_in[center, k]
    for k in range(dim):
        w_in[center, k] += grad[k]


@numba.njit(cache=True)
def _sgns_serial(w_in, w_out, tokens, offsets, cdf, window, negatives, epochs, lr0, seed):
    np.random.seed(seed)
    grad = np.zeros(w_in.shape[1])
    total = epochs * tokens.shape[0]
    done = 0
    for _ in range(epochs):
        for w in range(offsets.shape[0] - 1):
            lo, hi = offsets[w], offsets[w + 1]
            for i in range(lo, hi):
                lr = lr0 * max(1e-4, 1.0 - done / total)
                done += 1
                span = window - np.random.randint(0, window)
                for j in range(max(lo, i - span), min(hi, i + span + 1)):
                    if j != i:
                        _sgns_update(
                            w_in, w_out, tokens[i], tokens[j], cdf, negatives, lr, grad
                        )


@numba.njit(cache=True, parallel=True)
def _sgns_hogwild(w_in, w_out, tokens, offsets, cdf, window, negatives, epochs, lr0, seed):
    np.random.seed(seed)
    n_walks = offsets.shape[0] - 1
    total = epochs * n_walks
    for ep in range(epochs):
        for w in numba.prange(n_walks):
            grad = np.zeros(w_in.shape[1])
            lr = lr0 * max(1e-4, 1.0 - (ep * n_walks + w) / total)
            lo, hi = offsets[w], offsets[w + 1]
            for i in range(lo, hi):
                span = window - np.random.randint(0, window)
                for j in range(max(lo, i - span), min(hi, i + span + 1)):
                    if j != i:
                        _sgns_update(
                            w_in, w_out, tokens[i], tokens[j], cdf, negatives, lr, grad
                        )


def train_embeddings(walks: Sequence[Sequence[str]], cfg: Node2VecConfig) -> NodeEmbedding:
    """Skip-gram with negative sampling over (centre, context) pairs.

    Each centre token uses a context span drawn uniformly from 1..window.
    Negatives follow the unigram distribution raised to 0.75; the learning
    rate decays linearly. ``cfg.workers > 1`` switches to lock-free parallel
    updates, which are not reproducible bit for bit.
    """
    if not walks:
        raise ValueError("no walks to train on")
    ids = sorted({n for walk in walks for n in walk})
    index = {n: i for i, n in enumerate(ids)}
    tokens = np.fromiter((index[n] for walk in walks for n in walk), dtype=np.int64)
    offsets = np.zeros(len(walks) + 1, dtype=np.int64)
    offsets[1:] = np.cumsum([len(w) for w in walks])
    counts = np.bincount(tokens, minlength=len(ids)).astype(np.float64)
    cdf = np.cumsum(counts**0.75)
    cdf /= cdf[-1]

    rng = np.random.default_rng(cfg.seed)
    w_in = (rng.random((len(ids), EMBEDDING_DIM)) - 0.5) / EMBEDDING_DIM
    w_out = np.zeros_like(w_in)
    seed = int(cfg.seed) % (2**32)
    args = (w_in, w_out, tokens, offsets, cdf, cfg.window, cfg.negatives, cfg.epochs,
            float(cfg.learning_rate), seed)
    if cfg.workers > 1:
        numba.set_num_threads(min(cfg.workers, numba.config.NUMBA_NUM_THREADS))
        _sgns_hogwild(*args)
    else:
        _sgns_serial(*args)
    if not np.isfinite(w_in).all():
        raise FloatingPointError("node embedding diverged")
    return NodeEmbedding(ids, w_in)


def node2vec(graph, cfg: Node2VecConfig) -> NodeEmbedding:
    return train_embeddings(random_walks(graph, cfg), cfg)


def write_graph(kg: KnowledgeGraph, edges_path: str | Path, nodes_path: str | Path):
    with open(edges_path, "w", encoding="utf-8") as fh:
        for a, b in sorted(kg.edges):
            fh.write(f"{a}\t{b}\n")
    with open(nodes_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["node_id", "kind", "family", "value"])
        for nid in sorted(kg.nodes):
            node = kg.nodes[nid]
            writer.writerow([nid, node.kind, node.family or "", "" if node.value is None else node.value])


def read_graph(edges_path: str | Path, nodes_path: str | Path) -> KnowledgeGraph:
    kg = KnowledgeGraph()
    families = set()
    with open(nodes_path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            fam = row["family"] or None
            kg.nodes[row["node_id"]] = Node(row["node_id"], row["kind"], fam, row["value"] or None)
            if fam:
                families.add(fam)
    with open(edges_path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                a, b = line.rstrip("\n").split("\t")
                kg.edges.add((a, b))
    kg.families = tuple(f for f in KG_TIME_FAMILIES if f in families)
    kg.check()
    return kg
