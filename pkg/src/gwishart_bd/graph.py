"""Undirected graphs on ``p`` labelled vertices.

Besides the immutable :class:`Graph` value this module carries the random
structure generators used by the simulation harness, the chordless-path
profile of a vertex pair, and maximum-cardinality-search machinery for
decomposable (chordal) graphs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    Disconnected,
    EdgePresent,
    IndexOutOfRange,
    NotDecomposable,
    SelfLoop,
    TooFewVertices,
    UnsupportedKind,
)

GRAPH_KINDS = ("scale_free", "random_p", "random_2p", "cluster")

DEFAULT_MAX_LEN = 12
DEFAULT_MAX_PATHS = 10_000


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph with canonical (sorted, ``i < j``) edges."""

    p: int
    edges: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if self.p < 1:
            raise IndexOutOfRange(f"vertex count must be >= 1, got {self.p}")
        canon = set()
        for e in self.edges:
            i, j = int(e[0]), int(e[1])
            if i == j:
                raise SelfLoop(f"self-loop at vertex {i}")
            if not (0 <= i < self.p and 0 <= j < self.p):
                raise IndexOutOfRange(f"edge ({i}, {j}) outside 0..{self.p - 1}")
            canon.add((min(i, j), max(i, j)))
        object.__setattr__(self, "edges", tuple(sorted(canon)))

    # -- construction -----------------------------------------------------
    @classmethod
    def from_adjacency(cls, adj) -> "Graph":
        adj = np.asarray(adj, dtype=bool)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise IndexOutOfRange("adjacency must be square")
        iu, ju = np.nonzero(np.triu(adj | adj.T, 1))
        return cls(adj.shape[0], tuple(zip(iu.tolist(), ju.tolist())))

    @classmethod
    def complete(cls, p: int) -> "Graph":
        return cls(p, tuple(combinations(range(p), 2)))

    @classmethod
    def cycle(cls, p: int) -> "Graph":
        return cls(p, tuple((i, (i + 1) % p) for i in range(p)))

    @classmethod
    def path(cls, p: int) -> "Graph":
        return cls(p, tuple((i, i + 1) for i in range(p - 1)))

    # -- queries ----------------------------------------------------------
    @cached_property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.p, self.p), dtype=bool)
        for i, j in self.edges:
            a[i, j] = a[j, i] = True
        a.setflags(write=False)
        return a

    @cached_property
    def _nbrs(self) -> tuple[frozenset, ...]:
        nb = [set() for _ in range(self.p)]
        for i, j in self.edges:
            nb[i].add(j)
            nb[j].add(i)
        return tuple(frozenset(s) for s in nb)

    @cached_property
    def fingerprint(self) -> str:
        h = hashlib.blake2b(digest_size=12)
        h.update(str(self.p).encode())
        for i, j in self.edges:
            h.update(f",{i}-{j}".encode())
        return h.hexdigest()

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, v: int) -> frozenset:
        self._check_vertex(v)
        return self._nbrs[v]

    def has_edge(self, i: int, j: int) -> bool:
        return bool(self.adjacency[i, j])

    def common_neighbors(self, i: int, j: int) -> frozenset:
        return self._nbrs[i] & self._nbrs[j]

    def with_edge(self, i: int, j: int) -> "Graph":
        return Graph(self.p, self.edges + ((i, j),))

    def without_edge(self, i: int, j: int) -> "Graph":
        e = (min(i, j), max(i, j))
        return Graph(self.p, tuple(x for x in self.edges if x != e))

    def toggled(self, i: int, j: int) -> "Graph":
        return self.without_edge(i, j) if self.has_edge(i, j) else self.with_edge(i, j)

    def complement(self) -> "Graph":
        return Graph(self.p, tuple(e for e in combinations(range(self.p), 2) if not self.has_edge(*e)))

    def subgraph(self, vertices: Sequence[int]) -> "Graph":
        """Induced subgraph, relabelled to ``0..len(vertices)-1`` in the given order."""
        idx = {v: k for k, v in enumerate(vertices)}
        sub = [(idx[i], idx[j]) for i, j in self.edges if i in idx and j in idx]
        return Graph(len(vertices), tuple(sub))

    def components(self) -> list[list[int]]:
        seen = np.zeros(self.p, dtype=bool)
        comps = []
        for s in range(self.p):
            if seen[s]:
                continue
            stack, comp = [s], []
            seen[s] = True
            while stack:
                v = stack.pop()
                comp.append(v)
                for w in self._nbrs[v]:
                    if not seen[w]:
                        seen[w] = True
                        stack.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) == 1

    def _check_vertex(self, v: int):
        if not 0 <= v < self.p:
            raise IndexOutOfRange(f"vertex {v} outside 0..{self.p - 1}")

    # -- serialization ----------------------------------------------------
    def to_dict(self) -> dict:
        return {"p": self.p, "edges": [list(e) for e in self.edges]}

    @classmethod
    def from_dict(cls, d: dict) -> "Graph":
        return cls(int(d["p"]), tuple(tuple(e) for e in d.get("edges", [])))

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "Graph":
        return cls.from_dict(json.loads(s))


def new_graph(p: int, edges: Iterable[Sequence[int]] = ()) -> Graph:
    """Build a canonical :class:`Graph`; duplicate and reversed pairs collapse."""
    return Graph(p, tuple(tuple(e) for e in edges))


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def _bernoulli_graph(p: int, prob: float, rng: np.random.Generator) -> list[tuple[int, int]]:
    iu, ju = np.triu_indices(p, 1)
    keep = rng.random(iu.size) < min(prob, 1.0)
    return list(zip(iu[keep].tolist(), ju[keep].tolist()))


def _preferential_attachment(p: int, rng: np.random.Generator) -> list[tuple[int, int]]:
    degree = np.zeros(p)
    edges = []
    for v in range(1, p):
        if v == 1:
            target = 0
        else:
            target = int(rng.choice(v, p=degree[:v] / degree[:v].sum()))
        edges.append((target, v))
        degree[target] += 1
        degree[v] += 1
    return edges


def cluster_blocks(p: int) -> list[np.ndarray]:
    """Vertex blocks used by the ``cluster`` generator (contiguous, near-equal)."""
    n_clusters = max(2, p // 20)
    return np.array_split(np.arange(p), n_clusters)


def generate(kind: str, p: int, seed=None) -> Graph:
    """Random graph of the given structure.

    ``random_p`` and ``random_2p`` draw every pair independently with
    probability ``2/(p-1)`` and ``4/(p-1)`` so that the expected number of
    edges is ``p`` and ``2p``; ``cluster`` fills ``max(2, p // 20)`` disjoint
    blocks with ``random_p`` subgraphs; ``scale_free`` is a Barabasi-Albert
    tree with one edge per new vertex.
    """
    if kind not in GRAPH_KINDS:
        raise UnsupportedKind(f"unknown graph kind {kind!r}; expected one of {GRAPH_KINDS}")
    if p < 2 or (kind == "cluster" and p < 4):
        raise TooFewVertices(f"{kind} needs more vertices than p={p}")
    rng = np.random.default_rng(seed)
    if kind == "scale_free":
        edges = _preferential_attachment(p, rng)
    elif kind == "random_p":
        edges = _bernoulli_graph(p, 2.0 / (p - 1), rng)
    elif kind == "random_2p":
        edges = _bernoulli_graph(p, 4.0 / (p - 1), rng)
    else:
        edges = []
        for block in cluster_blocks(p):
            m = len(block)
            if m < 2:
                continue
            for i, j in _bernoulli_graph(m, 2.0 / (m - 1), rng):
                edges.append((int(block[i]), int(block[j])))
    return Graph(p, tuple(edges))


def random_graph_like(g: Graph, seed=None) -> Graph:
    """Uniformly random graph on ``g.p`` vertices with the same edge count."""
    rng = np.random.default_rng(seed)
    pairs = list(combinations(range(g.p), 2))
    pick = rng.choice(len(pairs), size=g.n_edges, replace=False)
    return Graph(g.p, tuple(pairs[k] for k in sorted(pick)))


# ---------------------------------------------------------------------------
# chordless paths
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PathProfile:
    """Chordless ``q``-``r`` paths split into length-2 paths and longer ones.

    ``long_lengths`` holds, per longer path, the number of interior vertices.
    """

    d: int
    long_lengths: tuple[int, ...] = ()
    truncated: bool = False


def path_profile(g: Graph, q: int, r: int, max_len: int = DEFAULT_MAX_LEN,
                 max_paths: int = DEFAULT_MAX_PATHS) -> PathProfile:
    """Enumerate chordless paths between two non-adjacent vertices.

    Depth-first search that only extends a partial path with a vertex that
    is adjacent to no path vertex other than the current endpoint, so every
    completed path is chordless. ``max_len`` caps the number of edges of a
    path and ``max_paths`` the number of long paths; hitting either sets
    ``truncated``.
    """
    g._check_vertex(q)
    g._check_vertex(r)
    if q == r:
        raise SelfLoop("q and r must differ")
    if g.has_edge(q, r):
        raise EdgePresent(f"edge ({q}, {r}) must be removed before profiling")
    nb = g._nbrs
    d = len(nb[q] & nb[r])
    lengths: list[int] = []
    truncated = False
    # blocked[w] > 0: w touches a path vertex other than the current endpoint
    blocked = np.zeros(g.p, dtype=np.int32)
    on_path = np.zeros(g.p, dtype=bool)
    on_path[q] = True

    def extend(path: list[int]) -> bool:
        nonlocal truncated
        last = path[-1]
        for w in sorted(nb[last]):
            if on_path[w] or blocked[w] or w == r:
                continue
            if w in nb[r]:
                # close q .. last, w, r; len(path) interior vertices including w
                if len(path) == 1:
                    continue
                if len(path) + 1 > max_len:
                    truncated = True
                elif len(lengths) >= max_paths:
                    truncated = True
                    return False
                else:
                    lengths.append(len(path))
                continue
            if len(path) + 2 > max_len:
                truncated = True
                continue
            for u in nb[last]:
                blocked[u] += 1
            on_path[w] = True
            path.append(w)
            keep_going = extend(path)
            path.pop()
            on_path[w] = False
            for u in nb[last]:
                blocked[u] -= 1
            if not keep_going:
                return False
        return True

    extend([q])
    return PathProfile(d=d, long_lengths=tuple(sorted(lengths)), truncated=truncated)


# ---------------------------------------------------------------------------
# decomposable graphs
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PerfectSequence:
    """Cliques in running-intersection order with their separators."""

    components: tuple[frozenset, ...]
    separators: tuple[frozenset, ...] = field(default=())


def mcs_order(g: Graph, start: int | None = None) -> list[int]:
    """Maximum cardinality search visit order (ties broken by lowest label)."""
    nb = g._nbrs
    weight = np.zeros(g.p, dtype=np.int64)
    visited = np.zeros(g.p, dtype=bool)
    order = []
    for step in range(g.p):
        if step == 0 and start is not None:
            v = start
        else:
            cand = np.where(~visited, weight, -1)
            v = int(np.argmax(cand))
        visited[v] = True
        order.append(v)
        for w in nb[v]:
            if not visited[w]:
                weight[w] += 1
    return order


def _sequence_from_order(g: Graph, order: list[int]) -> PerfectSequence:
    nb = g._nbrs
    pos = {v: k for k, v in enumerate(order)}
    cliques: list[set] = []
    seps: list[frozenset] = []
    prev_size = -1
    for k, v in enumerate(order):
        earlier = {w for w in nb[v] if pos[w] < k}
        for a, b in combinations(earlier, 2):
            if b not in nb[a]:
                raise NotDecomposable(f"vertex {v}: earlier neighbours {a}, {b} not adjacent")
        if k == 0 or len(earlier) <= prev_size:
            if k > 0:
                seps.append(frozenset(earlier))
            cliques.append(earlier | {v})
        else:
            cliques[-1].add(v)
        prev_size = len(earlier)
    return PerfectSequence(tuple(frozenset(c) for c in cliques), tuple(seps))


def perfect_sequence(g: Graph) -> PerfectSequence:
    """Cliques of a connected decomposable graph in MCS order.

    Raises :class:`NotDecomposable` for non-chordal graphs and
    :class:`Disconnected` when the graph has several components (use
    :func:`decompose` for those).
    """
    if not g.is_connected():
        raise Disconnected("perfect_sequence needs a connected graph; use decompose()")
    return _sequence_from_order(g, mcs_order(g))


def decompose(g: Graph) -> PerfectSequence:
    """Per-component perfect sequences joined by empty separators."""
    comps: list[frozenset] = []
    seps: list[frozenset] = []
    for verts in g.components():
        sub = g.subgraph(verts)
        seq = _sequence_from_order(sub, mcs_order(sub))
        if comps:
            seps.append(frozenset())
        comps.extend(frozenset(verts[i] for i in c) for c in seq.components)
        seps.extend(frozenset(verts[i] for i in s) for s in seq.separators)
    return PerfectSequence(tuple(comps), tuple(seps))


def is_decomposable(g: Graph) -> bool:
    try:
        decompose(g)
    except NotDecomposable:
        return False
    return True
