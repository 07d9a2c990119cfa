"""Undirected decision graphs, simple paths and shortest-path solvers.

Edges carry dense integer ids ``0..|E|-1``; a cost vector is any float array
indexed by edge id. Paths are simple node sequences.

Two solvers sit behind :func:`shortest_path`:

* Dijkstra when every cost is nonnegative. Ties between equal-cost paths are
  broken by the lexicographically smallest node sequence.
* A general solver otherwise. A negative undirected edge is already a
  negative 2-cycle for textbook Bellman-Ford, so the relaxation runs over
  directed arcs and forbids immediately reversing along the edge just used.
  If that search converges to a simple path it is optimal among simple
  paths. If it hits a negative cycle or returns a walk that revisits a node,
  the solver falls back to an exact branch-and-bound over simple paths. Only
  when that search exceeds its expansion budget is the route reported with
  cost ``+inf``.
"""
from __future__ import annotations

import heapq
import json
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

__all__ = [
    "Graph",
    "Path",
    "Route",
    "NoPathError",
    "CapacityError",
    "shortest_path",
    "second_shortest_simple_path",
    "enumerate_simple_paths",
    "count_simple_paths",
    "line_graph_adjacency",
    "path_cost",
    "max_path_length",
    "read_edge_list",
    "write_edge_list",
    "read_graph_json",
    "write_graph_json",
]

DEFAULT_ENUMERATION_LIMIT = 10_000
DEFAULT_SEARCH_BUDGET = 2_000_000


class NoPathError(ValueError):
    """Sink is not reachable from the source."""


class CapacityError(RuntimeError):
    """An enumeration or search exceeded its configured limit."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph with dense edge ids.

    ``edges[k]`` is the endpoint pair of edge ``k``. Self-loops and parallel
    edges are rejected: a path is a node sequence, so parallel edges would
    make its edge set ambiguous.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    coordinates: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        edges = tuple((int(u), int(v)) for u, v in self.edges)
        object.__setattr__(self, "edges", edges)
        lookup: dict[tuple[int, int], int] = {}
        adjacency: list[list[tuple[int, int]]] = [[] for _ in range(self.node_count)]
        for k, (u, v) in enumerate(edges):
            if not (0 <= u < self.node_count and 0 <= v < self.node_count):
                raise ValueError(f"edge {k} has endpoint outside 0..{self.node_count - 1}")
            if u == v:
                raise ValueError(f"edge {k} is a self-loop on node {u}")
            key = (min(u, v), max(u, v))
            if key in lookup:
                raise ValueError(f"edge {k} duplicates edge {lookup[key]} between {key}")
            lookup[key] = k
            adjacency[u].append((v, k))
            adjacency[v].append((u, k))
        for nbrs in adjacency:
            nbrs.sort()
        object.__setattr__(self, "_lookup", lookup)
        object.__setattr__(self, "_adjacency", tuple(tuple(n) for n in adjacency))
        if self.coordinates is not None:
            coords = np.asarray(self.coordinates, dtype=float)
            if coords.shape[0] != self.node_count:
                raise ValueError("coordinates must have one row per node")
            object.__setattr__(self, "coordinates", coords)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def neighbors(self, node: int) -> tuple[tuple[int, int], ...]:
        """``(neighbor, edge_id)`` pairs sorted by neighbor."""
        return self._adjacency[node]

    def edge_id(self, u: int, v: int) -> int:
        try:
            return self._lookup[(min(u, v), max(u, v))]
        except KeyError:
            raise KeyError(f"no edge between {u} and {v}") from None

    def has_edge(self, u: int, v: int) -> bool:
        return (min(u, v), max(u, v)) in self._lookup

    def incidence(self) -> np.ndarray:
        """Unsigned node-by-edge incidence matrix."""
        inc = np.zeros((self.node_count, self.edge_count))
        for k, (u, v) in enumerate(self.edges):
            inc[u, k] = 1.0
            inc[v, k] = 1.0
        return inc

    def check_node(self, node: int) -> int:
        if not isinstance(node, (int, np.integer)) or not 0 <= node < self.node_count:
            raise ValueError(f"invalid node {node!r} for graph with {self.node_count} nodes")
        return int(node)


@dataclass(frozen=True)
class Path:
    nodes: tuple[int, ...]
    edges: tuple[int, ...]

    @classmethod
    def from_nodes(cls, g: Graph, nodes: Sequence[int]) -> "Path":
        nodes = tuple(int(v) for v in nodes)
        if len(nodes) < 2:
            raise ValueError("a path needs at least two nodes")
        if len(set(nodes)) != len(nodes):
            raise ValueError(f"path {nodes} repeats a vertex")
        for u, v in zip(nodes, nodes[1:]):
            if not g.has_edge(u, v):
                raise ValueError(f"path {nodes} uses a missing edge {u}-{v}")
        edges = tuple(g.edge_id(u, v) for u, v in zip(nodes, nodes[1:]))
        return cls(nodes, edges)

    def cost(self, c) -> float:
        return float(np.sum(np.asarray(c, dtype=float)[list(self.edges)]))

    def __len__(self) -> int:
        return len(self.edges)


class Route(NamedTuple):
    """A path and its total cost. ``path`` is ``None`` only when ``cost`` is ``+inf``."""

    path: Path | None
    cost: float


def path_cost(path: Path, c) -> float:
    return path.cost(c)


def _as_costs(g: Graph, c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.shape != (g.edge_count,):
        raise ValueError(f"cost vector has shape {c.shape}, expected ({g.edge_count},)")
    if not np.all(np.isfinite(c)):
        raise ValueError("cost vector must be finite")
    return c


def _check_endpoints(g: Graph, src, sink) -> tuple[int, int]:
    src, sink = g.check_node(src), g.check_node(sink)
    if src == sink:
        raise ValueError("source and sink must differ")
    return src, sink


def _reachable(g: Graph, src: int, banned_nodes: frozenset, banned_edges: frozenset) -> set[int]:
    seen = {src}
    stack = [src]
    while stack:
        u = stack.pop()
        for v, k in g.neighbors(u):
            if v in seen or v in banned_nodes or k in banned_edges:
                continue
            seen.add(v)
            stack.append(v)
    return seen


def _dijkstra(g, c, src, sink, banned_nodes, banned_edges) -> Route:
    settled = set()
    heap = [(0.0, (src,))]
    while heap:
        d, seq = heapq.heappop(heap)
        u = seq[-1]
        if u in settled:
            continue
        settled.add(u)
        if u == sink:
            return Route(Path.from_nodes(g, seq), float(d))
        for v, k in g.neighbors(u):
            if v in settled or v in banned_nodes or k in banned_edges:
                continue
            heapq.heappush(heap, (d + c[k], seq + (v,)))
    raise NoPathError(f"node {sink} is unreachable from {src}")


def _has_pred_cycle(pred: dict) -> bool:
    """A cycle in the predecessor graph certifies a negative cycle."""
    done: set = set()
    for start in pred:
        if start in done:
            continue
        trail = {}
        state = start
        while state in pred and state not in done:
            if state in trail:
                return True
            trail[state] = True
            state = pred[state]
        done.update(trail)
    return False


def _nonbacktracking_bellman_ford(g, c, src, sink, banned_nodes, banned_edges):
    """Arc-state Bellman-Ford. Returns the node walk or ``None`` on a negative cycle."""
    # state = (node, arrival edge); -1 marks the source state
    dist = {(src, -1): 0.0}
    pred: dict[tuple[int, int], tuple[int, int]] = {}
    arcs = []
    for u in range(g.node_count):
        if u in banned_nodes:
            continue
        for v, k in g.neighbors(u):
            if v not in banned_nodes and k not in banned_edges:
                arcs.append((u, v, k))
    by_node: dict[int, list[tuple[int, int]]] = {}
    for u, v, k in arcs:
        by_node.setdefault(u, []).append((v, k))
    n_states = 2 * len(arcs) + 1
    for sweep in range(n_states):
        if sweep and sweep % 4 == 0 and _has_pred_cycle(pred):
            return None
        changed = False
        for state in sorted(dist):
            d = dist[state]
            u, came = state
            for v, k in by_node.get(u, ()):
                if k == came:
                    continue
                nd = d + c[k]
                key = (v, k)
                if nd < dist.get(key, math.inf) - 1e-12 * (1.0 + abs(nd)):
                    dist[key] = nd
                    pred[key] = state
                    changed = True
        if not changed:
            break
    else:
        return None
    ends = [s for s in dist if s[0] == sink]
    if not ends:
        raise NoPathError(f"node {sink} is unreachable from {src}")
    best = min(ends, key=lambda s: (dist[s], s[1]))
    walk = [best[0]]
    state = best
    for _ in range(n_states):
        if state not in pred:
            break
        state = pred[state]
        walk.append(state[0])
    else:
        return None
    walk.reverse()
    return walk, dist[best]


def _branch_and_bound(g, c, src, sink, banned_nodes, banned_edges, budget) -> Route:
    """Exact minimum-cost simple path by depth-first branch and bound."""
    clipped = np.maximum(c, 0.0)
    # h[v]: clipped-cost distance from v to sink, a lower bound on positive parts
    h = np.full(g.node_count, math.inf)
    h[sink] = 0.0
    heap = [(0.0, sink)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > h[u]:
            continue
        for v, k in g.neighbors(u):
            if v in banned_nodes or k in banned_edges:
                continue
            nd = d + clipped[k]
            if nd < h[v]:
                h[v] = nd
                heapq.heappush(heap, (nd, v))
    if not math.isfinite(h[src]):
        raise NoPathError(f"node {sink} is unreachable from {src}")
    negative = np.minimum(c, 0.0)
    neg_total = float(sum(negative[k] for k in range(g.edge_count) if k not in banned_edges))

    best_cost = math.inf
    best_seq: tuple[int, ...] | None = None
    expansions = 0
    visited = {src}
    seq = [src]

    def dfs(u, cost, neg_left):
        nonlocal best_cost, best_seq, expansions
        expansions += 1
        if expansions > budget:
            raise CapacityError("simple-path search budget exceeded")
        if u == sink:
            cand = tuple(seq)
            if cost < best_cost - 1e-12 or (abs(cost - best_cost) <= 1e-12 and (best_seq is None or cand < best_seq)):
                best_cost, best_seq = cost, cand
            return
        options = []
        for v, k in g.neighbors(u):
            if v in visited or v in banned_nodes or k in banned_edges or not math.isfinite(h[v]):
                continue
            options.append((cost + c[k] + h[v], v, k))
        options.sort()
        for _, v, k in options:
            rest = neg_left - negative[k]
            if cost + c[k] + h[v] + rest > best_cost + 1e-12:
                continue
            visited.add(v)
            seq.append(v)
            dfs(v, cost + c[k], rest)
            seq.pop()
            visited.discard(v)

    dfs(src, 0.0, neg_total)
    if best_seq is None:
        raise NoPathError(f"node {sink} is unreachable from {src}")
    return Route(Path.from_nodes(g, best_seq), best_cost)


def _solve(g, c, src, sink, banned_nodes=frozenset(), banned_edges=frozenset(), method="auto",
           budget=DEFAULT_SEARCH_BUDGET) -> Route:
    if src in banned_nodes or sink not in _reachable(g, src, banned_nodes, banned_edges):
        raise NoPathError(f"node {sink} is unreachable from {src}")
    usable = [k for k in range(g.edge_count) if k not in banned_edges]
    nonneg = not usable or float(np.min(c[usable])) >= 0.0
    if method == "dijkstra" or (method == "auto" and nonneg):
        if not nonneg:
            raise ValueError("Dijkstra requires nonnegative costs")
        return _dijkstra(g, c, src, sink, banned_nodes, banned_edges)
    found = _nonbacktracking_bellman_ford(g, c, src, sink, banned_nodes, banned_edges)
    if found is not None:
        walk, cost = found
        if len(set(walk)) == len(walk):
            return Route(Path.from_nodes(g, walk), float(cost))
    try:
        return _branch_and_bound(g, c, src, sink, banned_nodes, banned_edges, budget)
    except CapacityError:
        warnings.warn("negative-cost route unresolved within search budget; reporting +inf", RuntimeWarning)
        return Route(None, math.inf)


def shortest_path(g: Graph, c, src: int, sink: int, *, method: str = "auto",
                  budget: int = DEFAULT_SEARCH_BUDGET) -> Route:
    """Minimum-cost simple ``src``-``sink`` path.

    ``method`` is ``"auto"`` (Dijkstra if ``min(c) >= 0``, else the general
    solver), ``"dijkstra"`` or ``"general"``.
    """
    c = _as_costs(g, c)
    src, sink = _check_endpoints(g, src, sink)
    return _solve(g, c, src, sink, method=method, budget=budget)


def second_shortest_simple_path(g: Graph, c, src: int, sink: int, best: Path, *,
                                budget: int = DEFAULT_SEARCH_BUDGET) -> Route:
    """Cheapest simple path different from ``best`` (Yen's algorithm with K=2).

    Spur searches use the same dispatching solver, so negative costs are
    handled without shifting weights. Returns ``best`` itself when no other
    simple path exists.
    """
    c = _as_costs(g, c)
    src, sink = _check_endpoints(g, src, sink)
    if best.nodes[0] != src or best.nodes[-1] != sink:
        raise ValueError("best path does not join src and sink")
    candidates: list[tuple[float, tuple[int, ...]]] = []
    for i in range(len(best.nodes) - 1):
        spur = best.nodes[i]
        root = best.nodes[: i + 1]
        banned_nodes = frozenset(root[:-1])
        banned_edges = frozenset({best.edges[i]})
        try:
            route = _solve(g, c, spur, sink, banned_nodes, banned_edges, budget=budget)
        except NoPathError:
            continue
        if route.path is None:
            candidates.append((math.inf, ()))
            continue
        root_cost = float(sum(c[k] for k in best.edges[:i]))
        candidates.append((root_cost + route.cost, root + route.path.nodes[1:]))
    if not candidates:
        return Route(best, best.cost(c))
    cost, nodes = min(candidates, key=lambda t: (t[0], t[1]))
    if not nodes:
        return Route(None, math.inf)
    return Route(Path.from_nodes(g, nodes), cost)


def enumerate_simple_paths(g: Graph, src: int, sink: int, limit: int = DEFAULT_ENUMERATION_LIMIT) -> list[Path]:
    """All simple ``src``-``sink`` paths in lexicographic node order.

    Raises :class:`CapacityError` as soon as more than ``limit`` paths exist.
    """
    if limit < 1:
        raise ValueError("limit must be at least 1")
    src, sink = _check_endpoints(g, src, sink)
    out: list[Path] = []
    seq = [src]
    visited = {src}

    def dfs(u):
        for v, _ in g.neighbors(u):
            if v in visited:
                continue
            seq.append(v)
            if v == sink:
                if len(out) >= limit:
                    raise CapacityError(f"more than {limit} simple paths")
                out.append(Path.from_nodes(g, seq))
            else:
                visited.add(v)
                dfs(v)
                visited.discard(v)
            seq.pop()

    dfs(src)
    return out


def count_simple_paths(g: Graph, src: int, sink: int, limit: int = DEFAULT_ENUMERATION_LIMIT) -> int:
    """Number of simple paths, capped: returns ``limit + 1`` when there are more."""
    try:
        return len(enumerate_simple_paths(g, src, sink, limit))
    except CapacityError:
        return limit + 1


def max_path_length(g: Graph, src: int, sink: int, limit: int = DEFAULT_ENUMERATION_LIMIT) -> int:
    """Edge count of the longest simple path (``L_max``), by enumeration."""
    return max(len(p) for p in enumerate_simple_paths(g, src, sink, limit))


def line_graph_adjacency(g: Graph) -> np.ndarray:
    """Boolean edge-by-edge matrix, true where two distinct edges share an endpoint."""
    inc = g.incidence()
    adj = (inc.T @ inc) > 0
    np.fill_diagonal(adj, False)
    return adj


# -- serialization -----------------------------------------------------------

def write_edge_list(g: Graph, path) -> None:
    with open(path, "w") as fh:
        for k, (u, v) in enumerate(g.edges):
            fh.write(f"{u} {v} {k}\n")


def read_edge_list(path, node_count: int | None = None) -> Graph:
    """Parse ``u v edge_id`` lines; ``#`` starts a comment. Ids must be dense."""
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) == 2:
                u, v = parts
                k = len(rows)
            elif len(parts) == 3:
                u, v, k = parts
            else:
                raise ValueError(f"bad edge-list line: {line!r}")
            rows.append((int(k), int(u), int(v)))
    rows.sort()
    if [k for k, _, _ in rows] != list(range(len(rows))):
        raise ValueError("edge ids must be dense 0..|E|-1")
    n = node_count if node_count is not None else 1 + max(max(u, v) for _, u, v in rows)
    return Graph(n, tuple((u, v) for _, u, v in rows))


def write_graph_json(g: Graph, path) -> None:
    doc = {"node_count": g.node_count, "edges": [list(e) for e in g.edges]}
    if g.coordinates is not None:
        doc["coordinates"] = g.coordinates.tolist()
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def read_graph_json(path) -> Graph:
    with open(path) as fh:
        doc = json.load(fh)
    coords = doc.get("coordinates")
    return Graph(int(doc["node_count"]), tuple(tuple(e) for e in doc["edges"]),
                 None if coords is None else np.asarray(coords, dtype=float))


def graph_from_pairs(pairs: Iterable[tuple[int, int]], node_count: int | None = None) -> Graph:
    pairs = [tuple(p) for p in pairs]
    n = node_count if node_count is not None else 1 + max(max(p) for p in pairs)
    return Graph(n, tuple(pairs))
