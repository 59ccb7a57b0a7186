"""Grid graph, weighted Laplacians, Kron reduction and structural checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np


class GridError(ValueError):
    """Invalid grid structure or grid file."""


@dataclass(frozen=True)
class Node:
    id: int
    is_reference: bool = False
    has_injection: bool = True


@dataclass(frozen=True)
class Edge:
    i: int
    j: int
    beta: float
    g: float = 0.0

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.i, self.j), max(self.i, self.j))


def edge_key(i: int, j: int) -> tuple[int, int]:
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class Grid:
    """Undirected grid with one reference bus.

    Nodes without injection form the zero-injection set ``U``. Construction
    validates the structure, so every ``Grid`` in circulation is connected,
    loop-free in the self-loop sense, and has positive susceptances.
    """

    nodes: tuple[Node, ...]
    edges: tuple[Edge, ...]
    name: str = ""
    _adj: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nodes = tuple(sorted(self.nodes, key=lambda n: n.id))
        edges = tuple(sorted((Edge(*e.key, float(e.beta), float(e.g)) for e in self.edges),
                             key=lambda e: e.key))
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "edges", edges)
        ids = [n.id for n in nodes]
        if len(set(ids)) != len(ids):
            raise GridError("duplicate node id")
        refs = [n.id for n in nodes if n.is_reference]
        if len(refs) != 1:
            raise GridError(f"expected exactly one reference node, found {len(refs)}")
        idset = set(ids)
        seen = set()
        adj: dict[int, dict[int, Edge]] = {i: {} for i in ids}
        for e in edges:
            if e.i == e.j:
                raise GridError(f"self-loop at node {e.i}")
            if e.i not in idset or e.j not in idset:
                raise GridError(f"edge ({e.i},{e.j}) references an unknown node")
            if e.key in seen:
                raise GridError(f"duplicate edge ({e.i},{e.j})")
            if not e.beta > 0:
                raise GridError(f"edge ({e.i},{e.j}) has non-positive susceptance {e.beta}")
            if e.g < 0:
                raise GridError(f"edge ({e.i},{e.j}) has negative conductance {e.g}")
            seen.add(e.key)
            adj[e.i][e.j] = e
            adj[e.j][e.i] = e
        object.__setattr__(self, "_adj", adj)
        if not self._connected():
            raise GridError("grid is not connected")

    def _connected(self) -> bool:
        start = self.nodes[0].id
        stack, seen = [start], {start}
        while stack:
            k = stack.pop()
            for m in self._adj[k]:
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return len(seen) == len(self.nodes)

    @property
    def reference(self) -> int:
        return next(n.id for n in self.nodes if n.is_reference)

    @property
    def node_ids(self) -> list[int]:
        """Non-reference node ids, ascending."""
        return [n.id for n in self.nodes if not n.is_reference]

    @property
    def zero_injection(self) -> frozenset[int]:
        return frozenset(n.id for n in self.nodes if not n.is_reference and not n.has_injection)

    @property
    def excited(self) -> list[int]:
        u = self.zero_injection
        return [i for i in self.node_ids if i not in u]

    @property
    def ordered_labels(self) -> tuple[int, ...]:
        """Non-reference ids with zero-injection nodes first."""
        u = self.zero_injection
        return tuple(sorted(u)) + tuple(i for i in self.node_ids if i not in u)

    def neighbors(self, i: int) -> list[int]:
        return sorted(self._adj[i])

    def degree(self, i: int) -> int:
        return len(self._adj[i])

    def edge(self, i: int, j: int) -> Edge | None:
        return self._adj[i].get(j)

    def edge_set(self, include_reference: bool = False) -> set[tuple[int, int]]:
        ref = self.reference
        return {e.key for e in self.edges if include_reference or ref not in e.key}

    def with_zero_injection(self, zero: Iterable[int]) -> "Grid":
        zero = set(zero)
        nodes = tuple(Node(n.id, n.is_reference, n.is_reference or n.id not in zero)
                      for n in self.nodes)
        return Grid(nodes, self.edges, self.name)

    def with_conductance_ratio(self, ratio: float) -> "Grid":
        """Copy with g = ratio * beta on every line."""
        edges = tuple(Edge(e.i, e.j, e.beta, ratio * e.beta) for e in self.edges)
        return Grid(self.nodes, edges, self.name)

    def relabel(self, mapping: dict[int, int]) -> "Grid":
        nodes = tuple(Node(mapping[n.id], n.is_reference, n.has_injection) for n in self.nodes)
        edges = tuple(Edge(mapping[e.i], mapping[e.j], e.beta, e.g) for e in self.edges)
        return Grid(nodes, edges, self.name)


@dataclass(frozen=True)
class LaplacianMatrix:
    values: np.ndarray
    labels: tuple[int, ...]

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "labels", tuple(int(x) for x in self.labels))

    def index(self, ids: Iterable[int]) -> list[int]:
        pos = {k: n for n, k in enumerate(self.labels)}
        return [pos[i] for i in ids]

    def block(self, rows: Iterable[int], cols: Iterable[int]) -> np.ndarray:
        return self.values[np.ix_(self.index(rows), self.index(cols))]

    def reorder(self, labels: Iterable[int]) -> "LaplacianMatrix":
        labels = tuple(labels)
        return LaplacianMatrix(self.block(labels, labels), labels)


@dataclass(frozen=True)
class TopologyEstimate:
    edges: frozenset
    zero_injection_nodes: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "edges", frozenset(edge_key(*e) for e in self.edges))
        object.__setattr__(self, "zero_injection_nodes", frozenset(self.zero_injection_nodes))


def build_laplacian(grid: Grid, weight: str = "susceptance") -> LaplacianMatrix:
    """Reference-reduced weighted Laplacian, labels ordered U first."""
    if weight not in ("susceptance", "conductance"):
        raise ValueError(f"unknown weight {weight!r}")
    labels = grid.ordered_labels
    pos = {k: n for n, k in enumerate(labels)}
    H = np.zeros((len(labels), len(labels)))
    for e in grid.edges:
        w = e.beta if weight == "susceptance" else e.g
        for a, b in ((e.i, e.j), (e.j, e.i)):
            if a in pos:
                H[pos[a], pos[a]] += w
                if b in pos:
                    H[pos[a], pos[b]] -= w
    return LaplacianMatrix(H, labels)


def kron_reduce(H: LaplacianMatrix, U: Iterable[int]) -> LaplacianMatrix:
    """Schur complement eliminating the nodes in ``U``."""
    U = [u for u in H.labels if u in set(U)]
    keep = [k for k in H.labels if k not in set(U)]
    if not U:
        return H
    Huu = H.block(U, U)
    try:
        X = np.linalg.solve(Huu, H.block(U, keep))
    except np.linalg.LinAlgError as exc:
        raise GridError("singular H^{UU} block in Kron reduction") from exc
    if not np.all(np.isfinite(X)) or np.linalg.cond(Huu) > 1e14:
        raise GridError("singular H^{UU} block in Kron reduction")
    R = H.block(keep, keep) - H.block(keep, U) @ X
    return LaplacianMatrix(0.5 * (R + R.T), keep)


def simple_cycles(grid: Grid, max_len: int = 5) -> list[tuple[int, ...]]:
    """Simple cycles of length 3..max_len, each reported once.

    Bounded DFS rooted at the smallest node of each cycle; a cycle is kept
    only in the orientation whose second node is below its last node.
    """
    adj = {n.id: grid.neighbors(n.id) for n in grid.nodes}
    out = []

    def dfs(root, path, onpath):
        last = path[-1]
        for m in adj[last]:
            if m == root and len(path) >= 3:
                if path[1] < path[-1]:
                    out.append(tuple(path))
            elif m > root and m not in onpath and len(path) < max_len:
                path.append(m)
                onpath.add(m)
                dfs(root, path, onpath)
                onpath.discard(m)
                path.pop()

    for r in sorted(adj):
        dfs(r, [r], {r})
    return out


@dataclass(frozen=True)
class AssumptionReport:
    internal_zero: bool
    nonadjacent_zero: bool
    girth_at_least_4: bool
    no_zero_in_4_loop: bool
    at_most_one_zero_in_5_loop: bool
    details: tuple[str, ...] = ()

    @property
    def assumption2(self) -> bool:
        return self.internal_zero and self.nonadjacent_zero

    @property
    def assumption3(self) -> bool:
        return self.girth_at_least_4 and self.no_zero_in_4_loop and self.at_most_one_zero_in_5_loop

    @property
    def ok(self) -> bool:
        return self.assumption2 and self.assumption3


def validate_assumptions(grid: Grid) -> AssumptionReport:
    U = grid.zero_injection
    details = []
    internal = True
    for u in sorted(U):
        if grid.degree(u) < 2:
            internal = False
            details.append(f"zero-injection node {u} has degree {grid.degree(u)}")
    nonadj = True
    for e in grid.edges:
        if e.i in U and e.j in U:
            nonadj = False
            details.append(f"zero-injection nodes {e.i} and {e.j} are adjacent")
    girth = four = five = True
    for cyc in simple_cycles(grid, 5):
        nz = sum(1 for k in cyc if k in U)
        if len(cyc) == 3:
            girth = False
            details.append(f"3-loop {cyc}")
        elif len(cyc) == 4 and nz:
            four = False
            details.append(f"4-loop {cyc} contains zero-injection nodes")
        elif len(cyc) == 5 and nz >= 2:
            five = False
            details.append(f"5-loop {cyc} contains {nz} zero-injection nodes")
    return AssumptionReport(internal, nonadj, girth, four, five, tuple(details))


def topology_error(truth: Grid | Iterable, estimate: TopologyEstimate | Iterable) -> float:
    """(false edges + missed edges) / true edges.

    For a ``Grid`` the learnable edge set is used: edges between
    non-reference nodes, since samples carry no information about which
    buses attach to the reference.
    """
    true = truth.edge_set() if isinstance(truth, Grid) else {edge_key(*e) for e in truth}
    est = estimate.edges if isinstance(estimate, TopologyEstimate) else {edge_key(*e) for e in estimate}
    if not true:
        raise ValueError("true edge set is empty")
    return (len(est - true) + len(true - est)) / len(true)


# -- file format -------------------------------------------------------------

HEADER = "gridtopo v1"


def dumps_grid(grid: Grid) -> str:
    lines = [HEADER]
    if grid.name:
        lines.append(f"# {grid.name}")
    for n in grid.nodes:
        flags = (" ref" if n.is_reference else "") + ("" if n.has_injection or n.is_reference else " zero")
        lines.append(f"node {n.id}{flags}")
    for e in grid.edges:
        lines.append(f"edge {e.i} {e.j} {e.beta!r} {e.g!r}")
    return "\n".join(lines) + "\n"


def loads_grid(text: str, name: str = "") -> Grid:
    nodes, edges = [], []
    seen_header = False
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            if not name and raw.strip().startswith("#") and seen_header:
                name = raw.strip()[1:].strip()
            continue
        if not seen_header:
            if line != HEADER:
                raise GridError(f"line {lineno}: expected header {HEADER!r}")
            seen_header = True
            continue
        tok = line.split()
        try:
            if tok[0] == "node":
                flags = set(tok[2:])
                if flags - {"ref", "zero"}:
                    raise GridError(f"line {lineno}: unknown node flag(s) {sorted(flags - {'ref', 'zero'})}")
                nodes.append(Node(int(tok[1]), "ref" in flags, "zero" not in flags))
            elif tok[0] == "edge":
                if len(tok) != 5:
                    raise GridError(f"line {lineno}: edge needs 'edge i j beta g'")
                edges.append(Edge(int(tok[1]), int(tok[2]), float(tok[3]), float(tok[4])))
            else:
                raise GridError(f"line {lineno}: unknown record {tok[0]!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, GridError):
                raise
            raise GridError(f"line {lineno}: cannot parse {raw.strip()!r}") from exc
    if not seen_header:
        raise GridError("empty grid file")
    return Grid(tuple(nodes), tuple(edges), name)


def save_grid(grid: Grid, path) -> None:
    Path(path).write_text(dumps_grid(grid), encoding="utf-8")


def load_grid(path) -> Grid:
    return loads_grid(Path(path).read_text(encoding="utf-8"))
