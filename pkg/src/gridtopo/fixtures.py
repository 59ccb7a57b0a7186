"""Small hand-checkable grids and the 33-bus test feeder.

Node ids for the 33-bus feeders are ``bus - 1``: the substation (bus 1)
is reference node 0 and buses 2..33 become nodes 1..32.

The zero-injection sets of the 33-bus feeders are representative choices,
not copies of any published figure. Both take every second bus down the
main feeder, starting next to the substation (buses 2, 4, ..., 16); the
radial set adds bus 20 in the middle of the 19-22 lateral. Every chosen
node is internal, no two are adjacent, and none sits on a loop of length
4 or 5.
"""

from __future__ import annotations

import numpy as np

from .grid import Edge, Grid, Node, simple_cycles, validate_assumptions

# Baran & Wu 33-bus feeder: (from bus, to bus, R ohm, X ohm)
IEEE33_BRANCHES = (
    (1, 2, 0.0922, 0.0470), (2, 3, 0.4930, 0.2511), (3, 4, 0.3660, 0.1864),
    (4, 5, 0.3811, 0.1941), (5, 6, 0.8190, 0.7070), (6, 7, 0.1872, 0.6188),
    (7, 8, 0.7114, 0.2351), (8, 9, 1.0300, 0.7400), (9, 10, 1.0440, 0.7400),
    (10, 11, 0.1966, 0.0650), (11, 12, 0.3744, 0.1238), (12, 13, 1.4680, 1.1550),
    (13, 14, 0.5416, 0.7129), (14, 15, 0.5910, 0.5260), (15, 16, 0.7463, 0.5450),
    (16, 17, 1.2890, 1.7210), (17, 18, 0.7320, 0.5740), (2, 19, 0.1640, 0.1565),
    (19, 20, 1.5042, 1.3554), (20, 21, 0.4095, 0.4784), (21, 22, 0.7089, 0.9373),
    (3, 23, 0.4512, 0.3083), (23, 24, 0.8980, 0.7091), (24, 25, 0.8960, 0.7011),
    (6, 26, 0.2030, 0.1034), (26, 27, 0.2842, 0.1447), (27, 28, 1.0590, 0.9337),
    (28, 29, 0.8042, 0.7006), (29, 30, 0.5075, 0.2585), (30, 31, 0.9744, 0.9630),
    (31, 32, 0.3105, 0.3619), (32, 33, 0.3410, 0.5302),
)
IEEE33_TIES = (
    (8, 21, 2.0, 2.0), (9, 15, 2.0, 2.0), (12, 22, 2.0, 2.0),
    (18, 33, 0.5, 0.5), (25, 29, 0.5, 0.5),
)
IEEE33_BASE_KV = 12.66
IEEE33_BASE_MVA = 1.0  # 0.1 pu fluctuation = 100 kW, about the mean bus load

# zero-injection buses (1-based bus numbers)
IEEE33_RADIAL_ZERO_BUSES = (2, 4, 6, 8, 10, 12, 14, 16, 20)
IEEE33_LOOPY_ZERO_BUSES = (2, 4, 6, 8, 10, 12, 14, 16)


def _ohm_to_pu_edge(f: int, t: int, r: float, x: float) -> Edge:
    zbase = IEEE33_BASE_KV ** 2 / IEEE33_BASE_MVA
    r, x = r / zbase, x / zbase
    den = r * r + x * x
    return Edge(f - 1, t - 1, x / den, r / den)


def _ieee33(branches, zero_buses, name) -> Grid:
    zero = {b - 1 for b in zero_buses}
    nodes = tuple(Node(k, k == 0, k not in zero) for k in range(33))
    edges = tuple(_ohm_to_pu_edge(*b) for b in branches)
    return Grid(nodes, edges, name)


def ieee33_radial() -> Grid:
    return _ieee33(IEEE33_BRANCHES, IEEE33_RADIAL_ZERO_BUSES, "IEEE33_RADIAL")


def ieee33_loopy() -> Grid:
    return _ieee33(IEEE33_BRANCHES + IEEE33_TIES, IEEE33_LOOPY_ZERO_BUSES, "IEEE33_LOOPY")


def g2() -> Grid:
    """Path 0-1-2, everything excited."""
    return Grid((Node(0, True), Node(1), Node(2)), (Edge(0, 1, 1.0), Edge(1, 2, 1.0)), "G2")


def g3() -> Grid:
    """Path 0-1-2-3 with node 2 unexcited."""
    return Grid((Node(0, True), Node(1), Node(2, has_injection=False), Node(3)),
                (Edge(0, 1, 1.0), Edge(1, 2, 1.0), Edge(2, 3, 1.0)), "G3")


def gstar(betas=(1.0, 2.0, 3.0, 4.0)) -> Grid:
    """Unexcited hub 1 tied to the reference and to excited leaves 2, 3, 4."""
    b0, ba, bb, bc = betas
    return Grid((Node(0, True), Node(1, has_injection=False), Node(2), Node(3), Node(4)),
                (Edge(0, 1, b0), Edge(1, 2, ba), Edge(1, 3, bb), Edge(1, 4, bc)), "GSTAR")


def fixture_grids() -> dict[str, Grid]:
    return {
        "G2": g2(),
        "G3": g3(),
        "GSTAR": gstar(),
        "IEEE33_RADIAL": ieee33_radial(),
        "IEEE33_LOOPY": ieee33_loopy(),
    }


def get_fixture(name: str) -> Grid:
    grids = fixture_grids()
    try:
        return grids[name.upper()]
    except KeyError:
        raise KeyError(f"unknown fixture {name!r}; choose from {sorted(grids)}") from None


def random_grid(rng: np.random.Generator, n: int | None = None, loopy: bool = False,
                beta_range=(0.5, 2.0), max_zero: int | None = None) -> Grid:
    """Random grid satisfying the structural assumptions.

    ``n`` non-reference nodes (default: uniform in [6, 40]) hang off a random
    recursive tree rooted at the reference 0. ``loopy`` adds chords between
    nodes at distance three or more, so the girth stays at least 4. The
    zero-injection set is grown greedily from shuffled internal nodes,
    skipping anything that would break an assumption.
    """
    n = int(rng.integers(6, 41)) if n is None else int(n)
    edges = {(int(rng.integers(0, k)), k) for k in range(1, n + 1)}
    if loopy:
        for _ in range(int(rng.integers(1, max(2, n // 5) + 1))):
            for _attempt in range(50):
                a, b = sorted(int(x) for x in rng.choice(n + 1, 2, replace=False))
                if _distance(edges, n + 1, a, b) >= 3:
                    edges.add((a, b))
                    break
    lo, hi = beta_range
    elist = []
    for a, b in sorted(edges):
        beta = float(rng.uniform(lo, hi))
        elist.append(Edge(a, b, beta, beta * float(rng.uniform(0.2, 1.0))))
    base = Grid(tuple(Node(k, k == 0) for k in range(n + 1)), tuple(elist), "RANDOM")
    cycles = simple_cycles(base, 5)
    on4 = {k for c in cycles if len(c) == 4 for k in c}
    five = [set(c) for c in cycles if len(c) == 5]
    limit = max(1, n // 4) if max_zero is None else max_zero
    zero: set[int] = set()
    for k in rng.permutation(np.arange(1, n + 1)):
        k = int(k)
        if len(zero) >= limit:
            break
        if base.degree(k) < 2 or k in on4 or any(j in zero for j in base.neighbors(k)):
            continue
        if any(k in c and c & zero for c in five):
            continue
        if n - len(zero) - 1 < 2:
            break
        zero.add(k)
    grid = base.with_zero_injection(zero)
    if not validate_assumptions(grid).ok:  # pragma: no cover - construction guarantees it
        raise AssertionError("random grid violates the assumptions")
    return grid


def _distance(edges, n_nodes: int, a: int, b: int) -> int:
    adj: dict[int, list[int]] = {k: [] for k in range(n_nodes)}
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen, frontier, d = {a}, [a], 0
    while frontier:
        if b in frontier:
            return d
        d += 1
        nxt = []
        for u in frontier:
            for w in adj[u]:
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        frontier = nxt
    return n_nodes
