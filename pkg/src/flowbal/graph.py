"""Directed graphs with interval flow constraints and exact feasibility checking.

An edge is stored as an ordered pair ``(head, tail)``: flow moves from the
tail node to the head node.  Every edge carries a rational lower and upper
flow limit, and the question answered here is whether an all-integer
assignment exists that respects every per-edge interval while giving each
node equal total in-flow and out-flow.

``check_circulation`` decides this with a single max-flow computation over
the classical lower-bounds reduction and, when the answer is no, returns a
node subset whose forced in-flow exceeds its available out-flow.
``brute_force_circulation`` decides the same question by enumerating every
node subset directly; it exists purely as an independent oracle for tests.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import ceil, floor
from typing import Iterable, Mapping

import networkx as nx
from networkx.algorithms.flow import edmonds_karp

Edge = tuple[int, int]

# reduction endpoints; node ids are always >= 1
_SRC = 0
_SNK = -1


class GraphError(ValueError):
    """Invalid graph structure, bounds, or operation precondition."""


class Digraph:
    """A simple digraph on nodes 1..n with no self-loops.

    Edges are ordered pairs ``(head, tail)`` meaning flow runs tail -> head.
    For a node j, the in-neighbors are the tails of edges headed at j (they
    send flow to j) and the out-neighbors are the heads of edges tailed at j
    (they receive flow from j).
    """

    def __init__(self, n: int, edges: Iterable[Edge]):
        if n < 2:
            raise GraphError(f"need at least 2 nodes, got {n}")
        self.n = n
        self.nodes: tuple[int, ...] = tuple(range(1, n + 1))
        seen: set[Edge] = set()
        for e in edges:
            head, tail = int(e[0]), int(e[1])
            if head == tail:
                raise GraphError(f"self-loop at node {head}")
            if not (1 <= head <= n and 1 <= tail <= n):
                raise GraphError(f"edge ({head}, {tail}) references unknown node")
            seen.add((head, tail))
        if not seen:
            raise GraphError("edge set is empty")
        self.edges: tuple[Edge, ...] = tuple(sorted(seen))
        self.edge_set: frozenset[Edge] = frozenset(seen)
        self._in: dict[int, list[int]] = {j: [] for j in self.nodes}
        self._out: dict[int, list[int]] = {j: [] for j in self.nodes}
        for head, tail in self.edges:
            self._in[head].append(tail)
            self._out[tail].append(head)
        for j in self.nodes:
            self._in[j].sort()
            self._out[j].sort()

    def in_neighbors(self, j: int) -> tuple[int, ...]:
        """Nodes that send flow to j."""
        return tuple(self._in[j])

    def out_neighbors(self, j: int) -> tuple[int, ...]:
        """Nodes that receive flow from j."""
        return tuple(self._out[j])

    def in_edges(self, j: int) -> tuple[Edge, ...]:
        return tuple((j, i) for i in self._in[j])

    def out_edges(self, j: int) -> tuple[Edge, ...]:
        return tuple((l, j) for l in self._out[j])

    def degree(self, j: int) -> int:
        return len(self._in[j]) + len(self._out[j])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Digraph):
            return NotImplemented
        return self.n == other.n and self.edge_set == other.edge_set

    def __hash__(self) -> int:
        return hash((self.n, self.edge_set))

    def __repr__(self) -> str:
        return f"Digraph(n={self.n}, m={len(self.edges)})"


def strongly_connected(g: Digraph) -> bool:
    """True iff a directed path joins every ordered pair of nodes."""
    return _reaches_all(g._out) and _reaches_all(g._in)


def _reaches_all(adj: dict[int, list[int]]) -> bool:
    start = next(iter(adj))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == len(adj)


def _to_fraction(value: object, edge: Edge, side: str) -> Fraction:
    if isinstance(value, float):
        raise GraphError(
            f"{side} bound on edge {edge} is a float; pass an int, Fraction, "
            f"or exact string like '3/2'"
        )
    try:
        return Fraction(value)  # type: ignore[arg-type]
    except (ValueError, TypeError) as exc:
        raise GraphError(f"bad {side} bound on edge {edge}: {value!r}") from exc


class FlowBounds:
    """Per-edge rational flow limits with 0 < lower <= upper.

    Values are kept as exact fractions so ceilings and floors at
    integer-valued bounds never suffer float rounding.
    """

    def __init__(self, lower: Mapping[Edge, object], upper: Mapping[Edge, object]):
        if set(lower) != set(upper):
            raise GraphError("lower and upper bounds must cover the same edges")
        self.lower: dict[Edge, Fraction] = {}
        self.upper: dict[Edge, Fraction] = {}
        for e in sorted(lower):
            lo = _to_fraction(lower[e], e, "lower")
            hi = _to_fraction(upper[e], e, "upper")
            if lo <= 0:
                raise GraphError(f"lower bound on edge {e} must be positive, got {lo}")
            if lo > hi:
                raise GraphError(f"inverted bounds on edge {e}: {lo} > {hi}")
            self.lower[e] = lo
            self.upper[e] = hi

    @property
    def edges(self) -> frozenset[Edge]:
        return frozenset(self.lower)

    def low_int(self, e: Edge) -> int:
        """Smallest integer flow the edge admits."""
        return ceil(self.lower[e])

    def high_int(self, e: Edge) -> int:
        """Largest integer flow the edge admits; may undercut low_int."""
        return floor(self.upper[e])

    def integer_intervals(self) -> tuple[dict[Edge, int], dict[Edge, int]]:
        low = {e: ceil(v) for e, v in self.lower.items()}
        high = {e: floor(v) for e, v in self.upper.items()}
        return low, high

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlowBounds):
            return NotImplemented
        return self.lower == other.lower and self.upper == other.upper

    def __repr__(self) -> str:
        return f"FlowBounds({len(self.lower)} edges)"


@dataclass(frozen=True)
class CutWitness:
    """Certificate that no feasible integer circulation exists.

    Either ``subset`` is a nonempty proper node subset whose forced in-flow
    (lhs, the sum of lower-bound ceilings on edges entering it) exceeds its
    available out-flow (rhs, the sum of upper-bound floors on edges leaving
    it), or ``edge`` names a single edge whose integer interval is empty,
    in which case subset is empty and lhs/rhs are that edge's ceiling and
    floor.
    """

    subset: frozenset[int]
    lhs: int
    rhs: int
    edge: Edge | None = None

    def __post_init__(self) -> None:
        if self.lhs <= self.rhs:
            raise GraphError(f"witness does not certify: lhs={self.lhs} <= rhs={self.rhs}")
        if self.edge is None and not self.subset:
            raise GraphError("witness needs a node subset or an edge")

    def describe(self) -> str:
        if self.edge is not None:
            head, tail = self.edge
            return (
                f"edge {tail}->{head} admits no integer flow: "
                f"ceil(lower)={self.lhs} > floor(upper)={self.rhs}"
            )
        names = ", ".join(f"v{j}" for j in sorted(self.subset))
        return f"S={{{names}}}, lhs={self.lhs} > rhs={self.rhs}"


@dataclass(frozen=True)
class Verdict:
    """Outcome of a feasibility check; witness is set iff infeasible."""

    feasible: bool
    witness: CutWitness | None = None

    def __bool__(self) -> bool:
        return self.feasible


@dataclass(frozen=True)
class FlowAssignment:
    """Integer flow per edge."""

    flow: dict[Edge, int]

    def balance(self, g: Digraph, j: int) -> int:
        """Total in-flow minus total out-flow at node j."""
        into = sum(self.flow[e] for e in g.in_edges(j))
        out = sum(self.flow[e] for e in g.out_edges(j))
        return into - out

    def is_balanced(self, g: Digraph) -> bool:
        return all(self.balance(g, j) == 0 for j in g.nodes)

    def respects(self, bounds: FlowBounds) -> bool:
        return all(
            bounds.low_int(e) <= f <= bounds.high_int(e) for e, f in self.flow.items()
        )


def cut_sums(g: Digraph, bounds: FlowBounds, subset: Iterable[int]) -> tuple[int, int]:
    """Evaluate both sides of the cut inequality for a node subset.

    Returns (lhs, rhs): the forced in-flow into the subset and the available
    out-flow from it.  Feasibility requires lhs <= rhs for every nonempty
    proper subset.
    """
    inset = set(subset)
    lhs = 0
    rhs = 0
    for e in g.edges:
        head, tail = e
        if head in inset and tail not in inset:
            lhs += bounds.low_int(e)
        elif tail in inset and head not in inset:
            rhs += bounds.high_int(e)
    return lhs, rhs


def _check_pair(g: Digraph, bounds: FlowBounds) -> None:
    if bounds.edges != g.edge_set:
        raise GraphError("bounds must be defined exactly on the graph's edges")
    if not strongly_connected(g):
        raise GraphError("graph must be strongly connected")


def _reduction(
    g: Digraph, low: dict[Edge, int], high: dict[Edge, int]
) -> tuple[nx.DiGraph, int]:
    """Lower-bounds circulation reduced to a single max-flow instance.

    Each edge becomes an arc tail -> head with capacity high - low; a node
    whose forced in-flow exceeds its forced out-flow draws the difference
    from the source, the opposite kind pushes it to the sink.  A feasible
    circulation exists iff the max flow saturates every source arc.
    """
    G = nx.DiGraph()
    G.add_nodes_from(g.nodes)
    G.add_node(_SRC)
    G.add_node(_SNK)
    excess = dict.fromkeys(g.nodes, 0)
    for e in g.edges:
        head, tail = e
        span = high[e] - low[e]
        if span > 0:
            G.add_edge(tail, head, capacity=span)
        excess[head] += low[e]
        excess[tail] -= low[e]
    supply = 0
    for v in g.nodes:
        if excess[v] > 0:
            G.add_edge(_SRC, v, capacity=excess[v])
            supply += excess[v]
        elif excess[v] < 0:
            G.add_edge(v, _SNK, capacity=-excess[v])
    return G, supply


def check_circulation(g: Digraph, bounds: FlowBounds) -> Verdict:
    """Decide whether a balanced all-integer assignment exists within bounds.

    Two conditions are checked: every edge's integer interval
    [ceil(lower), floor(upper)] must be nonempty, and every nonempty proper
    node subset must satisfy the cut inequality (forced in-flow <= available
    out-flow).  The cut condition is decided by one max-flow computation;
    on failure the witness subset is read off the min cut.

    Raises:
        GraphError: if bounds do not match the edge set or the graph is not
            strongly connected.
    """
    _check_pair(g, bounds)
    low, high = bounds.integer_intervals()
    for e in g.edges:
        if low[e] > high[e]:
            return Verdict(False, CutWitness(frozenset(), low[e], high[e], edge=e))
    G, supply = _reduction(g, low, high)
    if supply == 0:
        return Verdict(True)
    cut_value, (source_side, _) = nx.minimum_cut(G, _SRC, _SNK, flow_func=edmonds_karp)
    if cut_value == supply:
        return Verdict(True)
    subset = frozenset(v for v in source_side if v != _SRC)
    # a cut short of the supply always yields a violating proper subset
    lhs, rhs = cut_sums(g, bounds, subset)
    if not subset or len(subset) == g.n or lhs <= rhs:
        raise GraphError(f"min-cut witness extraction failed on subset {sorted(subset)}")
    return Verdict(False, CutWitness(subset, lhs, rhs))


def brute_force_circulation(g: Digraph, bounds: FlowBounds) -> Verdict:
    """Oracle twin of check_circulation: enumerate every node subset.

    Exponential in n; guarded to n <= 15.  On infeasibility returns the
    lexicographically smallest violating subset (compared as sorted tuples)
    unless a single edge already has an empty integer interval, which wins.
    """
    if g.n > 15:
        raise GraphError(f"brute force capped at 15 nodes, got {g.n}")
    _check_pair(g, bounds)
    low, high = bounds.integer_intervals()
    for e in g.edges:
        if low[e] > high[e]:
            return Verdict(False, CutWitness(frozenset(), low[e], high[e], edge=e))
    best: tuple[int, ...] | None = None
    best_sums = (0, 0)
    for size in range(1, g.n):
        for combo in itertools.combinations(g.nodes, size):
            inset = set(combo)
            lhs = 0
            rhs = 0
            for e in g.edges:
                head, tail = e
                if head in inset and tail not in inset:
                    lhs += low[e]
                elif tail in inset and head not in inset:
                    rhs += high[e]
            if lhs > rhs and (best is None or combo < best):
                best = combo
                best_sums = (lhs, rhs)
    if best is None:
        return Verdict(True)
    return Verdict(False, CutWitness(frozenset(best), best_sums[0], best_sums[1]))


def balanced_feasible_flow(g: Digraph, bounds: FlowBounds) -> FlowAssignment:
    """Construct one balanced integer assignment within the bounds.

    Centralized reference solution used by tests; the distributed protocols
    must reach some assignment satisfying the same validity predicate.

    Raises:
        GraphError: if no such assignment exists.
    """
    _check_pair(g, bounds)
    low, high = bounds.integer_intervals()
    for e in g.edges:
        if low[e] > high[e]:
            raise GraphError(f"infeasible: edge {e} admits no integer flow")
    G, supply = _reduction(g, low, high)
    value, flow_dict = nx.maximum_flow(G, _SRC, _SNK, flow_func=edmonds_karp)
    if value < supply:
        raise GraphError("infeasible: no balanced integer assignment exists")
    flow = {}
    for e in g.edges:
        head, tail = e
        flow[e] = low[e] + flow_dict.get(tail, {}).get(head, 0)
    return FlowAssignment(flow)
