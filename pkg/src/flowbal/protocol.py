"""Per-node state and update rules for the two balancing protocols.

Each node owns the true flow on its outgoing edges and keeps a perceived
copy of the flow on its incoming edges; the copy can lag behind the truth
while messages are in transit.  A node whose perceived balance (perceived
in-flow minus actual out-flow) is positive walks its incident edges in a
fixed cyclic order, one unit at a time: raise an out-flow not yet at its
upper limit, or lower a perceived in-flow not yet at its lower limit,
until the running balance reaches zero.  Nodes at or below balance never
act, which is what keeps perceived values from overshooting true ones.

Two wire formats share that walk:

* change exchange: the walk's unit deltas are sent to the opposite
  endpoint of each touched edge and applied additively on receipt, which
  tolerates arbitrary bounded delivery delays;
* desired-flow exchange: every node sends absolute desired values every
  iteration and the edge owner merges its own desire with the other
  endpoint's, which tolerates dropped packets because missing values
  default to what the sender already knew.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from flowbal.graph import Digraph, Edge, FlowBounds


class ProtocolError(ValueError):
    """Malformed node state or edge order."""


@dataclass
class EdgeOrder:
    """Cyclic ranking of a node's incident edges with a persistent cursor.

    The cursor resumes where the previous selection pass stopped: one past
    the last edge it visited.
    """

    ranking: tuple[Edge, ...]
    cursor: int = 0

    def __post_init__(self) -> None:
        if len(set(self.ranking)) != len(self.ranking) or not self.ranking:
            raise ProtocolError(f"ranking must be a nonempty permutation: {self.ranking}")
        if not 0 <= self.cursor < len(self.ranking):
            raise ProtocolError(f"cursor {self.cursor} outside ranking")


def default_order(g: Digraph, j: int) -> EdgeOrder:
    """Incident edges ranked by neighbor index, incoming before outgoing."""
    keyed = [((i, 0), (j, i)) for i in g.in_neighbors(j)]
    keyed += [((l, 1), (l, j)) for l in g.out_neighbors(j)]
    keyed.sort()
    return EdgeOrder(tuple(e for _, e in keyed))


class NodeState:
    """One node's view: owned out-flows, perceived in-flows, walk order."""

    def __init__(
        self,
        node: int,
        out_flows: dict[Edge, int],
        perceived_in: dict[Edge, int],
        order: EdgeOrder,
        low: dict[Edge, int],
        high: dict[Edge, int],
    ):
        self.id = node
        self.out_flows = out_flows
        self.perceived_in = perceived_in
        self.order = order
        self.low = low
        self.high = high
        incident = set(out_flows) | set(perceived_in)
        if set(order.ranking) != incident:
            raise ProtocolError(f"order for node {node} must rank exactly its incident edges")
        if set(low) != incident or set(high) != incident:
            raise ProtocolError(f"intervals for node {node} must cover its incident edges")


def initial_states(
    g: Digraph,
    bounds: FlowBounds,
    order_overrides: Mapping[int, EdgeOrder] | None = None,
) -> dict[int, NodeState]:
    """States at step zero: every flow and perceived flow starts at ceil(lower)."""
    low, high = bounds.integer_intervals()
    overrides = dict(order_overrides or {})
    states = {}
    for j in g.nodes:
        out_edges = g.out_edges(j)
        in_edges = g.in_edges(j)
        order = overrides.get(j) or default_order(g, j)
        states[j] = NodeState(
            j,
            {e: low[e] for e in out_edges},
            {e: low[e] for e in in_edges},
            order,
            {e: low[e] for e in in_edges + out_edges},
            {e: high[e] for e in in_edges + out_edges},
        )
    return states


def perceived_balance(s: NodeState) -> int:
    """Perceived in-flow minus actual out-flow; exact, never clamped."""
    return sum(s.perceived_in.values()) - sum(s.out_flows.values())


@dataclass
class ChangeSet:
    """Unit deltas selected in one pass: in-edge entries <= 0, out-edge >= 0."""

    in_changes: dict[Edge, int] = field(default_factory=dict)
    out_changes: dict[Edge, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if any(c > 0 for c in self.in_changes.values()):
            raise ProtocolError("perceived in-flows may only be lowered")
        if any(c < 0 for c in self.out_changes.values()):
            raise ProtocolError("out-flows may only be raised")

    @property
    def empty(self) -> bool:
        return not self.in_changes and not self.out_changes

    def total_units(self) -> int:
        return sum(self.out_changes.values()) - sum(self.in_changes.values())


@dataclass
class DesiredFlowSet:
    """Absolute target flows for every incident edge of one node."""

    in_flows: dict[Edge, int]
    out_flows: dict[Edge, int]


def _walk(s: NodeState, budget: int) -> dict[Edge, int]:
    """Distribute ``budget`` unit adjustments round-robin from the cursor.

    Eligibility is judged against the stored flow plus deltas already
    picked this pass, so one pass can touch an edge several times without
    leaving its interval.  A full cycle with no progress aborts the pass
    (possible only when every edge is pinned at its limit); the cursor
    still ends one past the last edge visited.
    """
    ranking = s.order.ranking
    d = len(ranking)
    pos = s.order.cursor
    deltas: dict[Edge, int] = {}
    idle = 0
    while budget > 0 and idle < d:
        e = ranking[pos]
        if e in s.out_flows:
            if s.out_flows[e] + deltas.get(e, 0) < s.high[e]:
                deltas[e] = deltas.get(e, 0) + 1
                budget -= 1
                idle = -1
        else:
            if s.perceived_in[e] + deltas.get(e, 0) > s.low[e]:
                deltas[e] = deltas.get(e, 0) - 1
                budget -= 1
                idle = -1
        idle += 1
        pos = (pos + 1) % d
    s.order.cursor = pos
    return deltas


def select_changes(s: NodeState) -> ChangeSet:
    """Pick unit deltas that zero a positive perceived balance.

    A node at or below balance selects nothing.  The returned deltas are
    not yet applied to the state; they take effect together with arrived
    neighbor changes in apply_changes.
    """
    balance = perceived_balance(s)
    if balance <= 0:
        return ChangeSet()
    deltas = _walk(s, balance)
    return ChangeSet(
        {e: c for e, c in deltas.items() if e in s.perceived_in},
        {e: c for e, c in deltas.items() if e in s.out_flows},
    )


def apply_changes(s: NodeState, own: ChangeSet, arrived: Mapping[Edge, int]) -> None:
    """Commit own deltas plus arrived neighbor deltas, then clamp to intervals.

    ``arrived`` aggregates everything delivered this step per incident
    edge: lowerings from the perceiver on out-edges, raises from the owner
    on in-edges; edges with no arrivals are simply absent.
    """
    for e in s.out_flows:
        new = s.out_flows[e] + own.out_changes.get(e, 0) + arrived.get(e, 0)
        s.out_flows[e] = min(s.high[e], max(s.low[e], new))
    for e in s.perceived_in:
        new = s.perceived_in[e] + own.in_changes.get(e, 0) + arrived.get(e, 0)
        s.perceived_in[e] = min(s.high[e], max(s.low[e], new))


def select_desired_flows(s: NodeState) -> DesiredFlowSet:
    """Absolute flows this node wants next; identity when not in surplus."""
    desired_in = dict(s.perceived_in)
    desired_out = dict(s.out_flows)
    balance = perceived_balance(s)
    if balance > 0:
        for e, c in _walk(s, balance).items():
            if e in desired_out:
                desired_out[e] += c
            else:
                desired_in[e] += c
    return DesiredFlowSet(desired_in, desired_out)


def new_out_flows(
    s: NodeState, own: DesiredFlowSet, received_desired: Mapping[Edge, int]
) -> dict[Edge, int]:
    """Owner-side merge for each out-edge: other's desire + own desire - current.

    A missing entry in ``received_desired`` means the perceiver's request
    was dropped; the owner then assumes the perceiver wants the current
    value, which collapses the merge to the owner's own desire.
    """
    out = {}
    for e, current in s.out_flows.items():
        other = received_desired.get(e, current)
        new = other + own.out_flows[e] - current
        out[e] = min(s.high[e], max(s.low[e], new))
    return out


def merge_flows(
    s: NodeState,
    own: DesiredFlowSet,
    received_desired: Mapping[Edge, int],
    received_new: Mapping[Edge, int],
) -> None:
    """Commit one desired-flow exchange round on this node.

    Out-flows take the merged value from new_out_flows.  Perceived
    in-flows take the owner's freshly announced value; if that packet was
    dropped, the node falls back to what it asked for, which can only
    undershoot the owner's actual choice.
    """
    s.out_flows.update(new_out_flows(s, own, received_desired))
    for e in s.perceived_in:
        s.perceived_in[e] = received_new.get(e, own.in_flows[e])
