"""Lock-step simulation driver and trace auditor.

``run`` executes one scenario to quiescence or an iteration budget and
returns the full trace: one record per iteration boundary, holding actual
flows, perceived flows, node balances, both imbalance totals, and the
number of messages still in transit.  Record k is the state before
iteration k, so record 0 is the initial assignment.

The run is declared converged once a window of consecutive records is
byte-identical, balanced, drained, and perception-exact.  That last
requirement makes the detector exact rather than heuristic: a state with
zero imbalance, no traffic, and every perceived flow equal to the actual
flow is a fixed point of both exchange rules, so no later delivery or
drop pattern can disturb it.

``audit`` replays a finished trace against every structural invariant the
protocols promise (balance bookkeeping, cut consistency, imbalance
monotonicity, deficit-set shrinkage, perception bounds, interval
integrality) and reports violations instead of raising, so corrupted or
anomalous traces can be inspected.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass
from math import ceil

import numpy as np

from flowbal.graph import Digraph, Edge, check_circulation, strongly_connected
from flowbal.network import Channel, InFlightQueue, Message, send
from flowbal.protocol import (
    ChangeSet,
    apply_changes,
    initial_states,
    merge_flows,
    new_out_flows,
    perceived_balance,
    select_changes,
    select_desired_flows,
)
from flowbal.scenario import Scenario, fingerprint


class EngineError(ValueError):
    """Scenario rejected before simulation started."""


class InfeasibleError(EngineError):
    """No balanced integer assignment exists; carries the witness."""

    def __init__(self, witness):
        self.witness = witness
        super().__init__(f"no balanced integer assignment exists: {witness.describe()}")


@dataclass(frozen=True)
class IterationRecord:
    """Global state at one iteration boundary."""

    k: int
    flows: dict[Edge, int]
    perceived: dict[Edge, int]
    balances: dict[int, int]
    perceived_balances: dict[int, int]
    epsilon: int
    epsilon_perceived: int
    inflight: int


@dataclass
class Trace:
    """Complete run history plus the termination outcome."""

    scenario: Scenario
    records: list[IterationRecord]
    window: int
    converged: bool
    k0: int | None  # first record of the quiescent streak

    @property
    def final(self) -> IterationRecord:
        return self.records[-1]

    @property
    def iterations(self) -> int:
        return len(self.records) - 1


def default_budget(sc: Scenario) -> int:
    """Generous iteration cap scaled by size, slack, delay, and loss rate."""
    low, high = sc.bounds.integer_intervals()
    span = sum(high[e] - low[e] + 1 for e in sc.graph.edges)
    tau = max(sc.channel.max_delay(), 1)
    q = sc.channel.max_drop()
    loss = ceil(1.0 / (1.0 - q)) if q > 0 else 1
    return 10 * sc.graph.n * tau * span * loss


def _snapshot(k: int, g: Digraph, states: dict, inflight: int) -> IterationRecord:
    flows: dict[Edge, int] = {}
    perceived: dict[Edge, int] = {}
    for j in g.nodes:
        flows.update(states[j].out_flows)
        perceived.update(states[j].perceived_in)
    balances = dict.fromkeys(g.nodes, 0)
    for (head, tail), f in flows.items():
        balances[head] += f
        balances[tail] -= f
    perceived_balances = {j: perceived_balance(states[j]) for j in g.nodes}
    return IterationRecord(
        k,
        flows,
        perceived,
        balances,
        perceived_balances,
        sum(map(abs, balances.values())),
        sum(map(abs, perceived_balances.values())),
        inflight,
    )


def _quiescent_start(records: list[IterationRecord], window: int) -> int | None:
    """k of the streak's first record, if the trailing window+1 records are
    balanced, drained, perception-exact, and identical."""
    need = window + 1
    if len(records) < need:
        return None
    head = records[-need]
    for r in records[-need:]:
        if r.epsilon != 0 or r.inflight != 0:
            return None
        if r.flows != r.perceived or r.flows != head.flows:
            return None
    return head.k


def _iterate_change(
    g: Digraph, states: dict, channel: Channel, queue: InFlightQueue, k: int
) -> None:
    """One round of the unit-delta exchange.

    All nodes select against the same pre-iteration state (selection never
    commits), every nonzero delta is routed to the opposite endpoint of
    its edge, and arrivals due this step are applied together with the
    sender's own deltas.
    """
    selected: dict[int, ChangeSet] = {}
    for j in g.nodes:
        cs = select_changes(states[j])
        selected[j] = cs
        for e, c in cs.in_changes.items():
            if c:
                m = Message(j, e[1], e, "change", c, k)  # to the edge's owner
                step = send(m, channel, k)
                if step is not None:
                    queue.schedule(step, m)
        for e, c in cs.out_changes.items():
            if c:
                m = Message(j, e[0], e, "change", c, k)  # to the edge's perceiver
                step = send(m, channel, k)
                if step is not None:
                    queue.schedule(step, m)
    arrived: dict[int, dict[Edge, int]] = {j: {} for j in g.nodes}
    for m in queue.pop_step(k):
        bucket = arrived[m.dst]
        bucket[m.edge] = bucket.get(m.edge, 0) + m.payload
    for j in g.nodes:
        apply_changes(states[j], selected[j], arrived[j])


def _iterate_desired(g: Digraph, states: dict, channel: Channel, k: int) -> None:
    """One round of the absolute-flow exchange, two phases within the step.

    Phase one: nodes in surplus announce desired values on their incoming
    edges; a dropped or never-sent announcement leaves the owner assuming
    the current flow.  Phase two: every owner commits the merged flow and
    announces it to the perceiving endpoint; a drop there leaves the
    perceiver at its own desired value, which never exceeds the truth.
    """
    acting = {j for j in g.nodes if perceived_balance(states[j]) > 0}
    desired = {j: select_desired_flows(states[j]) for j in g.nodes}
    received_desired: dict[int, dict[Edge, int]] = {j: {} for j in g.nodes}
    for j in g.nodes:
        if j not in acting:
            continue
        for e, v in desired[j].in_flows.items():
            m = Message(j, e[1], e, "desired", v, k)
            if send(m, channel, k) is not None:
                received_desired[e[1]][e] = v
    committed = {j: new_out_flows(states[j], desired[j], received_desired[j]) for j in g.nodes}
    received_new: dict[int, dict[Edge, int]] = {j: {} for j in g.nodes}
    for j in g.nodes:
        for e, v in committed[j].items():
            m = Message(j, e[0], e, "new", v, k)
            if send(m, channel, k) is not None:
                received_new[e[0]][e] = v
    for j in g.nodes:
        merge_flows(states[j], desired[j], received_desired[j], received_new[j])


def run(sc: Scenario) -> Trace:
    """Simulate one scenario until quiescence or the iteration budget.

    Raises:
        InfeasibleError: balancing is impossible and allow_infeasible is off.
        EngineError: structural precondition failures (connectivity, window
            too small for the delay bound, absolute-flow exchange paired
            with a delaying channel).
    """
    g = sc.graph
    if not strongly_connected(g):
        raise EngineError("graph must be strongly connected")
    if not sc.allow_infeasible:
        verdict = check_circulation(g, sc.bounds)
        if not verdict.feasible:
            raise InfeasibleError(verdict.witness)
    if sc.algorithm == "desired" and sc.channel.max_delay() > 0:
        raise EngineError(
            "the desired-flow exchange assumes same-iteration delivery; "
            "use a drop channel or a zero delay bound"
        )
    min_window = sc.channel.max_delay() + 1 if sc.algorithm == "change" else 1
    window = min_window if sc.window is None else sc.window
    if window < min_window:
        raise EngineError(
            f"window {window} cannot certify quiescence under delay bound "
            f"{sc.channel.max_delay()}; need at least {min_window}"
        )
    budget = sc.max_iterations if sc.max_iterations is not None else default_budget(sc)
    channel = sc.channel.build(sc.seed)
    states = initial_states(g, sc.bounds, sc.order_overrides)
    queue = InFlightQueue()
    records: list[IterationRecord] = []
    k = 0
    while True:
        records.append(_snapshot(k, g, states, queue.pending()))
        k0 = _quiescent_start(records, window)
        if k0 is not None:
            return Trace(sc, records, window, True, k0)
        if k >= budget:
            return Trace(sc, records, window, False, None)
        if sc.algorithm == "change":
            _iterate_change(g, states, channel, queue, k)
        else:
            _iterate_desired(g, states, channel, k)
        k += 1


# ---------------------------------------------------------------------------
# trace auditing

CHECKS = (
    "balance-sum-zero",
    "cut-balance-consistency",
    "imbalance-identity",
    "deficit-set-monotone",
    "imbalance-monotone",
    "perceived-below-actual",
    "interval-integrality",
)

_SUBSET_SAMPLE = 100
_EXHAUSTIVE_MAX_N = 10


@dataclass(frozen=True)
class AuditFinding:
    check: str
    k: int
    detail: str


@dataclass
class AuditReport:
    records: int
    subsets: int
    counts: dict[str, int]
    findings: list[AuditFinding]

    @property
    def ok(self) -> bool:
        return not self.findings

    def lines(self) -> list[str]:
        out = []
        for check in CHECKS:
            n = self.counts[check]
            if n == 0:
                out.append(f"{check}: ok")
            else:
                first = next(f for f in self.findings if f.check == check)
                out.append(f"{check}: {n} violations, first at k={first.k}: {first.detail}")
        return out


def _audit_subsets(g: Digraph, fp: str) -> list[frozenset[int]]:
    """Node subsets probed by the cut consistency check.

    Exhaustive for small graphs; larger ones get a fixed sample drawn from
    an RNG keyed to the scenario fingerprint, so reruns probe identically.
    """
    if g.n <= _EXHAUSTIVE_MAX_N:
        subsets = []
        for size in range(1, g.n):
            subsets += [frozenset(c) for c in itertools.combinations(g.nodes, size)]
        return subsets
    rng = random.Random(f"audit|{fp}")
    picked: set[frozenset[int]] = set()
    while len(picked) < _SUBSET_SAMPLE:
        size = rng.randint(1, g.n - 1)
        picked.add(frozenset(rng.sample(g.nodes, size)))
    return sorted(picked, key=lambda s: (len(s), sorted(s)))


def audit(trace: Trace, max_findings_per_check: int = 5) -> AuditReport:
    """Check every trace record against the protocols' structural invariants.

    All checks always run; violations come back as findings rather than
    exceptions.  On a healthy trace every count is zero.
    """
    sc = trace.scenario
    g = sc.graph
    edges = g.edges
    nodes = g.nodes
    recs = trace.records
    T = len(recs)

    F = np.array([[r.flows[e] for e in edges] for r in recs])
    P = np.array([[r.perceived[e] for e in edges] for r in recs])
    B = np.array([[r.balances[j] for j in nodes] for r in recs])
    BP = np.array([[r.perceived_balances[j] for j in nodes] for r in recs])
    eps = np.array([r.epsilon for r in recs])
    epsp = np.array([r.epsilon_perceived for r in recs])

    counts = dict.fromkeys(CHECKS, 0)
    findings: list[AuditFinding] = []

    def report(check: str, ks: np.ndarray, detail) -> None:
        counts[check] += int(ks.size)
        for k in ks[:max_findings_per_check]:
            findings.append(AuditFinding(check, int(recs[k].k), detail(int(k))))

    bad = np.flatnonzero(B.sum(axis=1) != 0)
    report("balance-sum-zero", bad, lambda k: f"balances sum to {int(B[k].sum())}")

    subsets = _audit_subsets(g, fingerprint(sc))
    node_idx = {j: i for i, j in enumerate(nodes)}
    edge_heads = np.array([node_idx[e[0]] for e in edges])
    edge_tails = np.array([node_idx[e[1]] for e in edges])
    for subset in subsets:
        member = np.zeros(len(nodes), dtype=bool)
        member[[node_idx[j] for j in subset]] = True
        entering = member[edge_heads] & ~member[edge_tails]
        leaving = member[edge_tails] & ~member[edge_heads]
        lhs = B[:, member].sum(axis=1)
        rhs = F[:, entering].sum(axis=1) - F[:, leaving].sum(axis=1)
        bad = np.flatnonzero(lhs != rhs)
        if bad.size:
            label = "{" + ",".join(map(str, sorted(subset))) + "}"
            report(
                "cut-balance-consistency",
                bad,
                lambda k, s=label: f"subset {s} balance does not match its cut flows",
            )

    neg_mass = np.where(B < 0, -B, 0).sum(axis=1)
    bad = np.flatnonzero(
        (eps != np.abs(B).sum(axis=1)) | (eps != 2 * neg_mass) | (epsp != np.abs(BP).sum(axis=1))
    )
    report(
        "imbalance-identity",
        bad,
        lambda k: f"epsilon={int(eps[k])} vs sum |b|={int(np.abs(B[k]).sum())}, "
        f"2*deficit={int(2 * neg_mass[k])}",
    )

    if T > 1:
        deficit = B < 0
        grew = deficit[1:] & ~deficit[:-1]
        bad = np.flatnonzero(grew.any(axis=1)) + 1
        report(
            "deficit-set-monotone",
            bad,
            lambda k: "node(s) "
            + ",".join(str(nodes[i]) for i in np.flatnonzero(grew[k - 1]))
            + " entered deficit",
        )

        bad = np.flatnonzero(eps[1:] > eps[:-1]) + 1
        report(
            "imbalance-monotone",
            bad,
            lambda k: f"epsilon rose {int(eps[k - 1])} -> {int(eps[k])}",
        )

    over = P > F
    bad = np.flatnonzero(over.any(axis=1))
    report(
        "perceived-below-actual",
        bad,
        lambda k: "perceived exceeds actual on "
        + ", ".join(_fmt(edges[i]) for i in np.flatnonzero(over[k])[:3]),
    )
    over_b = BP > B
    bad = np.flatnonzero(over_b.any(axis=1))
    report(
        "perceived-below-actual",
        bad,
        lambda k: "perceived balance exceeds actual at node(s) "
        + ",".join(str(nodes[i]) for i in np.flatnonzero(over_b[k])[:5]),
    )

    low, high = sc.bounds.integer_intervals()
    lo = np.array([low[e] for e in edges])
    hi = np.array([high[e] for e in edges])
    out_of_band = (F < lo) | (F > hi) | (P < lo) | (P > hi)
    if not (np.issubdtype(F.dtype, np.integer) and np.issubdtype(P.dtype, np.integer)):
        out_of_band |= (F != np.round(F)) | (P != np.round(P))
    bad = np.flatnonzero(out_of_band.any(axis=1))
    report(
        "interval-integrality",
        bad,
        lambda k: "flow outside its integer interval on "
        + ", ".join(_fmt(edges[i]) for i in np.flatnonzero(out_of_band[k])[:3]),
    )

    findings.sort(key=lambda f: (f.k, CHECKS.index(f.check)))
    return AuditReport(T, len(subsets), counts, findings)


def _fmt(e: Edge) -> str:
    head, tail = e
    return f"{tail}->{head}"
