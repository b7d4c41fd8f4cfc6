"""Scenario definition, text format, fingerprinting, and random generation.

A scenario file is a line-oriented document with four mandatory sections
and one optional one::

    version = 1

    [graph]
    nodes = 4
    edge 1 -> 2          # flow runs 1 -> 2
    edge 2 -> 3

    [bounds]
    1 -> 2 : 1, 3        # lower, upper; exact rationals like 3/2 allowed
    2 -> 3 : 3/2, 7/2

    [channel]
    kind = delay         # delay | drop | mixed
    tau = 10
    delay_range = 1, 9   # optional, defaults to 0, tau
    tau 1 -> 2 = 4       # optional per-direction override
    # for drop/mixed:  q = 0.8  and optional  q 1 -> 2 = 0.5

    [run]
    algorithm = change   # change (delay tolerant) | desired (drop tolerant)
    seed = 42
    max_iterations = 5000   # optional, engine default otherwise
    window = 11             # optional quiescence window

    [order]
    1 : in 2, out 3      # optional full incident-edge ranking per node

Edges in text always read "a -> b" in flow direction and map to the
internal (head, tail) = (b, a) pair.  Parsing errors carry the line
number.  The canonical serialization (sorted edges, normalized spacing)
is hashed to fingerprint a scenario.
"""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction

from flowbal.graph import Digraph, Edge, FlowBounds, check_circulation, strongly_connected
from flowbal.network import ChannelConfig
from flowbal.protocol import EdgeOrder

FORMAT_VERSION = 1

ALGORITHMS = ("change", "desired")
_ALGORITHM_ALIASES = {"change": "change", "desired": "desired", "alg1": "change", "alg2": "desired"}


class ScenarioError(ValueError):
    """Parse or validation failure, annotated with a line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass
class Scenario:
    graph: Digraph
    bounds: FlowBounds
    algorithm: str
    channel: ChannelConfig
    seed: int
    max_iterations: int | None = None
    window: int | None = None
    order_overrides: dict[int, EdgeOrder] = field(default_factory=dict)
    allow_infeasible: bool = False

    def __post_init__(self) -> None:
        if self.algorithm not in ALGORITHMS:
            raise ScenarioError(f"unknown algorithm {self.algorithm!r}")
        if self.bounds.edges != self.graph.edge_set:
            raise ScenarioError("bounds must cover exactly the graph's edges")
        if self.max_iterations is not None and self.max_iterations < 1:
            raise ScenarioError("max_iterations must be at least 1")


def _fmt_rational(x: Fraction) -> str:
    return str(x.numerator) if x.denominator == 1 else f"{x.numerator}/{x.denominator}"


def _fmt_edge(e: Edge) -> str:
    head, tail = e
    return f"{tail} -> {head}"


def serialize(sc: Scenario) -> str:
    """Canonical text form; stable field order so equal scenarios hash equal."""
    lines = [f"version = {FORMAT_VERSION}", "", "[graph]", f"nodes = {sc.graph.n}"]
    for e in sc.graph.edges:
        lines.append(f"edge {_fmt_edge(e)}")
    lines += ["", "[bounds]"]
    for e in sc.graph.edges:
        lo = _fmt_rational(sc.bounds.lower[e])
        hi = _fmt_rational(sc.bounds.upper[e])
        lines.append(f"{_fmt_edge(e)} : {lo}, {hi}")
    ch = sc.channel
    lines += ["", "[channel]", f"kind = {ch.kind}"]
    if ch.kind in ("delay", "mixed"):
        lines.append(f"tau = {ch.tau}")
        if ch.delay_range is not None:
            lines.append(f"delay_range = {ch.delay_range[0]}, {ch.delay_range[1]}")
        for (src, dst), v in sorted(ch.tau_overrides):
            lines.append(f"tau {src} -> {dst} = {v}")
    if ch.kind in ("drop", "mixed"):
        lines.append(f"q = {ch.q!r}")
        for (src, dst), v in sorted(ch.q_overrides):
            lines.append(f"q {src} -> {dst} = {v!r}")
    lines += ["", "[run]", f"algorithm = {sc.algorithm}", f"seed = {sc.seed}"]
    if sc.max_iterations is not None:
        lines.append(f"max_iterations = {sc.max_iterations}")
    if sc.window is not None:
        lines.append(f"window = {sc.window}")
    if sc.allow_infeasible:
        lines.append("allow_infeasible = true")
    if sc.order_overrides:
        lines += ["", "[order]"]
        for j in sorted(sc.order_overrides):
            parts = []
            for head, tail in sc.order_overrides[j].ranking:
                parts.append(f"in {tail}" if head == j else f"out {head}")
            lines.append(f"{j} : " + ", ".join(parts))
    return "\n".join(lines) + "\n"


def fingerprint(sc: Scenario) -> str:
    return hashlib.sha256(serialize(sc).encode("ascii")).hexdigest()[:12]


def _parse_edge_ref(text: str, line: int) -> Edge:
    parts = text.split("->")
    if len(parts) != 2:
        raise ScenarioError(f"expected 'a -> b', got {text!r}", line)
    try:
        tail, head = int(parts[0]), int(parts[1])
    except ValueError:
        raise ScenarioError(f"edge endpoints must be integers: {text!r}", line) from None
    return (head, tail)


def _parse_rational(text: str, line: int) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ScenarioError(f"expected a rational number, got {text.strip()!r}", line) from None


def parse(text: str) -> Scenario:
    """Parse the scenario file format; raises ScenarioError with a line number."""
    version: int | None = None
    section = None
    n = None
    edges: list[Edge] = []
    lower: dict[Edge, Fraction] = {}
    upper: dict[Edge, Fraction] = {}
    channel_kv: dict[str, str] = {}
    tau_overrides: list[tuple[tuple[int, int], int]] = []
    q_overrides: list[tuple[tuple[int, int], float]] = []
    run_kv: dict[str, str] = {}
    order_raw: list[tuple[int, str, int]] = []  # (node, spec text, line)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in ("graph", "bounds", "channel", "run", "order"):
                raise ScenarioError(f"unknown section [{section}]", lineno)
            continue
        if section is None:
            key, _, value = line.partition("=")
            if key.strip() != "version":
                raise ScenarioError("expected 'version = 1' before the first section", lineno)
            try:
                version = int(value)
            except ValueError:
                raise ScenarioError(f"bad version {value.strip()!r}", lineno) from None
            if version != FORMAT_VERSION:
                raise ScenarioError(f"unsupported format version {version}", lineno)
            continue
        if section == "graph":
            if line.startswith("edge"):
                edges.append(_parse_edge_ref(line[4:], lineno))
            elif line.startswith("nodes"):
                _, _, value = line.partition("=")
                try:
                    n = int(value)
                except ValueError:
                    raise ScenarioError(f"bad node count {value.strip()!r}", lineno) from None
            else:
                raise ScenarioError(f"expected 'nodes = N' or 'edge a -> b', got {line!r}", lineno)
        elif section == "bounds":
            ref, sep, rest = line.partition(":")
            if not sep:
                raise ScenarioError("expected 'a -> b : lower, upper'", lineno)
            e = _parse_edge_ref(ref, lineno)
            parts = rest.split(",")
            if len(parts) != 2:
                raise ScenarioError("expected two bounds separated by a comma", lineno)
            if e in lower:
                raise ScenarioError(f"duplicate bounds for edge {_fmt_edge(e)}", lineno)
            lower[e] = _parse_rational(parts[0], lineno)
            upper[e] = _parse_rational(parts[1], lineno)
        elif section == "channel":
            key, _, value = line.partition("=")
            key = key.strip()
            if key.startswith("tau ") or key.startswith("q "):
                name, _, ref = key.partition(" ")
                head, tail = _parse_edge_ref(ref, lineno)  # reuse a -> b syntax
                direction = (tail, head)  # reads src -> dst
                if name == "tau":
                    try:
                        tau_overrides.append((direction, int(value)))
                    except ValueError:
                        raise ScenarioError(f"bad delay bound {value.strip()!r}", lineno) from None
                else:
                    try:
                        q_overrides.append((direction, float(value)))
                    except ValueError:
                        raise ScenarioError(f"bad drop probability {value.strip()!r}", lineno) from None
            else:
                channel_kv[key] = value.strip()
        elif section == "run":
            key, _, value = line.partition("=")
            run_kv[key.strip()] = value.strip()
        elif section == "order":
            node_text, sep, rest = line.partition(":")
            if not sep:
                raise ScenarioError("expected 'node : in a, out b, ...'", lineno)
            try:
                node = int(node_text)
            except ValueError:
                raise ScenarioError(f"bad node id {node_text.strip()!r}", lineno) from None
            order_raw.append((node, rest, lineno))

    if version is None:
        raise ScenarioError("missing 'version = 1' header")
    if n is None:
        raise ScenarioError("missing 'nodes = N' in [graph]")
    if not edges:
        raise ScenarioError("no edges defined in [graph]")

    try:
        graph = Digraph(n, edges)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None
    missing = graph.edge_set - set(lower)
    extra = set(lower) - graph.edge_set
    if missing:
        raise ScenarioError(f"missing bounds for edge {_fmt_edge(sorted(missing)[0])}")
    if extra:
        raise ScenarioError(f"bounds given for unknown edge {_fmt_edge(sorted(extra)[0])}")
    try:
        bounds = FlowBounds(lower, upper)
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    kind = channel_kv.pop("kind", None)
    if kind is None:
        raise ScenarioError("missing 'kind = delay|drop|mixed' in [channel]")
    cfg_kwargs: dict = {}
    if "tau" in channel_kv:
        cfg_kwargs["tau"] = _parse_int(channel_kv.pop("tau"), "tau")
    if "q" in channel_kv:
        cfg_kwargs["q"] = _parse_float(channel_kv.pop("q"), "q")
    if "delay_range" in channel_kv:
        parts = channel_kv.pop("delay_range").split(",")
        if len(parts) != 2:
            raise ScenarioError("delay_range takes two integers")
        cfg_kwargs["delay_range"] = (_parse_int(parts[0], "delay_range"), _parse_int(parts[1], "delay_range"))
    if channel_kv:
        raise ScenarioError(f"unknown channel key {next(iter(channel_kv))!r}")
    try:
        channel = ChannelConfig(
            kind,
            tau_overrides=tuple(tau_overrides),
            q_overrides=tuple(q_overrides),
            **cfg_kwargs,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None

    algorithm_text = run_kv.pop("algorithm", None)
    if algorithm_text is None:
        raise ScenarioError("missing 'algorithm = change|desired' in [run]")
    algorithm = _ALGORITHM_ALIASES.get(algorithm_text.lower())
    if algorithm is None:
        raise ScenarioError(f"unknown algorithm {algorithm_text!r}")
    seed = _parse_int(run_kv.pop("seed", "0"), "seed")
    max_iterations = None
    if "max_iterations" in run_kv:
        max_iterations = _parse_int(run_kv.pop("max_iterations"), "max_iterations")
    window = None
    if "window" in run_kv:
        window = _parse_int(run_kv.pop("window"), "window")
    allow_infeasible = run_kv.pop("allow_infeasible", "false").lower() in ("true", "1", "yes")
    if run_kv:
        raise ScenarioError(f"unknown run key {next(iter(run_kv))!r}")

    order_overrides: dict[int, EdgeOrder] = {}
    for node, rest, lineno in order_raw:
        if not 1 <= node <= graph.n:
            raise ScenarioError(f"order given for unknown node {node}", lineno)
        ranking = []
        for item in rest.split(","):
            words = item.split()
            if len(words) != 2 or words[0] not in ("in", "out"):
                raise ScenarioError(f"expected 'in <node>' or 'out <node>', got {item.strip()!r}", lineno)
            try:
                other = int(words[1])
            except ValueError:
                raise ScenarioError(f"bad node id {words[1]!r}", lineno) from None
            e = (node, other) if words[0] == "in" else (other, node)
            if e not in graph.edge_set:
                raise ScenarioError(f"node {node} has no '{item.strip()}' edge", lineno)
            ranking.append(e)
        incident = set(graph.in_edges(node)) | set(graph.out_edges(node))
        if set(ranking) != incident:
            raise ScenarioError(
                f"order for node {node} must list each of its {len(incident)} incident edges once",
                lineno,
            )
        try:
            order_overrides[node] = EdgeOrder(tuple(ranking))
        except ValueError as exc:
            raise ScenarioError(str(exc), lineno) from None

    try:
        return Scenario(
            graph=graph,
            bounds=bounds,
            algorithm=algorithm,
            channel=channel,
            seed=seed,
            max_iterations=max_iterations,
            window=window,
            order_overrides=order_overrides,
            allow_infeasible=allow_infeasible,
        )
    except ValueError as exc:
        raise ScenarioError(str(exc)) from None


def _parse_int(text: str, name: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise ScenarioError(f"bad integer for {name}: {text.strip()!r}") from None


def _parse_float(text: str, name: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(f"bad number for {name}: {text.strip()!r}") from None


def load(path: str) -> Scenario:
    with open(path, "r", encoding="ascii") as fh:
        return parse(fh.read())


def save(sc: Scenario, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(serialize(sc))


def generate(
    n: int,
    density: float = 0.1,
    spread: int = 2,
    seed: int = 1,
    algorithm: str = "change",
    channel: ChannelConfig | None = None,
) -> Scenario:
    """Random strongly connected scenario, feasible by construction.

    A directed cycle over a shuffled node order guarantees strong
    connectivity; each remaining ordered pair becomes an extra arc with
    probability ``density``.  A hidden balanced circulation is planted by
    giving the cycle a base flow and routing one or two units along each
    extra arc and back around the cycle; bounds are then sampled around
    the planted values, so a feasible integer assignment always exists.
    """
    if n < 2:
        raise ScenarioError(f"need at least 2 nodes, got {n}")
    if not 0.0 <= density <= 1.0:
        raise ScenarioError(f"density must be in [0, 1], got {density}")
    if spread < 0:
        raise ScenarioError(f"spread must be nonnegative, got {spread}")
    rng = random.Random(f"generate|{seed}")
    perm = list(range(1, n + 1))
    rng.shuffle(perm)
    pos = {v: t for t, v in enumerate(perm)}
    cycle_edge = {}  # tail -> its cycle edge
    planted: dict[Edge, int] = {}
    base = rng.randint(2, 4)
    for t, v in enumerate(perm):
        e = (perm[(t + 1) % n], v)
        cycle_edge[v] = e
        planted[e] = base
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            e = (b, a)
            if a == b or e in planted or rng.random() >= density:
                continue
            # route delta along the arc, then return b -> ... -> a on the cycle
            delta = rng.randint(1, 2)
            planted[e] = delta
            v = b
            while v != a:
                ce = cycle_edge[v]
                planted[ce] += delta
                v = ce[0]
    lower = {}
    upper = {}
    for e, f in planted.items():
        lower[e] = max(1, f - rng.randint(0, spread))
        upper[e] = f + rng.randint(0, spread)
    graph = Digraph(n, planted)
    bounds = FlowBounds(lower, upper)
    assert strongly_connected(graph)
    assert check_circulation(graph, bounds).feasible
    if channel is None:
        channel = ChannelConfig("delay", tau=10) if algorithm == "change" else ChannelConfig("drop", q=0.8)
    return Scenario(
        graph=graph,
        bounds=bounds,
        algorithm=algorithm,
        channel=channel,
        seed=seed,
    )


def with_seed(sc: Scenario, seed: int) -> Scenario:
    """Same scenario, different run seed (used by seed sweeps)."""
    return replace(sc, seed=seed)
