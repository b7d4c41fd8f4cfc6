"""Deterministic simulator for distributed integer flow balancing."""

from flowbal.engine import (
    AuditFinding,
    AuditReport,
    EngineError,
    InfeasibleError,
    IterationRecord,
    Trace,
    audit,
    default_budget,
    run,
)
from flowbal.graph import (
    CutWitness,
    Digraph,
    FlowAssignment,
    FlowBounds,
    GraphError,
    Verdict,
    balanced_feasible_flow,
    brute_force_circulation,
    check_circulation,
    cut_sums,
    strongly_connected,
)
from flowbal.network import ChannelConfig, DelayChannel, DropChannel, NetworkError
from flowbal.protocol import EdgeOrder, NodeState, ProtocolError, initial_states
from flowbal.scenario import (
    Scenario,
    ScenarioError,
    fingerprint,
    generate,
    load,
    parse,
    save,
    serialize,
    with_seed,
)

__version__ = "0.1.0"

__all__ = [
    "AuditFinding",
    "AuditReport",
    "ChannelConfig",
    "CutWitness",
    "DelayChannel",
    "Digraph",
    "DropChannel",
    "EdgeOrder",
    "EngineError",
    "FlowAssignment",
    "FlowBounds",
    "GraphError",
    "InfeasibleError",
    "IterationRecord",
    "NetworkError",
    "NodeState",
    "ProtocolError",
    "Scenario",
    "ScenarioError",
    "Trace",
    "Verdict",
    "audit",
    "balanced_feasible_flow",
    "brute_force_circulation",
    "check_circulation",
    "cut_sums",
    "default_budget",
    "fingerprint",
    "generate",
    "initial_states",
    "load",
    "parse",
    "run",
    "save",
    "serialize",
    "strongly_connected",
    "with_seed",
    "__version__",
]
