"""Trace output: delimited files, audit summaries, and rendered figures.

Every delimited file starts with a comment line carrying the scenario
fingerprint and the run seed, so a stored trace can always be matched
back to the exact configuration that produced it.  All values are plain
integers and rows are emitted in a fixed order, which makes reruns of
the same scenario byte-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from flowbal.engine import AuditReport, Trace
from flowbal.graph import Edge
from flowbal.scenario import fingerprint


def _edge_id(e: Edge) -> str:
    head, tail = e
    return f"{tail}->{head}"


def _header(trace: Trace) -> str:
    return f"# scenario={fingerprint(trace.scenario)} seed={trace.scenario.seed}"


def write_summary_csv(trace: Trace, path: str) -> None:
    """Per-iteration totals: imbalance, perceived imbalance, in-flight count."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(_header(trace) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "epsilon", "epsilon_perceived", "inflight"])
        for r in trace.records:
            w.writerow([r.k, r.epsilon, r.epsilon_perceived, r.inflight])


def write_detail_csv(trace: Trace, path: str) -> None:
    """Long-format dump: one row per (iteration, entity, metric)."""
    nodes = trace.scenario.graph.nodes
    edges = trace.scenario.graph.edges
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(_header(trace) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k", "id", "metric", "value"])
        for r in trace.records:
            for j in nodes:
                w.writerow([r.k, j, "balance", r.balances[j]])
            for j in nodes:
                w.writerow([r.k, j, "perceived_balance", r.perceived_balances[j]])
            for e in edges:
                w.writerow([r.k, _edge_id(e), "flow", r.flows[e]])
            for e in edges:
                w.writerow([r.k, _edge_id(e), "perceived_flow", r.perceived[e]])


def write_flows_csv(trace: Trace, path: str) -> None:
    """Final flow assignment, one row per edge."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(_header(trace) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["edge", "flow"])
        for e in trace.scenario.graph.edges:
            w.writerow([_edge_id(e), trace.final.flows[e]])


def format_outcome(trace: Trace) -> str:
    if trace.converged:
        return f"converged: quiescent from k={trace.k0} ({trace.iterations} iterations, window {trace.window})"
    return f"did not converge within {trace.iterations} iterations (final epsilon {trace.final.epsilon})"


def format_audit(report: AuditReport) -> str:
    head = f"audit: {report.records} records, {report.subsets} subsets probed"
    status = "clean" if report.ok else f"{len(report.findings)} findings"
    return "\n".join([f"{head}, {status}"] + ["  " + line for line in report.lines()])


def write_audit_report(report: AuditReport, trace: Trace, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(_header(trace) + "\n")
        fh.write(format_outcome(trace) + "\n")
        fh.write(format_audit(report) + "\n")


def render_trace_figure(trace: Trace, path: str) -> None:
    """Two stacked panels: imbalance totals on top, node balances below."""
    ks = [r.k for r in trace.records]
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(8, 6), sharex=True)
    top.plot(ks, [r.epsilon for r in trace.records], color="tab:blue", label="total imbalance")
    top.plot(
        ks,
        [r.epsilon_perceived for r in trace.records],
        color="tab:red",
        label="perceived total imbalance",
    )
    top.set_ylabel("imbalance")
    top.legend()
    top.set_title(f"scenario {fingerprint(trace.scenario)} seed {trace.scenario.seed}")
    for j in trace.scenario.graph.nodes:
        bottom.plot(ks, [r.balances[j] for r in trace.records], linewidth=0.9)
    bottom.set_xlabel("iteration k")
    bottom.set_ylabel("node balance")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


@dataclass(frozen=True)
class SweepRow:
    seed: int
    converged: bool
    k0: int | None
    iterations: int
    audit_findings: int


def write_sweep_csv(rows: list[SweepRow], scenario_fp: str, path: str) -> None:
    with open(path, "w", encoding="ascii", newline="") as fh:
        fh.write(f"# scenario={scenario_fp}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "converged", "k0", "iterations", "audit_findings"])
        for r in rows:
            w.writerow(
                [r.seed, int(r.converged), "" if r.k0 is None else r.k0, r.iterations, r.audit_findings]
            )


def format_sweep(rows: list[SweepRow]) -> str:
    total = len(rows)
    good = sum(1 for r in rows if r.converged)
    dirty = sum(1 for r in rows if r.audit_findings)
    lines = [f"converged {good}/{total}, audits with findings: {dirty}"]
    k0s = sorted(r.k0 for r in rows if r.k0 is not None)
    if k0s:
        mid = k0s[len(k0s) // 2]
        lines.append(f"k0 min/median/max: {k0s[0]}/{mid}/{k0s[-1]}")
    return "\n".join(lines)


def render_sweep_figure(curves: list[list[int]], path: str) -> None:
    """Each seed's imbalance-over-iterations curve overlaid on shared axes.

    Takes bare value lists rather than traces so sweep drivers can drop
    each trace as soon as it has been audited.
    """
    fig, ax = plt.subplots(figsize=(8, 4))
    for values in curves:
        ax.plot(range(len(values)), values, color="tab:blue", alpha=0.35, linewidth=0.9)
    ax.set_xlabel("iteration k")
    ax.set_ylabel("total imbalance")
    ax.set_title(f"{len(curves)} seeds")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
