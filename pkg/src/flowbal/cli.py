"""Command line front end: feasibility checks, runs, generation, seed sweeps.

Exit codes follow one convention everywhere: 0 means the protocol-level
answer was positive (feasible, converged, audits clean), 1 means it was
negative (infeasible verdict, non-convergence, audit findings), and 2
means the invocation itself was bad (unparseable scenario, invalid
configuration, missing files).

The default output directory is ``out`` and can be overridden per call
with ``--out`` or globally with the FLOWBAL_OUT environment variable.
"""

from __future__ import annotations

import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import click

from flowbal import report
from flowbal.engine import EngineError, InfeasibleError, audit, run
from flowbal.graph import GraphError, check_circulation
from flowbal.network import ChannelConfig, NetworkError
from flowbal.scenario import (
    Scenario,
    ScenarioError,
    fingerprint,
    generate,
    load,
    save,
    with_seed,
)

OUT_ENV = "FLOWBAL_OUT"

PRESETS = ("fig2", "fig3")

_CONFIG_ERRORS = (ScenarioError, GraphError, NetworkError, EngineError)


def _preset(name: str) -> Scenario:
    """Pinned demo scenarios: one per protocol, on the same 20-node graph."""
    if name == "fig2":
        return generate(
            20,
            density=0.1,
            spread=2,
            seed=1,
            algorithm="change",
            channel=ChannelConfig("delay", tau=10, delay_range=(1, 9)),
        )
    return generate(
        20,
        density=0.1,
        spread=2,
        seed=1,
        algorithm="desired",
        channel=ChannelConfig("drop", q=0.8),
    )


def _load(path: str) -> Scenario:
    try:
        return load(path)
    except (*_CONFIG_ERRORS, OSError) as exc:
        click.echo(f"error: {path}: {exc}", err=True)
        sys.exit(2)


def _resolve(path: str | None, preset: str | None) -> Scenario:
    if (path is None) == (preset is None):
        raise click.UsageError("pass exactly one of a scenario file or --preset")
    if preset is not None:
        return _preset(preset)
    return _load(path)


def _override(
    sc: Scenario, seed: int | None, max_iters: int | None, allow_infeasible: bool
) -> Scenario:
    if seed is not None:
        sc = with_seed(sc, seed)
    if max_iters is not None:
        sc = replace(sc, max_iterations=max_iters)
    if allow_infeasible and not sc.allow_infeasible:
        sc = replace(sc, allow_infeasible=True)
    return sc


def _outdir(opt: str | None) -> str:
    d = opt if opt is not None else os.environ.get(OUT_ENV, "out")
    os.makedirs(d, exist_ok=True)
    return d


@click.group()
def main() -> None:
    """Distributed integer flow balancing: check, simulate, inspect."""


@main.command("check")
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
def cmd_check(path: str) -> None:
    """Decide whether PATH admits a balanced integer assignment."""
    sc = _load(path)
    verdict = check_circulation(sc.graph, sc.bounds)
    if verdict.feasible:
        click.echo("Feasible")
        sys.exit(0)
    click.echo(f"Infeasible: {verdict.witness.describe()}")
    sys.exit(1)


@main.command("run")
@click.argument("path", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--preset", type=click.Choice(PRESETS), help="use a pinned demo scenario")
@click.option("--seed", type=int, default=None, help="override the run seed")
@click.option("--max-iters", type=int, default=None, help="override the iteration budget")
@click.option("--allow-infeasible", is_flag=True, help="simulate even without a balanced assignment")
@click.option("--out", default=None, help="output directory (default: $FLOWBAL_OUT or ./out)")
def cmd_run(
    path: str | None,
    preset: str | None,
    seed: int | None,
    max_iters: int | None,
    allow_infeasible: bool,
    out: str | None,
) -> None:
    """Simulate one scenario and write its trace, audit, and figure."""
    sc = _override(_resolve(path, preset), seed, max_iters, allow_infeasible)
    try:
        trace = run(sc)
    except InfeasibleError as exc:
        click.echo(f"Infeasible: {exc.witness.describe()}")
        sys.exit(1)
    except _CONFIG_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    rep = audit(trace)
    d = _outdir(out)
    save(sc, os.path.join(d, "scenario.flow"))
    report.write_summary_csv(trace, os.path.join(d, "summary.csv"))
    report.write_detail_csv(trace, os.path.join(d, "detail.csv"))
    report.write_flows_csv(trace, os.path.join(d, "flows.csv"))
    report.write_audit_report(rep, trace, os.path.join(d, "audit.txt"))
    report.render_trace_figure(trace, os.path.join(d, "trace.png"))
    click.echo(f"scenario {fingerprint(sc)} seed {sc.seed} algorithm {sc.algorithm}")
    click.echo(report.format_outcome(trace))
    click.echo(report.format_audit(rep))
    click.echo(f"wrote {d}")
    sys.exit(0 if trace.converged and rep.ok else 1)


@main.command("generate")
@click.option("--nodes", "-n", type=int, default=8, show_default=True, help="node count")
@click.option("--density", type=float, default=0.1, show_default=True, help="extra-arc probability")
@click.option("--spread", type=int, default=2, show_default=True, help="half-width of the bound interval")
@click.option("--seed", type=int, default=1, show_default=True, help="construction seed")
@click.option(
    "--algorithm",
    type=click.Choice(["change", "desired"]),
    default="change",
    show_default=True,
)
@click.option("--out", default=None, help="scenario file to write (default: <outdir>/scenario.flow)")
def cmd_generate(
    nodes: int, density: float, spread: int, seed: int, algorithm: str, out: str | None
) -> None:
    """Write a random feasible scenario file."""
    try:
        sc = generate(nodes, density=density, spread=spread, seed=seed, algorithm=algorithm)
    except _CONFIG_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    dest = out if out is not None else os.path.join(_outdir(None), "scenario.flow")
    save(sc, dest)
    click.echo(f"wrote {dest} (scenario {fingerprint(sc)})")
    sys.exit(0)


def _sweep_one(sc: Scenario) -> tuple[report.SweepRow, list[int]]:
    """Run one seed and reduce it to a result row plus its imbalance curve."""
    trace = run(sc)
    rep = audit(trace)
    row = report.SweepRow(
        seed=sc.seed,
        converged=trace.converged,
        k0=trace.k0,
        iterations=trace.iterations,
        audit_findings=len(rep.findings),
    )
    return row, [r.epsilon for r in trace.records]


@main.command("sweep")
@click.argument("path", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--preset", type=click.Choice(PRESETS), help="use a pinned demo scenario")
@click.option("--seeds", type=int, default=20, show_default=True, help="how many consecutive run seeds")
@click.option("--seed", type=int, default=0, show_default=True, help="first run seed")
@click.option("--max-iters", type=int, default=None, help="override the iteration budget")
@click.option("--allow-infeasible", is_flag=True, help="simulate even without a balanced assignment")
@click.option("--jobs", type=int, default=1, show_default=True, help="parallel worker processes")
@click.option("--out", default=None, help="output directory (default: $FLOWBAL_OUT or ./out)")
def cmd_sweep(
    path: str | None,
    preset: str | None,
    seeds: int,
    seed: int,
    max_iters: int | None,
    allow_infeasible: bool,
    jobs: int,
    out: str | None,
) -> None:
    """Run one scenario across many seeds and aggregate the outcomes."""
    if seeds < 1:
        raise click.UsageError("--seeds must be at least 1")
    if jobs < 1:
        raise click.UsageError("--jobs must be at least 1")
    base = _override(_resolve(path, preset), None, max_iters, allow_infeasible)
    if not base.allow_infeasible:
        verdict = check_circulation(base.graph, base.bounds)
        if not verdict.feasible:
            click.echo(f"Infeasible: {verdict.witness.describe()}")
            sys.exit(1)
    scenarios = [with_seed(base, s) for s in range(seed, seed + seeds)]
    try:
        if jobs == 1:
            outcomes = [_sweep_one(sc) for sc in scenarios]
        else:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(_sweep_one, scenarios))
    except _CONFIG_ERRORS as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(2)
    rows = [row for row, _ in outcomes]
    curves = [curve for _, curve in outcomes]
    d = _outdir(out)
    base_fp = fingerprint(base)
    report.write_sweep_csv(rows, base_fp, os.path.join(d, "sweep.csv"))
    report.render_sweep_figure(curves, os.path.join(d, "sweep.png"))
    for row in rows:
        state = f"converged k0={row.k0}" if row.converged else "did not converge"
        note = "" if row.audit_findings == 0 else f", audit findings: {row.audit_findings}"
        click.echo(f"seed {row.seed}: {state} ({row.iterations} iterations){note}")
    click.echo(f"scenario {base_fp} algorithm {base.algorithm}")
    click.echo(report.format_sweep(rows))
    click.echo(f"wrote {d}")
    ok = all(r.converged and r.audit_findings == 0 for r in rows)
    sys.exit(0 if ok else 1)


if __name__ == "__main__":
    main()
