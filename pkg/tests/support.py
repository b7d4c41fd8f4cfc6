"""Shared random-instance builders used across the test suite."""

import random

from flowbal.graph import Digraph, FlowBounds


def random_strong_digraph(rng: random.Random, n: int, extra: float = 0.3) -> Digraph:
    """Random strongly connected digraph: a directed cycle plus extra arcs.

    The cycle over a shuffled node order guarantees strong connectivity;
    each remaining ordered pair (a, b) becomes a flow arc a -> b with
    probability ``extra``.
    """
    perm = list(range(1, n + 1))
    rng.shuffle(perm)
    edges = {(perm[(t + 1) % n], perm[t]) for t in range(n)}
    for a in range(1, n + 1):
        for b in range(1, n + 1):
            if a != b and (b, a) not in edges and rng.random() < extra:
                edges.add((b, a))
    return Digraph(n, edges)


def random_int_bounds(
    rng: random.Random, g: Digraph, lo: int = 1, hi: int = 10
) -> FlowBounds:
    """Uniform random integer bounds in [lo, hi]; feasibility not planted."""
    lower = {}
    upper = {}
    for e in g.edges:
        a = rng.randint(lo, hi)
        b = rng.randint(lo, hi)
        lower[e], upper[e] = min(a, b), max(a, b)
    return FlowBounds(lower, upper)
