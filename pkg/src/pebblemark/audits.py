"""Flow-based audit of the superconcentrator property."""

from __future__ import annotations

import networkx as nx

from .graph import Dag
from .rng import stream


def disjoint_paths(g: Dag, sources, sinks) -> int:
    """Maximum number of node-disjoint paths from ``sources`` to ``sinks``."""
    net = nx.DiGraph()
    for v in range(1, g.n + 1):
        net.add_edge(("in", v), ("out", v), capacity=1)
        for u in g.parents[v - 1]:
            net.add_edge(("out", u), ("in", v), capacity=1)
    for s in sources:
        net.add_edge("src", ("in", s), capacity=1)
    for t in sinks:
        net.add_edge(("out", t), "dst", capacity=1)
    if "src" not in net or "dst" not in net:
        return 0
    return nx.maximum_flow_value(net, "src", "dst")


def superconcentrator_audit(g: Dag, n_io: int, trials: int, seed: bytes) -> tuple[bool, str]:
    """Sample equal-size input/output subsets and check full disjoint routing."""
    rng = stream(seed, "sc-audit", g.n, n_io)
    inputs = list(range(1, n_io + 1))
    outputs = list(range(g.n - n_io + 1, g.n + 1))
    for t in range(trials):
        m = rng.randint(1, n_io)
        s1, s2 = rng.sample(inputs, m), rng.sample(outputs, m)
        got = disjoint_paths(g, s1, s2)
        if got != m:
            return False, f"trial {t}: {got} disjoint paths for {m}-subsets"
    return True, f"{trials} sampled subset pairs fully routed"
