"""Random flow networks and a dense reference solver shared by the tests."""

import numpy as np

from gatetx.chip import ChannelSegment, ChipNetwork, Node, NodeRole, SegmentKind, hydraulic_resistance
from gatetx.hydraulics import MBAR


def random_network(rng: np.random.Generator, n_nodes: int) -> ChipNetwork:
    """Connected network: node 0 dye inlet, node 1 gate inlet, 1-3 outlets, the rest internal."""
    n_out = min(int(rng.integers(1, 4)), n_nodes - 2)
    roles = [NodeRole.INLET_DYE, NodeRole.INLET_GATE]
    roles += [NodeRole.JUNCTION] * (n_nodes - 2 - n_out) + [NodeRole.OUTLET] * n_out
    nodes = tuple(Node(f"n{i}", r) for i, r in enumerate(roles))
    edges = set()
    order = rng.permutation(n_nodes)
    for k in range(1, n_nodes):  # random spanning tree
        a, b = int(order[k]), int(order[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    for _ in range(int(rng.integers(0, n_nodes))):
        a, b = (int(v) for v in rng.choice(n_nodes, 2, replace=False))
        edges.add((min(a, b), max(a, b)))
    segments = []
    for k, (a, b) in enumerate(sorted(edges)):
        if rng.random() < 0.5:
            a, b = b, a
        segments.append(ChannelSegment(
            f"s{k}", SegmentKind.STRAIGHT, float(rng.uniform(100, 20000)),
            float(rng.uniform(10, 500)), float(rng.uniform(10, 100)), f"n{a}", f"n{b}"))
    dye_nb = next(s.to_node if s.from_node == "n0" else s.from_node
                  for s in segments if "n0" in (s.from_node, s.to_node))
    return ChipNetwork(nodes, tuple(segments), junction=dye_nb)


def dense_solve(network: ChipNetwork, pressures_mbar: dict) -> dict:
    """Node pressures (Pa) from the full Laplacian with a plain dense solve."""
    ids = [n.id for n in network.nodes]
    idx = {nid: i for i, nid in enumerate(ids)}
    n = len(ids)
    G = np.zeros((n, n))
    mu = network.fluid.viscosity
    for s in network.segments:
        g = 1.0 / hydraulic_resistance(s, mu).R
        i, j = idx[s.from_node], idx[s.to_node]
        G[i, i] += g
        G[j, j] += g
        G[i, j] -= g
        G[j, i] -= g
    fixed = {k: v * MBAR for k, v in pressures_mbar.items()}
    fixed.update({o: 0.0 for o in network.outlets})
    known = np.array([idx[k] for k in fixed])
    free = np.array([i for i in range(n) if ids[i] not in fixed])
    p = np.zeros(n)
    p[known] = [fixed[ids[i]] for i in known]
    if free.size:
        rhs = -G[np.ix_(free, known)] @ p[known]
        p[free] = np.linalg.solve(G[np.ix_(free, free)], rhs)
    return {nid: float(p[i]) for nid, i in idx.items()}
