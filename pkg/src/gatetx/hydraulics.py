"""Quasi-static pressure-driven flow in the chip network.

Node pressures follow from Kirchhoff's current law with segment
conductances 1/R; inlets are Dirichlet nodes at the assigned pressure and
outlets are held at 0 Pa. Pressures in assignments are mbar, everything
returned is SI.
"""

from __future__ import annotations

import enum
import math
from collections.abc import Mapping
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chip import ChipNetwork, NodeRole, hydraulic_resistance
from .errors import InvalidPressure, SingularNetwork, ZeroFlow

MBAR = 100.0  # Pa


class GateMode(str, enum.Enum):
    ON = "GatingOn"
    OFF = "GatingOff"


@dataclass(frozen=True)
class FlowSolution:
    node_pressures: dict[str, float]  # Pa
    segment_flows: dict[str, float]  # m^3/s, positive from_node -> to_node
    resistances: dict[str, float]  # Pa s / m^3
    dye_injection_flow: float  # m^3/s, out of the dye inlet towards the junction

    def node_balance(self, network: ChipNetwork) -> dict[str, float]:
        """Net flow leaving each node (zero at interior nodes)."""
        net = {n.id: 0.0 for n in network.nodes}
        for seg in network.segments:
            q = self.segment_flows[seg.id]
            net[seg.from_node] += q
            net[seg.to_node] -= q
        return net


@dataclass(frozen=True)
class GateState:
    state: GateMode
    dye_fraction: float


def _check_assignment(network: ChipNetwork, pressures: Mapping[str, float]) -> dict[str, float]:
    inlets = set(network.node_ids(NodeRole.INLET_DYE) + network.node_ids(NodeRole.INLET_GATE))
    if set(pressures) != inlets:
        raise InvalidPressure(
            f"pressure assignment must cover exactly the inlets {sorted(inlets)}, got {sorted(pressures)}")
    values = {k: float(v) for k, v in pressures.items()}
    if not all(math.isfinite(v) for v in values.values()):
        raise InvalidPressure("inlet pressures must be finite")
    if not any(v > 0 for v in values.values()):
        raise InvalidPressure("at least one inlet pressure must be > 0")
    return values


def solve_flows(network: ChipNetwork, pressures: Mapping[str, float],
                resistances: Mapping[str, float] | None = None) -> FlowSolution:
    """Direct sparse solve of the nodal pressure system G p = b."""
    fixed = {k: v * MBAR for k, v in _check_assignment(network, pressures).items()}
    for out in network.outlets:
        fixed[out] = 0.0
    if resistances is None:
        mu = network.fluid.viscosity
        resistances = {s.id: hydraulic_resistance(s, mu).R for s in network.segments}

    free = [n.id for n in network.nodes if n.id not in fixed]
    index = {nid: i for i, nid in enumerate(free)}
    _check_grounded(network, fixed)

    rows, cols, vals = [], [], []
    b = np.zeros(len(free))
    for seg in network.segments:
        g = 1.0 / resistances[seg.id]
        i, j = index.get(seg.from_node), index.get(seg.to_node)
        for other, ia in ((seg.to_node, i), (seg.from_node, j)):
            if ia is None:
                continue
            rows.append(ia)
            cols.append(ia)
            vals.append(g)
            k = index.get(other)
            if k is None:
                b[ia] += g * fixed[other]
            else:
                rows.append(ia)
                cols.append(k)
                vals.append(-g)

    p = dict(fixed)
    if free:
        G = sp.csc_matrix((vals, (rows, cols)), shape=(len(free), len(free)))
        # row scaling keeps conductances of very different size on an equal footing
        scale = 1.0 / G.diagonal()
        Gs = sp.diags(scale) @ G
        bs = scale * b
        x = spla.spsolve(Gs.tocsc(), bs)
        x = x + spla.spsolve(Gs.tocsc(), bs - Gs @ x)  # one refinement step
        for nid, val in zip(free, x):
            p[nid] = float(val)

    flows = {s.id: (p[s.from_node] - p[s.to_node]) / resistances[s.id] for s in network.segments}
    dye = network.dye_inlet
    q_dye = 0.0
    for s in network.segments:
        if s.from_node == dye:
            q_dye += flows[s.id]
        elif s.to_node == dye:
            q_dye -= flows[s.id]
    return FlowSolution(p, flows, dict(resistances), q_dye)


def _check_grounded(network: ChipNetwork, fixed: Mapping[str, float]) -> None:
    """Every free node needs a path to a fixed-pressure node, else G is singular."""
    adj = {n.id: [] for n in network.nodes}
    for s in network.segments:
        adj[s.from_node].append(s.to_node)
        adj[s.to_node].append(s.from_node)
    seen = set(fixed)
    stack = list(fixed)
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    floating = [n.id for n in network.nodes if n.id not in seen]
    if floating:
        raise SingularNetwork(f"nodes {floating} have no path to an inlet or outlet")
    if not network.outlets:
        raise SingularNetwork("no outlet node")


def _junction_flux(network: ChipNetwork, flow: FlowSolution, leaving: bool) -> float:
    total = 0.0
    J = network.junction
    for s in network.segments:
        q = flow.segment_flows[s.id]
        if s.to_node == J:
            q = -q
        elif s.from_node != J:
            continue
        if (q > 0) == leaving and q != 0:
            total += abs(q)
    return total


def junction_outflow(network: ChipNetwork, flow: FlowSolution) -> float:
    """Sum of all flows leaving the cross junction."""
    return _junction_flux(network, flow, leaving=True)


def gate_state(network: ChipNetwork, pressures: Mapping[str, float],
               threshold: float = 0.0, flow: FlowSolution | None = None) -> GateState:
    """Classify the junction: GatingOn when the dye share of the outflow is <= threshold."""
    if not 0.0 <= threshold < 1.0:
        raise ValueError(f"threshold must be in [0, 1), got {threshold}")
    if flow is None:
        flow = solve_flows(network, pressures)
    if junction_outflow(network, flow) <= 0.0:
        raise ZeroFlow("no flow leaves the junction")
    # inflow equals outflow; dividing by the inflow makes a lone dye source exactly 1
    inflow = _junction_flux(network, flow, leaving=False)
    phi = min(1.0, max(0.0, flow.dye_injection_flow) / inflow)
    mode = GateMode.ON if phi <= threshold else GateMode.OFF
    return GateState(mode, phi)


def mean_velocity(network: ChipNetwork, flow: FlowSolution, segment_id: str) -> float:
    """Signed cross-section mean velocity Q / (w h) in m/s."""
    seg = network.segment_map[segment_id]
    return flow.segment_flows[segment_id] / seg.area_m2


def reynolds_number(u: float, segment, viscosity: float, density: float = 998.0) -> float:
    return density * abs(u) * segment.hydraulic_diameter_m / viscosity
