"""Transmitter chip geometry and laminar hydraulic resistance.

The default chip is the cross-shaped gating transmitter: a dye inlet and a
gate (buffer) inlet meet at a cross junction, and each of the two output arms
carries a short feed channel, a zig-zag mixer and a long propagation channel
ending at an outlet held at 0 Pa. Sampling points sit on the propagation
channel of the first (observed) arm.

Lengths in this module are micrometres unless the name says otherwise.
"""

from __future__ import annotations

import configparser
import enum
import io
import math
from collections import deque
from dataclasses import dataclass, field, fields, replace
from functools import partial
from pathlib import Path

import numpy as np

from .errors import InvalidGeometry, InvalidTopology, ParseError

_bad_file = partial(ParseError, module="chip")

MIXING_STEP_RATIO = 4.0  # zig-zag step over channel width
SERIES_TERMS = 100  # odd terms kept in the rectangular-duct series


class SegmentKind(str, enum.Enum):
    STRAIGHT = "Straight"
    ZIGZAG = "ZigZag"


class NodeRole(str, enum.Enum):
    INLET_DYE = "InletDye"
    INLET_GATE = "InletGate"
    JUNCTION = "Junction"
    OUTLET = "Outlet"


@dataclass(frozen=True)
class ChannelSegment:
    id: str
    kind: SegmentKind
    length: float
    width: float
    height: float
    from_node: str
    to_node: str
    step: float | None = None

    def __post_init__(self):
        for name in ("length", "width", "height"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                raise InvalidGeometry(f"segment {self.id!r}: {name} must be > 0, got {value}")
        if self.kind is SegmentKind.ZIGZAG:
            if self.step is None or not (self.step > 0 and self.step <= self.length):
                raise InvalidGeometry(
                    f"segment {self.id!r}: zig-zag step must satisfy 0 < s <= L, got {self.step}")

    @property
    def area_m2(self) -> float:
        return self.width * self.height * 1e-12

    @property
    def volume_m3(self) -> float:
        return self.area_m2 * self.length * 1e-6

    @property
    def hydraulic_diameter_m(self) -> float:
        return 2.0 * self.width * self.height / (self.width + self.height) * 1e-6

    def signature(self):
        """Geometry tuple used for symmetry comparisons."""
        return (self.kind, self.length, self.width, self.height, self.step)


@dataclass(frozen=True)
class Node:
    id: str
    role: NodeRole


@dataclass(frozen=True)
class SamplePoint:
    point_id: str
    segment_id: str
    axial_position: float  # mm from the segment entrance


@dataclass(frozen=True)
class Fluid:
    viscosity: float = 1.0e-3  # Pa s
    diffusivity: float = 5.0e-10  # m^2/s

    def __post_init__(self):
        if not (self.viscosity > 0 and self.diffusivity > 0):
            raise InvalidGeometry("fluid viscosity and diffusivity must be > 0")


@dataclass(frozen=True)
class SegmentResistance:
    segment_id: str
    R: float  # Pa s / m^3
    method: str = "series"


@dataclass(frozen=True)
class ChipNetwork:
    nodes: tuple[Node, ...]
    segments: tuple[ChannelSegment, ...]
    sample_points: tuple[SamplePoint, ...] = ()
    fluid: Fluid = field(default_factory=Fluid)
    junction: str | None = None

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise InvalidTopology("duplicate node ids")
        seg_ids = [s.id for s in self.segments]
        if len(set(seg_ids)) != len(seg_ids):
            raise InvalidTopology("duplicate segment ids")
        roles = [n.role for n in self.nodes]
        if roles.count(NodeRole.INLET_DYE) != 1 or roles.count(NodeRole.INLET_GATE) != 1:
            raise InvalidTopology("network needs exactly one InletDye and one InletGate node")
        if NodeRole.OUTLET not in roles:
            raise InvalidTopology("network needs at least one Outlet node")
        known = set(ids)
        for seg in self.segments:
            if seg.from_node not in known or seg.to_node not in known:
                raise InvalidTopology(f"segment {seg.id!r} references an unknown node")
            if seg.from_node == seg.to_node:
                raise InvalidTopology(f"segment {seg.id!r} is a self-loop")
        if not _connected(ids, self.segments):
            raise InvalidTopology("network graph is disconnected")
        by_id = self.segment_map
        for sp in self.sample_points:
            if sp.segment_id not in by_id:
                raise InvalidTopology(f"sample point {sp.point_id!r} on unknown segment")
            if not 0.0 <= sp.axial_position * 1e3 <= by_id[sp.segment_id].length:
                raise InvalidGeometry(
                    f"sample point {sp.point_id!r} lies outside segment {sp.segment_id!r}")
        if self.junction is None:
            dye = self.dye_inlet
            neighbours = [s.to_node if s.from_node == dye else s.from_node
                          for s in self.segments if dye in (s.from_node, s.to_node)]
            if len(neighbours) != 1:
                raise InvalidTopology("dye inlet must connect to exactly one segment")
            object.__setattr__(self, "junction", neighbours[0])
        elif self.junction not in known:
            raise InvalidTopology(f"junction {self.junction!r} is not a node")

    @property
    def segment_map(self) -> dict[str, ChannelSegment]:
        return {s.id: s for s in self.segments}

    def node_ids(self, role: NodeRole) -> list[str]:
        return [n.id for n in self.nodes if n.role is role]

    @property
    def dye_inlet(self) -> str:
        return self.node_ids(NodeRole.INLET_DYE)[0]

    @property
    def gate_inlet(self) -> str:
        return self.node_ids(NodeRole.INLET_GATE)[0]

    @property
    def outlets(self) -> list[str]:
        return self.node_ids(NodeRole.OUTLET)

    def sample_point(self, point_id: str) -> SamplePoint:
        for sp in self.sample_points:
            if sp.point_id == point_id:
                return sp
        raise KeyError(point_id)

    def pressures(self, dye_mbar: float, gate_mbar: float) -> dict[str, float]:
        """Inlet pressure assignment in mbar keyed by inlet node id."""
        return {self.dye_inlet: float(dye_mbar), self.gate_inlet: float(gate_mbar)}

    def arm(self, outlet: str) -> list[ChannelSegment]:
        """Segments on the unique path from the junction to `outlet`."""
        adj: dict[str, list[ChannelSegment]] = {}
        for s in self.segments:
            adj.setdefault(s.from_node, []).append(s)
            adj.setdefault(s.to_node, []).append(s)
        prev: dict[str, tuple[str, ChannelSegment] | None] = {self.junction: None}
        queue = deque([self.junction])
        while queue:
            node = queue.popleft()
            for s in adj.get(node, []):
                other = s.to_node if s.from_node == node else s.from_node
                if other not in prev:
                    prev[other] = (node, s)
                    queue.append(other)
        if outlet not in prev:
            raise InvalidTopology(f"outlet {outlet!r} unreachable from junction")
        path = []
        node = outlet
        while prev[node] is not None:
            node, seg = prev[node]
            path.append(seg)
        return path[::-1]


def _connected(ids, segments) -> bool:
    if not ids:
        return False
    adj = {i: set() for i in ids}
    for s in segments:
        adj[s.from_node].add(s.to_node)
        adj[s.to_node].add(s.from_node)
    seen = {ids[0]}
    stack = [ids[0]]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == len(ids)


def hydraulic_resistance(segment: ChannelSegment, viscosity: float,
                         method: str = "series") -> SegmentResistance:
    """Laminar resistance of a rectangular duct of the segment's unrolled length.

    ``method="series"`` uses the exact Fourier series for fully developed
    flow in a rectangle,

        R = 12 mu L / (a b^3) / (1 - 192 b / (pi^5 a) * sum_{n odd} tanh(n pi a / 2b) / n^5)

    with ``a >= b`` the larger and smaller cross-section sides.
    ``method="approx"`` is the one-term form ``12 mu L / (w h^3 (1 - 0.630 h/w))``,
    accepted only for ``h <= w``. Zig-zag bends are ignored.
    """
    if not viscosity > 0:
        raise InvalidGeometry(f"viscosity must be > 0, got {viscosity}")
    L = segment.length * 1e-6
    w = segment.width * 1e-6
    h = segment.height * 1e-6
    if method == "series":
        a, b = max(w, h), min(w, h)
        n = np.arange(1, 2 * SERIES_TERMS, 2, dtype=float)
        # tanh saturates to 1 long before overflow matters
        series = np.sum(np.tanh(n * np.pi * a / (2.0 * b)) / n**5)
        R = 12.0 * viscosity * L / (a * b**3) / (1.0 - 192.0 * b / (np.pi**5 * a) * series)
    elif method == "approx":
        if h > w:
            raise InvalidGeometry(f"segment {segment.id!r}: one-term approximation needs h <= w")
        R = 12.0 * viscosity * L / (w * h**3 * (1.0 - 0.630 * h / w))
    else:
        raise ValueError(f"unknown resistance method {method!r}")
    return SegmentResistance(segment.id, float(R), method)


def series_resistance(resistances) -> float:
    return float(sum(r.R for r in resistances))


# --------------------------------------------------------------------------
# default chip
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChipConfig:
    """Geometry of the default transmitter. Lengths in micrometres."""

    main_width: float = 200.0
    height: float = 50.0
    mixer_width: float | None = None
    mixer_width_ratio: float = 0.1
    zigzag_step: float | None = None
    mixer_length: float = 4000.0
    feed_length: float = 1000.0
    propagation_length: float = 12000.0
    inlet_width: float = 50.0
    inlet_length: float = 10000.0
    viscosity_mpas: float = 1.0
    diffusivity: float = 5.0e-10
    sample_positions: tuple[tuple[str, float], ...] = (
        ("p1", 0.0), ("p2", 3000.0), ("p3", 6000.0))

    @property
    def effective_mixer_width(self) -> float:
        if self.mixer_width is not None:
            return self.mixer_width
        return self.mixer_width_ratio * self.main_width

    @property
    def effective_step(self) -> float:
        if self.zigzag_step is not None:
            return self.zigzag_step
        return MIXING_STEP_RATIO * self.effective_mixer_width


def build_default_chip(config: ChipConfig | None = None) -> ChipNetwork:
    """Cross junction with two identical mixer + propagation output arms."""
    cfg = config or ChipConfig()
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, float) and not value > 0 and f.name not in ("mixer_width", "zigzag_step"):
            raise InvalidGeometry(f"chip config: {f.name} must be > 0, got {value}")
    mixer_w = cfg.effective_mixer_width
    if not mixer_w > 0:
        raise InvalidGeometry(f"chip config: mixer width must be > 0, got {mixer_w}")
    R = NodeRole
    nodes = [Node("dye_in", R.INLET_DYE), Node("gate_in", R.INLET_GATE), Node("J", R.JUNCTION)]
    S = SegmentKind
    segments = [
        ChannelSegment("dye_inlet", S.STRAIGHT, cfg.inlet_length, cfg.inlet_width, cfg.height,
                       "dye_in", "J"),
        ChannelSegment("gate_inlet", S.STRAIGHT, cfg.inlet_length, cfg.inlet_width, cfg.height,
                       "gate_in", "J"),
    ]
    for k in (1, 2):
        a, b, out = f"A{k}", f"B{k}", f"out{k}"
        nodes += [Node(a, R.JUNCTION), Node(b, R.JUNCTION), Node(out, R.OUTLET)]
        segments += [
            ChannelSegment(f"feed{k}", S.STRAIGHT, cfg.feed_length, cfg.main_width, cfg.height, "J", a),
            ChannelSegment(f"mixer{k}", S.ZIGZAG, cfg.mixer_length, mixer_w, cfg.height, a, b,
                           step=cfg.effective_step),
            ChannelSegment(f"prop{k}", S.STRAIGHT, cfg.propagation_length, cfg.main_width,
                           cfg.height, b, out),
        ]
    points = tuple(SamplePoint(pid, "prop1", pos * 1e-3) for pid, pos in cfg.sample_positions)
    fluid = Fluid(viscosity=cfg.viscosity_mpas * 1e-3, diffusivity=cfg.diffusivity)
    return ChipNetwork(tuple(nodes), tuple(segments), points, fluid, junction="J")


def mixer_segment(network: ChipNetwork, outlet: str = "out1") -> ChannelSegment | None:
    for seg in network.arm(outlet):
        if seg.kind is SegmentKind.ZIGZAG:
            return seg
    return None


# --------------------------------------------------------------------------
# config file
# --------------------------------------------------------------------------

_GEOMETRY_KEYS = ("main_width", "height", "mixer_width", "mixer_width_ratio", "zigzag_step",
                  "mixer_length", "feed_length", "propagation_length", "inlet_width",
                  "inlet_length")


def dumps_chip_config(cfg: ChipConfig) -> str:
    """Serialize to the INI-style chip file (lengths um, viscosity mPa s)."""
    parser = configparser.ConfigParser()
    parser.optionxform = str
    parser["geometry"] = {k: repr(getattr(cfg, k)) for k in _GEOMETRY_KEYS
                          if getattr(cfg, k) is not None}
    parser["fluid"] = {"viscosity": repr(cfg.viscosity_mpas), "diffusivity": repr(cfg.diffusivity)}
    parser["sample_points"] = {pid: repr(pos) for pid, pos in cfg.sample_positions}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def loads_chip_config(text: str, source: str | None = None) -> ChipConfig:
    parser = configparser.ConfigParser()
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<chip>")
    except configparser.Error as exc:
        raise _bad_file(f"chip file: {exc}", path=source) from exc
    unknown = set(parser.sections()) - {"geometry", "fluid", "sample_points"}
    if unknown:
        raise _bad_file(f"chip file: unknown sections {sorted(unknown)}", path=source)
    kwargs = {}

    def number(section, key):
        raw = parser[section][key]
        try:
            return float(raw)
        except ValueError:
            raise _bad_file(f"chip file: [{section}] {key} = {raw!r} is not a number",
                             path=source) from None

    if parser.has_section("geometry"):
        for key in parser["geometry"]:
            if key not in _GEOMETRY_KEYS:
                raise _bad_file(f"chip file: unknown geometry key {key!r}", path=source)
            kwargs[key] = number("geometry", key)
    if parser.has_section("fluid"):
        for key in parser["fluid"]:
            if key == "viscosity":
                kwargs["viscosity_mpas"] = number("fluid", key)
            elif key == "diffusivity":
                kwargs["diffusivity"] = number("fluid", key)
            else:
                raise _bad_file(f"chip file: unknown fluid key {key!r}", path=source)
    if parser.has_section("sample_points"):
        kwargs["sample_positions"] = tuple(
            (pid, number("sample_points", pid)) for pid in parser["sample_points"])
    return ChipConfig(**kwargs)


def load_chip_config(path) -> ChipConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise _bad_file(f"cannot read chip file: {exc.strerror}", path=str(path)) from exc
    return loads_chip_config(text, source=str(path))


def save_chip_config(cfg: ChipConfig, path) -> None:
    Path(path).write_text(dumps_chip_config(cfg))


def with_overrides(cfg: ChipConfig, **changes) -> ChipConfig:
    return replace(cfg, **changes)
