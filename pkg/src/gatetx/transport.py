"""Axial transport of the injected dye from the mixer exit to the sampling points.

The mixer is a single well-mixed compartment (first-order smoothing with
time constant ``tau_m``); downstream of it the cross-section-averaged
concentration obeys

    dc/dt + u dc/dx = D_eff d2c/dx2,   x >= 0,   c(0, t) = source(t).

Two independent solvers are provided. ``analytic_trace`` superposes exact
step responses (complementary error functions) for every injection window.
``numerical_trace`` integrates the same problem with a conservative
finite-volume scheme and is used as a cross-check.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, asdict
from typing import Iterable

import numpy as np
from scipy.special import erfc, erfcx

from .chip import ChannelSegment, ChipNetwork, mixer_segment
from .errors import EmptyWindow, InvalidParams, LaminarRegimeWarning, UnderResolved
from .gating import GatingSchedule, InjectionProfile, injection_profile
from .hydraulics import mean_velocity, reynolds_number, solve_flows
from .taylor import kappa, taylor_aris

FRAME_RATE = 60.0  # camera frames per second


@dataclass(frozen=True)
class TransportParams:
    u: float  # m/s
    D_eff: float  # m^2/s
    tau_m: float = 0.0  # s
    amplitude_scale: float = 1.0

    def __post_init__(self):
        if not (self.u > 0 and self.D_eff > 0):
            raise InvalidParams(f"need u > 0 and D_eff > 0, got u={self.u}, D_eff={self.D_eff}")
        if not self.tau_m >= 0:
            raise InvalidParams(f"tau_m must be >= 0, got {self.tau_m}")
        if not 0 < self.amplitude_scale <= 1:
            raise InvalidParams(f"amplitude_scale must be in (0, 1], got {self.amplitude_scale}")


@dataclass(frozen=True, eq=False)
class ConcentrationTrace:
    point_id: str
    x: float | None  # m
    dt: float  # s
    samples: np.ndarray
    t0: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 2:
            raise ValueError("a trace needs at least two samples")
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if not np.all(np.isfinite(samples)) or np.any(samples < 0):
            raise ValueError("trace samples must be finite and >= 0")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.samples.size)

    def with_samples(self, samples) -> "ConcentrationTrace":
        return ConcentrationTrace(self.point_id, self.x, self.dt, samples, self.t0)


def taylor_dispersion(u: float, channel: ChannelSegment, D: float,
                      viscosity: float = 1.0e-3) -> float:
    """Effective axial dispersion D (1 + kappa Pe^2), Pe on the hydraulic diameter."""
    re = reynolds_number(u, channel, viscosity)
    if re >= 100:
        warnings.warn(f"Re = {re:.1f} in {channel.id!r}: outside the laminar closure",
                      LaminarRegimeWarning, stacklevel=2)
    return taylor_aris(abs(u), channel.hydraulic_diameter_m, D, kappa(channel.height / channel.width))


# --------------------------------------------------------------------------
# analytic solver
# --------------------------------------------------------------------------

def _exp_erfc(c, g, z):
    """exp(c) * erfc(z) given g = c - z^2 in closed form (complex-safe).

    Where Re z >= 0 the product is exp(g) * erfcx(z), which never overflows;
    elsewhere Re c <= 0 and the direct form is safe.
    """
    z = np.asarray(z)
    out = np.empty(np.broadcast(c, z).shape, dtype=complex)
    c = np.broadcast_to(c, out.shape)
    g = np.broadcast_to(g, out.shape)
    z = np.broadcast_to(z, out.shape)
    right = z.real >= 0
    out[right] = np.exp(g[right]) * erfcx(z[right])
    out[~right] = np.exp(c[~right]) * erfc(z[~right])
    return out


def step_response(x: float, t, u: float, D: float, tau: float = 0.0) -> np.ndarray:
    """Concentration at x for a unit step switched on at t = 0 at the boundary.

    With ``tau > 0`` the step is first passed through the mixer, so the
    boundary value is ``1 - exp(-t / tau)``. The decaying part is the
    exact solution for a boundary value ``exp(-t / tau)``, which has the same
    erfc structure with velocity ``w = sqrt(u^2 - 4 D / tau)`` (complex when
    the radicand is negative).
    """
    t = np.asarray(t, dtype=float)
    out = np.zeros(t.shape)
    live = t > 0
    if not np.any(live):
        return out
    tt = t[live]
    root = 2.0 * np.sqrt(D * tt)
    z1 = (x - u * tt) / root
    z2 = (x + u * tt) / root
    # exp(u x / D) erfc(z2) == exp(-z1^2) erfcx(z2)
    A = 0.5 * (erfc(z1) + np.exp(-z1 * z1) * erfcx(z2))
    if tau > 0:
        lam = 1.0 / tau
        w = np.sqrt(complex(u * u - 4.0 * lam * D))
        z1w = (x - w * tt) / root
        z2w = (x + w * tt) / root
        c = -lam * tt + x * (u - w) / (2.0 * D)
        # c - z1w^2 does not depend on w; forming it from the parts cancels catastrophically
        g = -z1 * z1
        E = 0.5 * (_exp_erfc(c, g, z1w) + np.exp(g) * erfcx(z2w))
        A = A - E.real
    out[live] = A
    return out


def _boxcars(source) -> list[tuple[float, float, float]]:
    if isinstance(source, InjectionProfile):
        return source.boxcars()
    return [tuple(map(float, b)) for b in source]


def _sample_count(dt: float, horizon: float) -> int:
    return int(math.floor(horizon / dt + 1e-9)) + 1


def analytic_trace(source, params: TransportParams, x: float, dt: float, horizon: float,
                   point_id: str = "x") -> ConcentrationTrace:
    """Superpose exact step responses: +h at every window start, -h at its end."""
    if horizon < x / params.u:
        warnings.warn(f"horizon {horizon:.3g} s ends before first arrival at {x / params.u:.3g} s",
                      EmptyWindow, stacklevel=2)
    t = dt * np.arange(_sample_count(dt, horizon))
    c = np.zeros_like(t)
    for start, end, height in _boxcars(source):
        c += height * (step_response(x, t - start, params.u, params.D_eff, params.tau_m)
                       - step_response(x, t - end, params.u, params.D_eff, params.tau_m))
    c *= params.amplitude_scale
    return ConcentrationTrace(point_id, x, dt, np.clip(c, 0.0, None))


# --------------------------------------------------------------------------
# finite-volume solver
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MassAudit:
    injected: float  # integral of the inflow flux (per unit area)
    stored: float
    outflow: float

    @property
    def relative_error(self) -> float:
        scale = max(abs(self.injected), 1e-300)
        return abs(self.injected - self.stored - self.outflow) / scale


@dataclass(frozen=True, eq=False)
class NumericalResult:
    trace: ConcentrationTrace
    audit: MassAudit
    dx: float
    time_step: float
    cells: int


def _limiter(name):
    if name == "vanleer":
        return lambda r: (r + np.abs(r)) / (1.0 + np.abs(r))
    if name == "minmod":
        return lambda r: np.maximum(0.0, np.minimum(1.0, r))
    if name == "mc":
        return lambda r: np.maximum(0.0, np.minimum(np.minimum(2.0 * r, 0.5 * (1.0 + r)), 2.0))
    if name == "upwind":
        return None
    raise ValueError(f"unknown limiter {name!r}")


def _source_averages(boxcars, tau: float, edges: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean of the mixer output over each [edges[k], edges[k+1]] and its left limit at edges[k+1].

    The mixer ODE tau s' = phi - s is integrated exactly across every
    breakpoint of the piecewise-constant input.
    """
    breaks = sorted({0.0, *[b[0] for b in boxcars], *[b[1] for b in boxcars]})

    def phi_at(t):
        return sum(h for a, b, h in boxcars if a <= t < b)

    out = np.empty(edges.size - 1)
    ends = np.empty(edges.size - 1)
    s = 0.0
    t = 0.0
    bi = 0
    for k in range(edges.size - 1):
        lo, hi = edges[k], edges[k + 1]
        total = 0.0
        t = lo
        while t < hi:
            while bi < len(breaks) and breaks[bi] <= t:
                bi += 1
            nxt = min(hi, breaks[bi]) if bi < len(breaks) else hi
            span = nxt - t
            phi = phi_at(t)
            if tau > 0:
                decay = math.exp(-span / tau)
                total += phi * span + (s - phi) * tau * (1.0 - decay)
                s = phi + (s - phi) * decay
            else:
                total += phi * span
                s = phi
            t = nxt
        out[k] = total / (hi - lo)
        ends[k] = s
    return out, ends


def numerical_solution(source, params: TransportParams, x: float, dt: float, horizon: float,
                       dx: float | None = None, limiter: str = "vanleer",
                       time_step: float | None = None, point_id: str = "x") -> NumericalResult:
    """Finite-volume advection (limited upwind) + central diffusion, Heun time stepping."""
    boxcars = _boxcars(source)
    u, D = params.u, params.D_eff
    x_max = x + 6.0 * math.sqrt(D * horizon)
    if dx is None:
        dx = x_max / 1000.0
    n_cells = max(int(math.ceil(x_max / dx)), 4)
    dx = x_max / n_cells

    shortest = min((b - a for a, b, _ in boxcars), default=math.inf)
    # advective CFL 0.5 and diffusion number 0.4 when alone; the sum is bounded when both act
    stable = min(1.0 / (2.0 * u / dx + 2.5 * D / (dx * dx)), dt)
    if time_step is None:
        time_step = min(stable, shortest / 8.0)
    elif time_step > stable * (1 + 1e-12):
        raise UnderResolved(f"time step {time_step} s violates the CFL/diffusion limit {stable} s")
    if time_step > shortest / 8.0 * (1 + 1e-12):
        raise UnderResolved(f"time step {time_step} s gives fewer than 8 steps per gating window")
    sub = int(math.ceil(dt / time_step - 1e-9))
    h = dt / sub
    n_out = _sample_count(dt, horizon)
    n_steps = (n_out - 1) * sub
    edges = h * np.arange(n_steps + 1)
    s_bar, s_end = _source_averages(boxcars, params.tau_m, edges)
    s_bar *= params.amplitude_scale
    s_end *= params.amplitude_scale

    phi_lim = _limiter(limiter)
    centers = (np.arange(n_cells) + 0.5) * dx

    def fluxes(c, s):
        # face k sits between cell k-1 and cell k; face 0 is the inlet, face n the outlet
        ext = np.concatenate(([2.0 * s - c[0]], c, [c[-1]]))
        d = np.diff(ext)  # d[k] = ext[k+1] - ext[k]
        if phi_lim is None:
            left = c
        else:
            with np.errstate(divide="ignore", invalid="ignore"):
                r = np.where(d[1:] != 0.0, d[:-1] / d[1:], 0.0)
            left = c + 0.5 * phi_lim(r) * d[1:]
        adv = np.empty(n_cells + 1)
        adv[0] = u * s
        adv[1:] = u * left
        adv[-1] = u * c[-1]
        dif = np.empty(n_cells + 1)
        dif[0] = -D * (c[0] - s) / (0.5 * dx)
        dif[1:-1] = -D * (c[1:] - c[:-1]) / dx
        dif[-1] = 0.0
        return adv + dif

    c = np.zeros(n_cells)
    samples = np.empty(n_out)
    injected = outflow = 0.0

    def probe(c, s):
        if x <= centers[0]:
            return s + (c[0] - s) * x / centers[0]
        return float(np.interp(x, centers, c))

    samples[0] = probe(c, 0.0)
    for n in range(n_steps):
        s = s_bar[n]
        f1 = fluxes(c, s)
        c1 = c - h / dx * np.diff(f1)
        f2 = fluxes(c1, s)
        c = 0.5 * (c + c1 - h / dx * np.diff(f2))
        injected += 0.5 * h * (f1[0] + f2[0])
        outflow += 0.5 * h * (f1[-1] + f2[-1])
        if (n + 1) % sub == 0:
            samples[(n + 1) // sub] = probe(c, s_end[n])
    stored = float(np.sum(c) * dx)
    trace = ConcentrationTrace(point_id, x, dt, np.clip(samples, 0.0, None))
    return NumericalResult(trace, MassAudit(injected, stored, outflow), dx, h, n_cells)


def numerical_trace(source, params: TransportParams, x: float, dt: float, horizon: float,
                    dx: float | None = None, limiter: str = "vanleer",
                    time_step: float | None = None, point_id: str = "x") -> ConcentrationTrace:
    return numerical_solution(source, params, x, dt, horizon, dx, limiter, time_step,
                              point_id).trace


# --------------------------------------------------------------------------
# chip-level simulation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ModelParams:
    """Calibratable knobs on top of the geometry-derived transport parameters.

    ``tau_m=None`` uses the mixer residence time (volume / flow) in the
    gating ON state; the uncalibrated default is an ideal mixer (0 s).
    ``readout_gain=None`` means a linear intensity readout.
    """

    tau_m: float | None = 0.0
    dispersion_scale: float = 1.0
    amplitude_scale: float = 1.0
    readout_gain: float | None = None
    dt: float = 1.0 / FRAME_RATE
    solver: str = "analytic"

    def __post_init__(self):
        if self.tau_m is not None and self.tau_m < 0:
            raise InvalidParams("tau_m must be >= 0")
        if not self.dispersion_scale > 0:
            raise InvalidParams("dispersion_scale must be > 0")
        if not 0 < self.amplitude_scale <= 1:
            raise InvalidParams("amplitude_scale must be in (0, 1]")
        if self.readout_gain is not None and not self.readout_gain > 0:
            raise InvalidParams("readout_gain must be > 0")
        if self.solver not in ("analytic", "numerical"):
            raise InvalidParams(f"unknown solver {self.solver!r}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class SimulationResult:
    traces: dict[str, ConcentrationTrace]
    profile: InjectionProfile
    metadata: dict = field(default_factory=dict)


def carrier_transport(schedule: GatingSchedule, chip: ChipNetwork, model: ModelParams,
                      point_ids: Iterable[str]) -> tuple[dict[str, TransportParams], dict]:
    """Transport parameters per sampling point from the gating-ON carrier flow."""
    first = schedule.steps[0]
    flow = solve_flows(chip, chip.pressures(first.dye, first.gate))
    segments = chip.segment_map
    params, meta = {}, {"points": {}}
    tau = model.tau_m
    mixer = mixer_segment(chip)
    if tau is None:
        if mixer is None:
            tau = 0.0
        else:
            tau = mixer.volume_m3 / abs(flow.segment_flows[mixer.id])
    meta["tau_m_s"] = tau
    meta["tau_m_source"] = "model" if model.tau_m is not None else "mixer residence time"
    for pid in point_ids:
        sp = chip.sample_point(pid)
        seg = segments[sp.segment_id]
        u = mean_velocity(chip, flow, seg.id)
        if not u > 0:
            raise InvalidParams(f"no forward carrier flow in {seg.id!r} (u = {u})")
        D_eff = model.dispersion_scale * taylor_dispersion(u, seg, chip.fluid.diffusivity,
                                                           chip.fluid.viscosity)
        params[pid] = TransportParams(u, D_eff, tau, model.amplitude_scale)
        meta["points"][pid] = {"segment": seg.id, "x_m": sp.axial_position * 1e-3,
                               "u_m_per_s": u, "D_eff_m2_per_s": D_eff}
    return params, meta


def simulate(schedule: GatingSchedule, chip: ChipNetwork, model: ModelParams | None = None,
             points: Iterable[str] | None = None) -> SimulationResult:
    """Injection profile -> carrier velocity -> dispersion -> trace at each sampling point."""
    model = model or ModelParams()
    point_ids = list(points) if points is not None else [sp.point_id for sp in chip.sample_points]
    profile = injection_profile(schedule, chip)
    params, meta = carrier_transport(schedule, chip, model, point_ids)
    traces = {}
    for pid in point_ids:
        x = chip.sample_point(pid).axial_position * 1e-3
        if model.solver == "analytic":
            traces[pid] = analytic_trace(profile, params[pid], x, model.dt, schedule.duration, pid)
        else:
            traces[pid] = numerical_trace(profile, params[pid], x, model.dt, schedule.duration,
                                          point_id=pid)
    meta.update({"solver": model.solver, "dt_s": model.dt, "duration_s": schedule.duration,
                 "model": model.to_dict(),
                 "dye_fraction_off": max(profile.values)})
    return SimulationResult(traces, profile, meta)
