"""
Fixed-step closed-loop simulation of the inverter with scripted events.

The plant is linear between switch instants, so one classical RK4 step of
``x' = M x + e*w`` with ``w`` held constant is the matrix polynomial

    x+ = (I + hM + (hM)^2/2 + (hM)^3/6 + (hM)^4/24) x
         + h (I + hM/2 + (hM)^2/6 + (hM)^3/24) e w

which :func:`run` precomputes per load configuration. :func:`step` keeps
the textbook four-stage form on top of :func:`state_derivatives`; the two
agree to rounding.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .boundary import operating_point_bound
from .circuit import (CircuitParams, CircuitState, SwitchCommand, build_load_from_power,
                      plant_matrices, state_vector, steady_state_vector, vector_to_state)
from .controller import DEFAULT_BOUND_FACTOR, DEFAULT_T_SAMPLE, ControllerConfig, hysteresis_decision
from .errors import InvalidInputError, ScenarioValidationError, SimulationDivergedError

EVENT_KINDS = ("set_vdc", "set_vref_amp", "set_load")
DEFAULT_DT = 0.5e-6
DEFAULT_RECORD_DT = 10e-6
# cosine reference: u_o peaks at t = 0 and every half period after
DEFAULT_REF_PHASE = math.pi / 2
MIN_VIOLATION = 1e-3
TIMESERIES_COLUMNS = ("t", "x_d", "u_o", "i_L", "i_o", "v_dc", "T", "s", "margin", "violated")


def _is_multiple(value, unit):
    ratio = value / unit
    return abs(ratio - round(ratio)) <= 1e-6


@dataclass(frozen=True)
class Event:
    """Scripted input change; ``value`` is a float or a ``(P, Q)`` pair for ``set_load``."""

    t: float
    kind: str
    value: object

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ScenarioValidationError(f"unknown event kind {self.kind!r}")
        if not math.isfinite(self.t):
            raise ScenarioValidationError("event time must be finite")
        if self.kind == "set_load":
            P, Q = self.value
            if not (math.isfinite(P) and math.isfinite(Q)) or P < 0:
                raise ScenarioValidationError("set_load needs finite P >= 0 and finite Q")
            object.__setattr__(self, "value", (float(P), float(Q)))
        else:
            v = float(self.value)
            if not math.isfinite(v):
                raise ScenarioValidationError(f"{self.kind} value must be finite")
            if self.kind == "set_vdc" and v <= 0:
                raise ScenarioValidationError("set_vdc requires v_dc > 0")
            if self.kind == "set_vref_amp" and v < 0:
                raise ScenarioValidationError("set_vref_amp requires amplitude >= 0")
            object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class Scenario:
    """
    Initial operating point, simulation settings and event script.

    Loads given as ``(P, Q)`` are synthesized at the initial reference
    amplitude ``vref_amp`` and keep that impedance when the reference moves.
    """

    params: CircuitParams = field(default_factory=CircuitParams)
    v_dc: float = 250.0
    vref_amp: float = 120.0
    load: tuple = (5e3, 20e3)
    f_grid: float = 50.0
    t_end: float = 1.0
    dt: float = DEFAULT_DT
    events: tuple = ()
    lam: float | None = None
    bound: float | None = None
    bound_factor: float = DEFAULT_BOUND_FACTOR
    t_sample: float = DEFAULT_T_SAMPLE
    t_delay: float = 0.0
    record_dt: float = DEFAULT_RECORD_DT
    ref_phase: float = DEFAULT_REF_PHASE

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "load", tuple(float(v) for v in self.load))
        for name in ("v_dc", "vref_amp", "f_grid", "t_end", "dt", "t_sample", "t_delay",
                     "record_dt", "bound_factor", "ref_phase"):
            if not math.isfinite(getattr(self, name)):
                raise ScenarioValidationError(f"{name} must be finite")
        if self.v_dc <= 0:
            raise ScenarioValidationError("initial v_dc must be positive")
        if self.vref_amp <= 0:
            raise ScenarioValidationError("initial reference amplitude must be positive")
        if self.load[0] < 0:
            raise ScenarioValidationError("load P must be non-negative")
        if self.f_grid <= 0 or self.dt <= 0 or self.t_end < 0:
            raise ScenarioValidationError("f_grid and dt must be positive, t_end non-negative")
        if self.dt > 1.0 / (20.0 * self.params.f_sw) * (1 + 1e-9):
            raise ScenarioValidationError(
                f"dt={self.dt:g} exceeds 1/(20 f_sw)={1 / (20 * self.params.f_sw):g}: "
                "need at least 20 integration steps per switching period")
        if not _is_multiple(self.t_end, self.dt):
            raise ScenarioValidationError("t_end must be an integer multiple of dt")
        for name in ("t_sample", "record_dt"):
            value = getattr(self, name)
            if value <= 0 or not _is_multiple(value, self.dt):
                raise ScenarioValidationError(f"{name} must be a positive integer multiple of dt")
        if self.t_delay < 0 or not _is_multiple(self.t_delay, self.dt):
            raise ScenarioValidationError("t_delay must be a non-negative integer multiple of dt")
        prev = -math.inf
        for ev in self.events:
            if ev.t < 0 or ev.t > self.t_end:
                raise ScenarioValidationError(
                    f"event at t={ev.t:g} outside the horizon [0, {self.t_end:g}]")
            if ev.t < prev:
                raise ScenarioValidationError("events must be sorted by time")
            prev = ev.t
        try:
            self.controller_config()
        except ValueError as exc:
            raise ScenarioValidationError(str(exc)) from exc

    @property
    def omega(self):
        return 2.0 * math.pi * self.f_grid

    def make_load(self, P, Q):
        return build_load_from_power(P, Q, self.vref_amp, self.omega)

    def controller_config(self):
        lam = self.params.f_sw / 10.0 if self.lam is None else self.lam
        return ControllerConfig(lam=lam, bound=self.bound, T_sample=self.t_sample,
                                T_delay=self.t_delay, bound_factor=self.bound_factor)

    def segment_edges(self):
        """Segment boundaries: 0, distinct event times, ``t_end``."""
        edges = [0.0]
        for ev in self.events:
            if ev.t > edges[-1]:
                edges.append(ev.t)
        if self.t_end > edges[-1]:
            edges.append(self.t_end)
        return edges


@dataclass
class TimeSeries:
    """
    Uniformly decimated record of one run.

    ``bound`` (active band per record) and ``switch_times`` (every bridge
    transition, undecimated) are kept alongside the CSV columns.
    """

    t: np.ndarray
    x_d: np.ndarray
    u_o: np.ndarray
    i_L: np.ndarray
    i_o: np.ndarray
    v_dc: np.ndarray
    T: np.ndarray
    s: np.ndarray
    margin: np.ndarray
    violated: np.ndarray
    bound: np.ndarray
    switch_times: np.ndarray
    sample_period: float
    lam: float

    def __len__(self):
        return len(self.t)

    @property
    def x_err(self):
        return self.u_o - self.x_d

    def columns(self):
        return [getattr(self, name) for name in TIMESERIES_COLUMNS]

    @classmethod
    def empty(cls, sample_period, lam):
        z = np.zeros(0)
        return cls(z, z, z, z, z, z, np.zeros(0, dtype=int), z, z, np.zeros(0, dtype=bool),
                   z, z, sample_period, lam)


class SegmentMetrics(NamedTuple):
    t_start: float
    t_end: float
    rms_error: float
    peak_error: float
    switching_frequency: float
    violated: bool


@dataclass
class Metrics:
    segments: list
    violations: list

    @property
    def violated_segments(self):
        return [seg for seg in self.segments if seg.violated]


def step(state, cmd, load, params, dt):
    """
    One classical RK4 step with the bridge command held.

    Raises
    ------
    SimulationDivergedError
        If the new state is not finite; carries ``state``.
    """
    if dt <= 0:
        raise InvalidInputError("dt must be positive")
    M, e, net = plant_matrices(load, params)
    w = int(SwitchCommand(cmd)) * state.v_dc
    x0 = state_vector(state, net)

    def f(x):
        return M @ x + e * w

    with np.errstate(over="ignore", invalid="ignore"):
        k1 = f(x0)
        k2 = f(x0 + 0.5 * dt * k1)
        k3 = f(x0 + 0.5 * dt * k2)
        k4 = f(x0 + dt * k3)
        x1 = x0 + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(x1)):
        raise SimulationDivergedError("state became non-finite", state)
    return vector_to_state(state.t + dt, x1, state.v_dc, M, net)


def rk4_propagator(M, e, h):
    """``(P, g)`` with one RK4 step equal to ``P @ x + g * w``."""
    hM = h * M
    I = np.eye(M.shape[0])
    hM2 = hM @ hM
    hM3 = hM2 @ hM
    P = I + hM + hM2 / 2 + hM3 / 6 + hM3 @ hM / 24
    g = h * (I + hM / 2 + hM2 / 6 + hM3 / 24) @ e
    return P, g


class _Plant:
    """Per-load constants unpacked for the inner loop."""

    def __init__(self, load, params, dt):
        self.load = load
        self.M, self.e, self.net = plant_matrices(load, params)
        P, g = rk4_propagator(self.M, self.e, dt)
        self.P = tuple(tuple(float(v) for v in row) for row in P)
        self.g = tuple(float(v) for v in g)
        self.m0 = tuple(float(v) for v in self.M[0])
        net = self.net
        self.cn = params.C_f + net.Cd
        self.out = (float(net.C[0]), float(net.C[1]), float(net.D), float(net.Cd))
        self.A = tuple(tuple(float(v) for v in row) for row in net.A)
        self.B = tuple(float(v) for v in net.B)


def initial_vector(scenario, load):
    """Start on the sinusoidal orbit of the initial reference."""
    return steady_state_vector(scenario.vref_amp, scenario.omega, scenario.ref_phase, 0.0,
                               load, scenario.params)


def run(scenario, cfg=None, *, record_dt=None):
    """
    Simulate ``scenario`` under the sampled hysteresis relay.

    Per step: apply due events, sample the controller on ``T_sample``
    multiples, apply delayed commands, record on ``record_dt`` multiples,
    then integrate ``dt``. The record at ``t`` holds the state at ``t`` and
    the bridge command used over ``[t, t + dt)``.
    """
    cfg = scenario.controller_config() if cfg is None else cfg
    params = scenario.params
    dt = scenario.dt
    record_dt = scenario.record_dt if record_dt is None else record_dt
    n_steps = int(round(scenario.t_end / dt))
    ns = int(round(cfg.T_sample / dt))
    nd = int(round(cfg.T_delay / dt))
    nr = int(round(record_dt / dt))
    if ns < 1 or nr < 1 or not _is_multiple(cfg.T_sample, dt) or not _is_multiple(record_dt, dt):
        raise ScenarioValidationError("T_sample and record_dt must be integer multiples of dt")
    if not _is_multiple(cfg.T_delay, dt):
        raise ScenarioValidationError("T_delay must be an integer multiple of dt")
    if n_steps == 0:
        series = TimeSeries.empty(record_dt, cfg.lam)
        return series, Metrics([], [])

    omega = scenario.omega
    phase = scenario.ref_phase
    lam = cfg.lam
    L_f, C_f = params.L_f, params.C_f
    lc = params.LC
    v_dc = scenario.v_dc
    amp = scenario.vref_amp
    load_pq = scenario.load
    plant = _Plant(scenario.make_load(*load_pq), params, dt)
    bound = operating_point_bound(cfg, v_dc, amp, plant.load, omega, params)
    x0, x1, x2, x3 = (float(v) for v in initial_vector(scenario, plant.load))

    pending_events = deque((max(0, int(math.ceil(ev.t / dt - 1e-6))), ev) for ev in scenario.events)
    pending_cmds = deque()
    T = 1
    switch_steps = []

    n_rec = (n_steps + nr - 1) // nr
    rec = np.empty((n_rec, 11))
    r = 0

    (p00, p01, p02, p03), (p10, p11, p12, p13), (p20, p21, p22, p23), (p30, p31, p32, p33) = plant.P
    g0, g1, g2, g3 = plant.g
    m00, m01, m02, m03 = plant.m0
    sin, cos = math.sin, math.cos

    for n in range(n_steps):
        if pending_events and pending_events[0][0] <= n:
            reschedule = False
            while pending_events and pending_events[0][0] <= n:
                _, ev = pending_events.popleft()
                if ev.kind == "set_vdc":
                    v_dc = ev.value
                elif ev.kind == "set_vref_amp":
                    amp = ev.value
                else:
                    old_kind = plant.load.kind
                    load_pq = ev.value
                    plant = _Plant(scenario.make_load(*load_pq), params, dt)
                    if plant.load.kind != old_kind:
                        x3 = 0.0
                    if not plant.net.line_state:
                        x2 = 0.0
                reschedule = True
            if reschedule:
                bound = operating_point_bound(cfg, v_dc, amp, plant.load, omega, params)
                (p00, p01, p02, p03), (p10, p11, p12, p13), (p20, p21, p22, p23), \
                    (p30, p31, p32, p33) = plant.P
                g0, g1, g2, g3 = plant.g
                m00, m01, m02, m03 = plant.m0

        t = n * dt
        if n % ns == 0 or n % nr == 0:
            ph = omega * t + phase
            xd = amp * sin(ph)
            xd_dot = amp * omega * cos(ph)
            u_dot = m00 * x0 + m01 * x1 + m02 * x2 + m03 * x3
            s = (u_dot - xd_dot) + lam * (x0 - xd)
            if n % ns == 0:
                new_T = hysteresis_decision(s, bound, T)
                if nd == 0:
                    if new_T != T:
                        T = new_T
                        switch_steps.append(n)
                else:
                    pending_cmds.append((n + nd, new_T))
        if pending_cmds and pending_cmds[0][0] <= n:
            while pending_cmds and pending_cmds[0][0] <= n:
                _, new_T = pending_cmds.popleft()
                if new_T != T:
                    T = new_T
                    switch_steps.append(n)
        w = T * v_dc
        if n % nr == 0:
            if not (math.isfinite(x0) and math.isfinite(x1) and math.isfinite(x2)
                    and math.isfinite(x3)):
                raise SimulationDivergedError(f"non-finite state at t={t:g}", _last_good(rec, r))
            c0, c1, d, cd = plant.out
            i_o = c0 * x2 + c1 * x3 + d * x0 + cd * u_dot
            z0d = plant.A[0][0] * x2 + plant.A[0][1] * x3 + plant.B[0] * x0
            z1d = plant.A[1][0] * x2 + plant.A[1][1] * x3 + plant.B[1] * x0
            iLd = (w - x0) / L_f
            di_o = c0 * z0d + c1 * z1d + d * u_dot
            if cd:
                di_o += cd * (iLd - c0 * z0d - c1 * z1d - d * u_dot) / plant.cn
            lhs = v_dc / lc
            rhs = abs(x0 / lc + di_o / C_f)
            margin = (lhs - rhs) / lhs
            rec[r] = (t, xd, x0, x1, i_o, v_dc, T, s, margin, lhs <= rhs, bound)
            r += 1
        x0, x1, x2, x3 = (p00 * x0 + p01 * x1 + p02 * x2 + p03 * x3 + g0 * w,
                          p10 * x0 + p11 * x1 + p12 * x2 + p13 * x3 + g1 * w,
                          p20 * x0 + p21 * x1 + p22 * x2 + p23 * x3 + g2 * w,
                          p30 * x0 + p31 * x1 + p32 * x2 + p33 * x3 + g3 * w)

    if not all(math.isfinite(v) for v in (x0, x1, x2, x3)):
        raise SimulationDivergedError("non-finite state at end of run", _last_good(rec, r))

    series = TimeSeries(
        t=rec[:r, 0].copy(), x_d=rec[:r, 1].copy(), u_o=rec[:r, 2].copy(),
        i_L=rec[:r, 3].copy(), i_o=rec[:r, 4].copy(), v_dc=rec[:r, 5].copy(),
        T=rec[:r, 6].astype(int), s=rec[:r, 7].copy(), margin=rec[:r, 8].copy(),
        violated=rec[:r, 9] != 0.0, bound=rec[:r, 10].copy(),
        switch_times=np.asarray(switch_steps, dtype=float) * dt,
        sample_period=nr * dt, lam=lam)
    return series, compute_metrics(series, scenario)


def _last_good(rec, r):
    if r == 0:
        return None
    t, _, u_o, i_L, i_o, v_dc = (float(v) for v in rec[r - 1, :6])
    return CircuitState(t=t, u_o=u_o, i_L=i_L, i_o=i_o, i_load_aux=0.0, v_dc=v_dc)


def violation_intervals(t, margin, *, merge_gap=MIN_VIOLATION, min_duration=MIN_VIOLATION,
                        sample_period=None):
    """
    Maximal spans where ``margin <= 0``.

    Runs separated by less than ``merge_gap`` are joined; joined spans
    shorter than ``min_duration`` are dropped as chatter. A run covering
    samples ``t[i]..t[j]`` spans ``[t[i], t[j] + sample_period)``.
    """
    t = np.asarray(t, dtype=float)
    bad = np.asarray(margin, dtype=float) <= 0
    if t.size == 0 or not bad.any():
        return []
    if sample_period is None:
        sample_period = float(t[1] - t[0]) if t.size > 1 else 0.0
    edges = np.diff(np.concatenate(([0], bad.astype(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1) - 1
    merged = []
    for i, j in zip(starts, stops):
        a, b = float(t[i]), float(t[j] + sample_period)
        if merged and a - merged[-1][1] < merge_gap:
            merged[-1][1] = b
        else:
            merged.append([a, b])
    return [(a, b) for a, b in merged if b - a >= min_duration - 1e-12]


def compute_metrics(series, scenario):
    """
    Per-segment RMS and peak tracking error, switching frequency, and the
    violation intervals of the run.

    Violation runs closer than half a fundamental period are merged: the
    criterion fails around every voltage peak of a violated operating point,
    leaving short compliant gaps near the zero crossings.
    """
    if len(series) == 0:
        raise InvalidInputError("empty time series")
    violations = violation_intervals(series.t, series.margin,
                                     merge_gap=0.5 / scenario.f_grid,
                                     sample_period=series.sample_period)
    err = series.x_err
    edges = scenario.segment_edges()
    segments = []
    for a, b in zip(edges[:-1], edges[1:]):
        mask = (series.t >= a - 1e-12) & (series.t < b - 1e-12)
        e = err[mask]
        rms = float(np.sqrt(np.mean(e ** 2))) if e.size else 0.0
        peak = float(np.max(np.abs(e))) if e.size else 0.0
        n_switch = np.count_nonzero((series.switch_times >= a - 1e-12)
                                    & (series.switch_times < b - 1e-12))
        fsw = n_switch / (2.0 * (b - a))
        overlap = sum(max(0.0, min(b, vb) - max(a, va)) for va, vb in violations)
        segments.append(SegmentMetrics(a, b, rms, peak, fsw, overlap > 0.5 * (b - a)))
    return Metrics(segments, violations)
