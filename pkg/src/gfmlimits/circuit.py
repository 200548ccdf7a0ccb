"""
Switched single-phase H-bridge with an LC output filter and a local load.

The bridge applies ``T * v_dc`` (``T`` in {-1, +1}) to the filter inductor.
The load hangs off the capacitor node, optionally through a series line
impedance, and is modelled as a constant impedance synthesized from an
active/reactive power pair at a rated voltage.

Internally every configuration is reduced to one linear system over the
vector ``[u_o, i_L, z0, z1]`` where ``z0`` is the line current (only used
when the line has inductance) and ``z1`` is the reactive-branch state
(inductor current or capacitor voltage).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .errors import InvalidParameterError

DEFAULT_L_F = 0.5e-3
DEFAULT_C_F = 20e-6
DEFAULT_F_SW = 20e3
MIN_DESIGN_RATIO = 10.0


def _check_finite(**values):
    for name, value in values.items():
        if value is None or not math.isfinite(value):
            raise InvalidParameterError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class CircuitParams:
    """
    Filter and line data.

    Exactly one of ``f_sw`` / ``a`` is normally given; the other is derived
    from ``f_sw = a / (2*pi*sqrt(L_f*C_f))``. When both are omitted the
    switching frequency defaults to 20 kHz.

    Parameters
    ----------
    L_f : float
        Filter inductance (H).
    C_f : float
        Filter capacitance (F).
    f_sw : float, optional
        Designed nominal switching frequency (Hz).
    a : float, optional
        Ratio of switching to filter resonance frequency, at least 10.
    R_line, L_line : float
        Series line resistance (ohm) and inductance (H) between the
        capacitor and the load. Both default to 0 (load at the capacitor).
    """

    L_f: float = DEFAULT_L_F
    C_f: float = DEFAULT_C_F
    f_sw: float | None = None
    a: float | None = None
    R_line: float = 0.0
    L_line: float = 0.0

    def __post_init__(self):
        _check_finite(L_f=self.L_f, C_f=self.C_f, R_line=self.R_line, L_line=self.L_line)
        if self.L_f <= 0 or self.C_f <= 0:
            raise InvalidParameterError("L_f and C_f must be positive")
        if self.R_line < 0 or self.L_line < 0:
            raise InvalidParameterError("line impedance must be non-negative")
        f_res = self.resonance_hz
        f_sw, a = self.f_sw, self.a
        if f_sw is None and a is None:
            f_sw = DEFAULT_F_SW
        if f_sw is None:
            _check_finite(a=a)
            f_sw = a * f_res
        elif a is None:
            _check_finite(f_sw=f_sw)
            a = f_sw / f_res
        else:
            _check_finite(f_sw=f_sw, a=a)
            if not math.isclose(f_sw, a * f_res, rel_tol=1e-9):
                raise InvalidParameterError(
                    f"f_sw={f_sw} inconsistent with a={a} (resonance {f_res:.6g} Hz)")
        if f_sw <= 0:
            raise InvalidParameterError("f_sw must be positive")
        if a < MIN_DESIGN_RATIO * (1 - 1e-12):
            raise InvalidParameterError(
                f"filter design ratio a={a:.4g} below {MIN_DESIGN_RATIO:g}: "
                "switching frequency too close to the LC resonance")
        object.__setattr__(self, "f_sw", float(f_sw))
        object.__setattr__(self, "a", float(a))

    @property
    def LC(self):
        return self.L_f * self.C_f

    @property
    def resonance_hz(self):
        return 1.0 / (2.0 * math.pi * math.sqrt(self.L_f * self.C_f))


class SwitchCommand(IntEnum):
    """Bipolar bridge state; zero is never emitted."""

    NEGATIVE = -1
    POSITIVE = 1


@dataclass(frozen=True)
class CircuitState:
    """Instantaneous electrical state.

    ``i_o`` is the current leaving the capacitor node toward the load and
    ``i_load_aux`` the reactive-branch state (A for an inductor, V for a
    capacitor behind a line impedance).
    """

    t: float
    u_o: float
    i_L: float
    i_o: float
    i_load_aux: float
    v_dc: float

    def __post_init__(self):
        _check_finite(t=self.t, u_o=self.u_o, i_L=self.i_L, i_o=self.i_o,
                      i_load_aux=self.i_load_aux, v_dc=self.v_dc)


class StateDerivative(NamedTuple):
    d_u_o: float
    d_i_L: float
    d_i_o: float
    d_i_load_aux: float


@dataclass(frozen=True)
class LoadSpec:
    """
    Constant-impedance load synthesized from powers at a rated voltage.

    ``Q > 0`` is inductive and ``Q < 0`` capacitive. A zero power omits
    the respective branch, so ``P = Q = 0`` is an open circuit.
    """

    P: float
    Q: float
    V_rated_peak: float
    omega: float

    def __post_init__(self):
        _check_finite(P=self.P, Q=self.Q, V_rated_peak=self.V_rated_peak, omega=self.omega)
        if self.V_rated_peak <= 0:
            raise InvalidParameterError("V_rated_peak must be positive")
        if self.omega <= 0:
            raise InvalidParameterError("omega must be positive")
        if self.P < 0:
            raise InvalidParameterError("P must be non-negative")

    @property
    def _apparent_base(self):
        # V_rms**2 with V_rms = V_peak/sqrt(2)
        return self.V_rated_peak ** 2 / 2.0

    @property
    def R_load(self):
        return self._apparent_base / self.P if self.P > 0 else None

    @property
    def X_mag(self):
        return self._apparent_base / abs(self.Q) if self.Q != 0 else None

    @property
    def kind(self):
        if self.Q > 0:
            return "inductive"
        if self.Q < 0:
            return "capacitive"
        return None

    @property
    def L_load(self):
        return self.X_mag / self.omega if self.Q > 0 else None

    @property
    def C_load(self):
        return 1.0 / (self.omega * self.X_mag) if self.Q < 0 else None

    def without_reactive(self):
        """Same load with the reactive branch removed."""
        return LoadSpec(self.P, 0.0, self.V_rated_peak, self.omega)


def build_load_from_power(P, Q, V_rated_peak, omega):
    """
    Synthesize a parallel R / reactive load that absorbs ``(P, Q)`` at
    ``V_rated_peak``.

    Examples
    --------
    >>> load = build_load_from_power(5e3, 20e3, 120.0, 2 * math.pi * 50)
    >>> round(load.R_load, 6), round(load.X_mag, 6)
    (1.44, 0.36)
    """
    return LoadSpec(float(P), float(Q), float(V_rated_peak), float(omega))


class LoadNetwork(NamedTuple):
    """Linear description of everything right of the filter capacitor.

    ``z' = A z + B u_o`` and ``i_o = C.z + D u_o + Cd u_o'``; ``Cd`` is a
    capacitance sitting directly on the filter node.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float
    Cd: float
    line_state: bool


def load_network(load, params):
    A = np.zeros((2, 2))
    B = np.zeros(2)
    C = np.zeros(2)
    D = 0.0
    Cd = 0.0
    R = load.R_load
    G = 0.0 if R is None else 1.0 / R
    kind = load.kind
    R_ln, L_ln = params.R_line, params.L_line
    if L_ln > 0:
        if kind == "capacitive":
            C_L = load.C_load
            C[0] = 1.0
            A[0] = (-R_ln / L_ln, -1.0 / L_ln)
            B[0] = 1.0 / L_ln
            A[1] = (1.0 / C_L, -G / C_L)
        elif kind == "inductive":
            L_L = load.L_load
            C[0] = 1.0
            if G > 0:
                A[0] = (-(R_ln + R) / L_ln, R / L_ln)
                B[0] = 1.0 / L_ln
                A[1] = (R / L_L, -R / L_L)
            else:
                # line and load inductors in series carry the same current
                A[0] = (-R_ln / (L_ln + L_L), 0.0)
                B[0] = 1.0 / (L_ln + L_L)
                A[1] = A[0]
                B[1] = B[0]
        elif G > 0:
            C[0] = 1.0
            A[0, 0] = -(R_ln + R) / L_ln
            B[0] = 1.0 / L_ln
        return LoadNetwork(A, B, C, D, Cd, True)
    if R_ln > 0:
        if kind == "capacitive":
            C_L = load.C_load
            C[1] = -1.0 / R_ln
            D = 1.0 / R_ln
            A[1, 1] = -(1.0 / R_ln + G) / C_L
            B[1] = 1.0 / (R_ln * C_L)
        elif kind == "inductive":
            den = 1.0 + G * R_ln
            C[1] = 1.0 / den
            D = G / den
            A[1, 1] = -R_ln / (den * load.L_load)
            B[1] = 1.0 / (den * load.L_load)
        else:
            D = G / (1.0 + G * R_ln)
        return LoadNetwork(A, B, C, D, Cd, False)
    D = G
    if kind == "capacitive":
        Cd = load.C_load
    elif kind == "inductive":
        C[1] = 1.0
        B[1] = 1.0 / load.L_load
    return LoadNetwork(A, B, C, D, Cd, False)


def node_capacitance(params, load):
    """Filter capacitance plus any load capacitance attached directly to it."""
    return params.C_f + load_network(load, params).Cd


def plant_matrices(load, params):
    """
    Return ``(M, e, net)`` with ``x' = M x + e * (T * v_dc)`` over
    ``x = [u_o, i_L, z0, z1]``.
    """
    net = load_network(load, params)
    cn = params.C_f + net.Cd
    M = np.zeros((4, 4))
    M[0] = (-net.D / cn, 1.0 / cn, -net.C[0] / cn, -net.C[1] / cn)
    M[1, 0] = -1.0 / params.L_f
    M[2:, 0] = net.B
    M[2:, 2:] = net.A
    e = np.array([0.0, 1.0 / params.L_f, 0.0, 0.0])
    return M, e, net


def state_vector(state, net):
    return np.array([state.u_o, state.i_L, state.i_o if net.line_state else 0.0,
                     state.i_load_aux])


def output_current(x, M, net):
    """Load current ``i_o`` for state vector ``x``."""
    i_o = net.C[0] * x[2] + net.C[1] * x[3] + net.D * x[0]
    if net.Cd:
        i_o += net.Cd * float(M[0] @ x)
    return float(i_o)


def output_current_rate(x, bridge_voltage, M, e, net, params):
    """``d i_o / dt`` taken from the load equations (no differencing)."""
    xdot = M @ x + e * bridge_voltage
    d_i_o = net.C[0] * xdot[2] + net.C[1] * xdot[3] + net.D * xdot[0]
    if net.Cd:
        cn = params.C_f + net.Cd
        u_dd = (xdot[1] - net.C[0] * xdot[2] - net.C[1] * xdot[3] - net.D * xdot[0]) / cn
        d_i_o += net.Cd * u_dd
    return float(d_i_o)


def vector_to_state(t, x, v_dc, M, net):
    return CircuitState(t=float(t), u_o=float(x[0]), i_L=float(x[1]),
                        i_o=output_current(x, M, net), i_load_aux=float(x[3]),
                        v_dc=float(v_dc))


def state_derivatives(state, cmd, params, load):
    """
    Right-hand side of the switched plant.

    ``d i_L/dt = (T v_dc - u_o)/L_f`` and ``d u_o/dt = (i_L - i_o)/C_f``;
    the load branches supply ``d i_o/dt``. Differentiating the second
    equation once more gives
    ``u_o'' = -u_o/(L_f C_f) - i_o'/C_f + T v_dc/(L_f C_f)``.

    ``i_o`` of ``state`` is only read as a state variable when the line
    has inductance; otherwise it is an algebraic output of the other
    fields and is recomputed.
    """
    T = int(SwitchCommand(cmd))
    M, e, net = plant_matrices(load, params)
    x = state_vector(state, net)
    bridge = T * state.v_dc
    xdot = M @ x + e * bridge
    d_i_o = output_current_rate(x, bridge, M, e, net, params)
    return StateDerivative(float(xdot[0]), float(xdot[1]), d_i_o, float(xdot[3]))


def equivalent_control_input(cmd, v_dc, params):
    """Bridge term ``T v_dc / (L_f C_f)`` of the capacitor-voltage dynamics (V/s^2)."""
    if v_dc < 0:
        raise InvalidParameterError("v_dc must be non-negative")
    return int(SwitchCommand(cmd)) * v_dc / params.LC


def steady_state_phasors(V, load, omega, params):
    """
    Sinusoidal steady state for capacitor voltage phasor ``V`` (peak).

    Returns ``(I_o, Z, I_L)``: load current phasor, load-state phasors and
    filter inductor current phasor.
    """
    net = load_network(load, params)
    jw = 1j * omega
    Z = np.linalg.solve(jw * np.eye(2) - net.A, net.B * V)
    I_o = complex(net.C @ Z + net.D * V + net.Cd * jw * V)
    I_L = jw * params.C_f * V + I_o
    return I_o, Z, I_L


def steady_state_vector(amplitude, omega, phase, t, load, params):
    """State vector on the sinusoidal orbit where ``u_o = amplitude*sin(omega t + phase)``."""
    V = amplitude * np.exp(1j * phase)
    I_o, Z, I_L = steady_state_phasors(V, load, omega, params)
    rot = np.exp(1j * omega * t)
    return np.array([(V * rot).imag, (I_L * rot).imag, (Z[0] * rot).imag, (Z[1] * rot).imag])
