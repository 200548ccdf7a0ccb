"""
Controllability boundary of the bridge and the best-case tracking envelope.

The bridge can only reverse the curvature of the capacitor voltage while

    v_dc / (L_f C_f) > | u_o / (L_f C_f) + (1/C_f) d i_o/dt |

holds. Multiplying through by ``L_f C_f`` turns both sides into volts,
which is the form used for steady-state sweeps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np

from .circuit import build_load_from_power, node_capacitance, steady_state_phasors
from .errors import InfeasibleBandError, InvalidInputError, InvalidParameterError

# drift fraction fitted to the first violation episode of the dc-link step
# scenario (150 V, 120 V peak, 5 kW + 20 kVAr); 0.5 overshoots it by ~4 decades
CALIBRATED_DRIFT_FRACTION = 3.0e-5


class BoundaryVerdict(NamedTuple):
    lhs: float
    rhs: float
    margin: float
    satisfied: bool


def _verdict(lhs, rhs):
    if lhs > 0:
        margin = (lhs - rhs) / lhs
    else:
        margin = -math.inf if rhs > 0 else 0.0
    return BoundaryVerdict(float(lhs), float(rhs), float(margin), bool(lhs > rhs))


def instantaneous_criterion(u_o, di_o_dt, v_dc, params):
    """Evaluate the controllability inequality at one instant (sides in V/s^2)."""
    if v_dc < 0:
        raise InvalidParameterError("v_dc must be non-negative")
    lc = params.LC
    return _verdict(v_dc / lc, abs(u_o / lc + di_o_dt / params.C_f))


def steady_state_worst_case(V_peak, load, omega, params):
    """
    Cycle maximum of ``|u_o + L_f di_o/dt|`` when ``u_o`` is the sinusoid
    of amplitude ``V_peak`` (V).

    In phasor form this is ``|V + j omega L_f I_o|``; the bridge can hold
    the orbit only while ``v_dc`` exceeds it.
    """
    I_o, _, _ = steady_state_phasors(complex(V_peak), load, omega, params)
    return float(abs(V_peak + 1j * omega * params.L_f * I_o))


def steady_state_verdict(v_dc, V_peak, load, omega, params):
    worst = steady_state_worst_case(V_peak, load, omega, params)
    return _verdict(v_dc / params.LC, worst / params.LC), worst


def min_bound_estimate(T_sample, T_delay, v_dc, worst_rhs, params):
    """
    Smallest hysteresis half-width sampling can enforce (V/s).

    During one reaction latency ``s`` can move by at most
    ``(v_dc/(L_f C_f) + worst_rhs) * (T_sample + T_delay)``.
    """
    if T_sample <= 0:
        raise InvalidParameterError("T_sample must be positive")
    if T_delay < 0:
        raise InvalidParameterError("T_delay must be non-negative")
    return (v_dc / params.LC + worst_rhs) * (T_sample + T_delay)


def operating_point_bound(cfg, v_dc, V_peak, load, omega, params):
    """
    Band used by the relay at an operating point.

    A fixed ``cfg.bound`` wins. Otherwise ``cfg.bound_factor * H_b`` where
    ``H_b`` is computed for the capacitance actually seen at the filter
    node: a load capacitor attached there slows ``s`` by the ratio of the
    capacitances, and a band sized for ``C_f`` alone would be far too wide.
    """
    if cfg.bound is not None:
        return cfg.bound
    return cfg.bound_factor * node_min_bound(cfg, v_dc, V_peak, load, omega, params)


def node_min_bound(cfg, v_dc, V_peak, load, omega, params):
    cn = node_capacitance(params, load)
    if cn != params.C_f:
        node_params = replace(params, C_f=cn, a=None)
        rest = load.without_reactive()
    else:
        node_params, rest = params, load
    worst = steady_state_worst_case(V_peak, rest, omega, node_params)
    return min_bound_estimate(cfg.T_sample, cfg.T_delay, v_dc, worst / node_params.LC,
                              node_params)


@dataclass(frozen=True)
class SoaCell:
    v_dc: float
    v_peak: float
    P: float
    Q: float
    worst_case_V: float
    verdict: BoundaryVerdict


@dataclass(frozen=True)
class SoaGrid:
    """Steady-state verdicts over ``v_dc x v_peak x load`` in axis-major order."""

    v_dc_axis: tuple
    v_peak_axis: tuple
    load_axis: tuple
    cells: tuple = field(repr=False)

    def __post_init__(self):
        expected = len(self.v_dc_axis) * len(self.v_peak_axis) * len(self.load_axis)
        if len(self.cells) != expected:
            raise InvalidInputError(f"grid has {len(self.cells)} cells, expected {expected}")

    def cell(self, i, j, k):
        nj, nk = len(self.v_peak_axis), len(self.load_axis)
        return self.cells[(i * nj + j) * nk + k]

    def margins(self):
        """Margins reshaped to ``(n_vdc, n_vpeak, n_load)``."""
        shape = (len(self.v_dc_axis), len(self.v_peak_axis), len(self.load_axis))
        return np.array([c.verdict.margin for c in self.cells]).reshape(shape)


def safe_operating_area(v_dc_values, v_peak_values, load_points, omega, params,
                        v_rated_peak=120.0):
    """
    Sweep the steady-state criterion.

    Loads are constant impedances synthesized from each ``(P, Q)`` at
    ``v_rated_peak`` and then evaluated at every reference amplitude.
    """
    v_dc_axis = tuple(float(v) for v in v_dc_values)
    v_peak_axis = tuple(float(v) for v in v_peak_values)
    load_axis = tuple((float(P), float(Q)) for P, Q in load_points)
    if not (v_dc_axis and v_peak_axis and load_axis):
        raise InvalidInputError("every SOA axis needs at least one value")
    if min(v_dc_axis) < 0:
        raise InvalidParameterError("v_dc values must be non-negative")
    if min(v_peak_axis) < 0:
        raise InvalidParameterError("reference amplitudes must be non-negative")
    loads = [build_load_from_power(P, Q, v_rated_peak, omega) for P, Q in load_axis]
    # worst case does not depend on v_dc: evaluate once per (v_peak, load)
    worst = {(j, k): steady_state_worst_case(vp, ld, omega, params)
             for j, vp in enumerate(v_peak_axis) for k, ld in enumerate(loads)}
    lc = params.LC
    cells = []
    for v_dc in v_dc_axis:
        for j, vp in enumerate(v_peak_axis):
            for k, (P, Q) in enumerate(load_axis):
                w = worst[j, k]
                cells.append(SoaCell(v_dc, vp, P, Q, w, _verdict(v_dc / lc, w / lc)))
    return SoaGrid(v_dc_axis, v_peak_axis, load_axis, tuple(cells))


@dataclass(frozen=True)
class EnvelopeParams:
    """
    Inputs of the tracking-error envelope.

    ``k`` is the fraction of the full bridge drive that keeps pushing the
    error while the criterion is violated; ``t_0`` and ``delta_t`` delimit
    the violation window and ``J`` flags whether the window is active.
    """

    k: float = CALIBRATED_DRIFT_FRACTION
    delta_t: float = 0.0
    t_0: float = 0.0
    J: int = 0
    H_b: float = 1.0

    def __post_init__(self):
        if not 0 < self.k < 1:
            raise InvalidParameterError("k must lie in (0, 1)")
        if self.delta_t < 0:
            raise InvalidParameterError("delta_t must be non-negative")
        if self.J not in (0, 1):
            raise InvalidParameterError("J must be 0 or 1")
        if not self.H_b > 0:
            raise InvalidParameterError("H_b must be positive")


def _check_band(bound, H_b):
    if bound is None:
        raise InvalidParameterError("a numeric bound is required for the envelope")
    if bound < H_b * (1 - 1e-12):
        raise InfeasibleBandError(f"bound {bound:.6g} below the minimum H_b={H_b:.6g}")


def error_envelope(env, cfg, v_dc, x_at_t0, params, t, *, bound=None):
    """
    Predicted tracking error.

    Inside the window ``[t_0, t_0 + delta_t]`` (when ``J = 1``) the error
    drifts from ``x_at_t0`` with slope ``-k v_dc / (L_f C_f lam)``. Outside
    it only the switching ripple ``(bound/lam) sin(2 pi f_sw t)`` remains.
    """
    bound = cfg.bound if bound is None else bound
    _check_band(bound, env.H_b)
    t = np.asarray(t, dtype=float)
    ripple = bound / cfg.lam * np.sin(2 * math.pi * params.f_sw * t)
    if not env.J:
        return ripple
    in_window = (t >= env.t_0) & (t < env.t_0 + env.delta_t)
    slope = -env.k * v_dc / (params.LC * cfg.lam)
    return np.where(in_window, (t - env.t_0) * slope + x_at_t0, ripple)


def envelope_magnitude(env, cfg, v_dc, x_at_t0, params, t, *, bound=None):
    """
    Bound on ``|x_err|`` implied by :func:`error_envelope`.

    Inside the window the offset and the drift are added in magnitude,
    ``|x_at_t0| + k v_dc (t - t_0) / (L_f C_f lam)``, so the bound grows
    monotonically whatever the sign of the error at onset. Outside the
    window it is the ripple amplitude ``bound/lam``.
    """
    bound = cfg.bound if bound is None else bound
    _check_band(bound, env.H_b)
    t = np.asarray(t, dtype=float)
    ripple = np.full(t.shape, bound / cfg.lam)
    if not env.J:
        return ripple
    in_window = (t >= env.t_0) & (t < env.t_0 + env.delta_t)
    rate = env.k * v_dc / (params.LC * cfg.lam)
    drift = abs(x_at_t0) + (t - env.t_0) * rate
    return np.where(in_window, drift, ripple)


def calibrate_drift_fraction(peak_error, v_dc, lam, delta_t, params):
    """
    ``k`` that makes the drift reach ``peak_error`` at the end of a window
    of length ``delta_t``.
    """
    if delta_t <= 0:
        raise InvalidParameterError("delta_t must be positive")
    k = peak_error * params.LC * lam / (v_dc * delta_t)
    if not 0 < k < 1:
        raise InvalidParameterError(f"calibrated k={k:.3g} outside (0, 1)")
    return k
