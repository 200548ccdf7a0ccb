"""Sliding-surface voltage tracking with a sampled hysteresis relay."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.signal import lfilter

from .circuit import SwitchCommand, equivalent_control_input, state_derivatives
from .errors import InvalidInputError, InvalidParameterError

DEFAULT_T_SAMPLE = 1.5e-6
DEFAULT_BOUND_FACTOR = 2.0


@dataclass(frozen=True)
class ControllerConfig:
    """
    Relay controller settings.

    Parameters
    ----------
    lam : float
        Surface pole (1/s).
    bound : float or None
        Hysteresis half-width on ``s`` (V/s). ``None`` lets the simulator
        set it to ``bound_factor * H_b`` for every operating point.
    T_sample : float
        Controller sampling period (s).
    T_delay : float
        Actuation delay (s).
    bound_factor : float
        Multiple of ``H_b`` used when ``bound`` is None.
    """

    lam: float
    bound: float | None = None
    T_sample: float = DEFAULT_T_SAMPLE
    T_delay: float = 0.0
    bound_factor: float = DEFAULT_BOUND_FACTOR

    def __post_init__(self):
        for name in ("lam", "T_sample", "T_delay", "bound_factor"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")
        if self.lam <= 0:
            raise InvalidParameterError("lam must be positive")
        if self.T_sample <= 0:
            raise InvalidParameterError("T_sample must be positive")
        if self.T_delay < 0:
            raise InvalidParameterError("T_delay must be non-negative")
        if self.bound is not None and not (math.isfinite(self.bound) and self.bound > 0):
            raise InvalidParameterError("bound must be positive")
        if self.bound_factor < 1:
            raise InvalidParameterError("bound_factor below 1 would undercut H_b")

    @classmethod
    def from_circuit(cls, params, **kwargs):
        """Use ``lam = f_sw / 10``."""
        return cls(lam=params.f_sw / 10.0, **kwargs)


@dataclass(frozen=True)
class ReferenceSignal:
    """Sinusoidal voltage reference ``amplitude * sin(omega t + phase)``."""

    amplitude: float
    omega: float
    phase: float = 0.0

    def value(self, t):
        return self.amplitude * np.sin(self.omega * t + self.phase)

    def rate(self, t):
        return self.amplitude * self.omega * np.cos(self.omega * t + self.phase)

    def acceleration(self, t):
        return -self.omega ** 2 * self.value(t)


@dataclass(frozen=True)
class TrackingSample:
    x: float
    x_dot: float
    x_err: float
    x_err_dot: float
    s: float
    lam: float

    def __post_init__(self):
        expected = self.x_err_dot + self.lam * self.x_err
        if not math.isclose(self.s, expected, rel_tol=1e-12, abs_tol=1e-9):
            raise InvalidParameterError(f"s={self.s} inconsistent with error terms ({expected})")

    @classmethod
    def measure(cls, x, x_dot, ref, t, lam):
        x_err = x - float(ref.value(t))
        x_err_dot = x_dot - float(ref.rate(t))
        return cls(x, x_dot, x_err, x_err_dot, x_err_dot + lam * x_err, lam)


def sliding_surface(x, x_dot, ref, t, lam):
    """``s = (x' - x_d') + lam (x - x_d)`` evaluated at time ``t``."""
    return (x_dot - ref.rate(t)) + lam * (x - ref.value(t))


def hysteresis_decision(s, bound, prev):
    """
    Relay on the sliding variable.

    Above the band the bridge goes negative to pull ``s`` down, below it
    goes positive; inside (including exactly on the edge) it holds.
    """
    if s > bound:
        return -1
    if s < -bound:
        return 1
    return int(SwitchCommand(prev))


class SDotTerms(NamedTuple):
    """Addends of ``s' = f - x_d'' + lam x_err' + u``."""

    f_term: float
    feed_term: float
    u_term: float

    @property
    def total(self):
        return self.f_term + self.feed_term + self.u_term


def s_dot_decomposition(state, load, ref, cfg, params, cmd):
    d = state_derivatives(state, cmd, params, load)
    f_term = -state.u_o / params.LC - d.d_i_o / params.C_f
    x_err_dot = d.d_u_o - float(ref.rate(state.t))
    feed_term = -float(ref.acceleration(state.t)) + cfg.lam * x_err_dot
    u_term = equivalent_control_input(cmd, state.v_dc, params)
    return SDotTerms(float(f_term), float(feed_term), float(u_term))


def reconstruct_error(s_series, dt, x_err0, lam):
    """
    Rebuild the tracking error from samples of ``s``.

    Integrates ``x_err' = -lam x_err + s`` with the exponentially weighted
    trapezoid rule, recursively so that long horizons do not overflow
    ``exp(lam t)``.

    Returns
    -------
    ndarray
        ``x_err`` at every sample of ``s_series`` (first entry ``x_err0``).
    """
    s = np.asarray(s_series, dtype=float)
    if s.size == 0:
        raise InvalidInputError("empty s series")
    if lam <= 0 or dt <= 0:
        raise InvalidParameterError("lam and dt must be positive")
    decay = math.exp(-lam * dt)
    half = 0.5 * dt
    # x[k] = decay*x[k-1] + half*(decay*s[k-1] + s[k]), seeded so x[0] = x_err0
    zi = [float(x_err0) - half * s[0]]
    out, _ = lfilter([half, half * decay], [1.0, -decay], s, zi=zi)
    return out
