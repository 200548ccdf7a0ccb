"""Controllability limits of a single-phase grid-forming inverter."""
from .boundary import (BoundaryVerdict, EnvelopeParams, SoaGrid, error_envelope,
                       instantaneous_criterion, min_bound_estimate, safe_operating_area,
                       steady_state_worst_case)
from .circuit import (CircuitParams, CircuitState, LoadSpec, SwitchCommand,
                      build_load_from_power, equivalent_control_input, state_derivatives)
from .controller import (ControllerConfig, ReferenceSignal, hysteresis_decision,
                         reconstruct_error, s_dot_decomposition, sliding_surface)
from .simulation import Event, Metrics, Scenario, TimeSeries, run, step, violation_intervals

__version__ = "0.1.0"

__all__ = [
    "BoundaryVerdict", "CircuitParams", "CircuitState", "ControllerConfig", "EnvelopeParams",
    "Event", "LoadSpec", "Metrics", "ReferenceSignal", "Scenario", "SoaGrid", "SwitchCommand",
    "TimeSeries", "build_load_from_power", "equivalent_control_input", "error_envelope",
    "hysteresis_decision", "instantaneous_criterion", "min_bound_estimate", "reconstruct_error",
    "run", "s_dot_decomposition", "safe_operating_area", "sliding_surface", "state_derivatives",
    "step", "steady_state_worst_case", "violation_intervals",
]
