"""Sensorless sliding-mode and multimodel control of a dual-axis sun tracker.

The package simulates a permanent-magnet stepper drive in the rotor frame,
closes the loop with either a second-order sliding-mode controller or a
fused bank of PID-surface sliding controllers, estimates speed with a
sliding-mode observer, and generates sun-following references.
"""

from .errors import DomainError, ScenarioError, SimulationAborted
from .harness import (
    AxisMode,
    ControllerKind,
    DisturbanceConfig,
    EnergyConfig,
    InitialState,
    Scenario,
    SimMetrics,
    SimTrace,
    compare,
    metrics,
    run,
)
from .integrator import IntegratorConfig, Method
from .motor_plant import MotorParams, MotorState
from .multimodel import PidSurfaceConfig, SmmmcConfig, Weighting
from .observer import ObserverConfig, ObserverGains, ObserverMode
from .smc_controller import SurfaceConfig, SurfaceKind
from .sun_reference import Axis, Ramp, ReferenceProfile, SolarDay, Step

__version__ = "0.1.0"

__all__ = [
    "Axis", "AxisMode", "ControllerKind", "DisturbanceConfig", "DomainError", "EnergyConfig",
    "InitialState", "IntegratorConfig", "Method", "MotorParams", "MotorState", "ObserverConfig",
    "ObserverGains", "ObserverMode", "PidSurfaceConfig", "Ramp", "ReferenceProfile", "Scenario",
    "ScenarioError", "SimMetrics", "SimTrace", "SimulationAborted", "SmmmcConfig", "SolarDay", "Step",
    "SurfaceConfig", "SurfaceKind", "Weighting", "compare", "metrics", "run",
]
