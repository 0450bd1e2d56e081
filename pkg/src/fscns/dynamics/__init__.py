"""Time evolution of density, velocity and surface elevation."""
from __future__ import annotations

from .closure import apply_dynamic_bc, stress_residual
from .physics import (FlowState, Forcing, PhysParams, Tendencies, ale_speed, kinematic_rate,
                      pressure, rhs, sound_speed)
from .stepper import (StepperConfig, Stepper, advance, cfl_dt, check_health,
                      euler_reference_run, integrate)

__all__ = [
    "FlowState", "Forcing", "PhysParams", "Tendencies", "StepperConfig", "Stepper",
    "advance", "ale_speed", "apply_dynamic_bc", "cfl_dt", "check_health",
    "euler_reference_run", "integrate", "kinematic_rate", "pressure", "rhs",
    "sound_speed", "stress_residual",
]
