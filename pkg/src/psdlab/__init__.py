"""psdlab: curves on the three-body shape sphere, classical and pilot-wave."""

__version__ = "0.1.0"

from .classical import CurveState, IntegrationOptions, ShapePotential, classical_rhs, integrate_classical
from .complexity import arrow_of_time, complexity, detect_kepler_pairs
from .ephemeris import reconstruct_scale, reconstruct_time
from .oracle import newtonian_oracle
from .quantum import (
    QuantumCurveState,
    guidance_residual,
    integrate_quantum,
    quantum_potential,
    quantum_rhs,
    restrict_wavefunction,
    subsystem_diagnostics,
)
from .shape_space import Configuration, Direction, ShapeMetric, ShapePoint, arc_length_element, project, unit_tangent
from .spectral import ShapeField, SphereGrid, laplace_beltrami
from .trajectory import TrajectoryRecord, read_trajectory, write_trajectory

__all__ = [
    "arc_length_element",
    "arrow_of_time",
    "classical_rhs",
    "complexity",
    "Configuration",
    "CurveState",
    "detect_kepler_pairs",
    "Direction",
    "guidance_residual",
    "integrate_classical",
    "integrate_quantum",
    "IntegrationOptions",
    "laplace_beltrami",
    "newtonian_oracle",
    "project",
    "quantum_potential",
    "quantum_rhs",
    "QuantumCurveState",
    "read_trajectory",
    "reconstruct_scale",
    "reconstruct_time",
    "restrict_wavefunction",
    "ShapeField",
    "ShapeMetric",
    "ShapePoint",
    "ShapePotential",
    "SphereGrid",
    "subsystem_diagnostics",
    "TrajectoryRecord",
    "unit_tangent",
    "write_trajectory",
]
