"""Numerical Aharonov-Bohm experiments: gauge fields, broken-ray beams and a gauge-covariant Schrodinger solver."""

from .core import (
    Contour,
    ConvexPolygon,
    Disk,
    Domain,
    GridField,
    GridSpec,
    Obstacle,
    PhysicalConstants,
    Segment,
    mollifier,
    signed_distance,
    winding_number,
)
from .errors import ABWaveError, NumericalError, ValidationError
from .gauge import (
    FluxTerm,
    GaugeField,
    GaugeTransform,
    apply_gauge,
    canonical_flux_potential,
    combine,
    flux_decomposition,
    is_gauge_equivalent,
    line_integral_flux,
)
from .rays import BrokenRay, RayTube, reflect_direction, trace_broken_ray
from .beams import (
    BeamSpec,
    assemble_wN,
    beam_solution,
    broken_expansion,
    kannai_quadrature,
    kannai_stationary_phase,
    straight_expansion,
    wave_residual_gN,
)
from .solver import (
    Dirichlet,
    DirichletPlusAbsorbingRim,
    MovingDomainSchedule,
    SolverConfig,
    build_link_phases,
    evolve,
    evolve_moving_domain,
)
from .experiments import (
    InterferenceReport,
    MagneticABSpec,
    electric_ab,
    estimate_flux,
    magnetic_ab_broken,
    magnetic_ab_single,
    madelung_residual,
    mirror_interferometer,
)

__version__ = "0.1.0"
