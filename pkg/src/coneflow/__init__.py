"""Ricci flow smoothing of cone points on surfaces, in a radial chart.

Model geometries and discrete curvature (:mod:`.metric`), the capped
truncations of a cone (:mod:`.truncation`), the blunt-cone upper barrier
(:mod:`.barrier`), the flow integrator with comparison tools
(:mod:`.solver`) and the experiment drivers (:mod:`.experiments`).
"""
from .errors import (BarrierWindowError, ConeFlowError, ConfigError,
                     DomainError, ParameterError)
from .metric import (ConeData, CurvatureProfile, Profile, RadialGrid, area,
                     circumference, cone_angle, eval_flat_cone,
                     eval_hyperbolic_cone, eval_sphere, flat_cone,
                     gauss_curvature, hyperbolic_cone, sample_cone)
from .truncation import (TruncationSequence, build_sequence,
                         curvature_bound_check, psi, psi_d1, psi_d2, truncate)
from .barrier import (BarrierSpec, blunt_cone, calibrate_C, check_barrier_pde,
                      lambda_bar, sup_bound, verify_flow_under_barrier)
from .solver import (BoundarySpec, FlowResult, SolverParams, compare_flows,
                     curvature_floor, evolve, parabolic_rescale, residual)

__version__ = "0.1.0"
