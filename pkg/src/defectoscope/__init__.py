"""Minimization of manifold-constrained elastic energies on grids, with
analysis of the resulting defect structures.

Fields take values in a sphere quotient S^q/G (real projective plane,
lens-like Z4 quotients, or the sphere itself) sampled on a 2D/3D box or
ball grid. The package minimizes integral energies of |grad u| with a
degenerate-convex modulus, locates non-orientable line defects through
plaquette holonomy, measures point defects through cell degrees, and
checks the discrete almost-monotonicity of scaled energy densities.

Env vars: DEFECTOSCOPE_BACKEND selects the kernel backend (auto /
compiled / numpy); DEFECTOSCOPE_THREADS caps library-level parallelism
(set before first import to reach the BLAS thread pools).
"""

import os as _os

_threads = _os.environ.get("DEFECTOSCOPE_THREADS")
if _threads:
    # best effort: effective only if the BLAS has not started its pool yet
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

__version__ = "0.1.0"

from ._kernels import backend_name
from .elastic import (HypothesisReport, PowerModulus, TabulatedModulus,
                      check_hypotheses)
from .fields import (BoundaryData, Field, GridSpec, generate,
                     homogeneous_extension, perturb, restrict_boundary,
                     smooth_random)
from .manifolds import (BUILTIN_TARGETS, DeckGroup, QuotientTarget,
                        canonical, covering_map, orbit_distance,
                        project_to_target, q_tensor, target_by_name)
from .minimizer import (MinimizeOptions, MinimizeResult, PenalizedOptions,
                        discrete_energy, energy_gradient, minimize,
                        minimize_penalized, stationarity_residual)
from .lifting import (NonOrientableRegionError, ObstructionChain,
                      ResolutionError, edge_transport, edge_transports,
                      lift_region, obstruction_chain, plaquette_holonomy)
from .defects import (DefectReport, MonotonicityResult,
                      UnderResolvedCellError, cell_degree, classify_defects,
                      density_liminf, dyadic_radii,
                      hedgehog_density_constant, jacobian_charges,
                      monotonicity_check, scaled_density,
                      singular_set_estimate)
from .io import (dumps_canonical, read_field, report_payload, write_field,
                 write_json, write_vtk_defects, write_vtk_field)
from .cli import ConfigError, RunConfig, parse_config, run_cli

__all__ = [
    "BUILTIN_TARGETS", "BoundaryData", "ConfigError", "DeckGroup",
    "DefectReport", "Field", "GridSpec", "HypothesisReport",
    "MinimizeOptions", "MinimizeResult", "MonotonicityResult",
    "NonOrientableRegionError", "ObstructionChain", "PenalizedOptions",
    "PowerModulus", "QuotientTarget", "ResolutionError", "RunConfig",
    "TabulatedModulus", "UnderResolvedCellError", "backend_name",
    "canonical", "cell_degree", "check_hypotheses", "classify_defects",
    "covering_map", "density_liminf", "discrete_energy",
    "dumps_canonical", "dyadic_radii", "edge_transport",
    "edge_transports", "energy_gradient", "generate",
    "hedgehog_density_constant", "homogeneous_extension",
    "jacobian_charges", "lift_region", "minimize", "minimize_penalized",
    "monotonicity_check", "obstruction_chain", "orbit_distance",
    "parse_config", "perturb", "plaquette_holonomy", "project_to_target",
    "q_tensor", "read_field", "report_payload", "restrict_boundary",
    "run_cli", "scaled_density", "singular_set_estimate", "smooth_random",
    "stationarity_residual", "target_by_name", "write_field",
    "write_json", "write_vtk_defects", "write_vtk_field", "__version__",
]
