"""Contouring control for biaxial positioning stages.

Two receding-horizon contouring controllers over a shared structured QP
solver: a global-frame formulation with a virtual path position, and a
curvilinear one that measures progress by projection.  The harness
simulates either controller against the double-integrator plant and the
``mpcc`` command drives scenario files end to end.
"""

from .config import (ConfigError, RunConfig, load_config, parse_config,
                     serialize_config)
from .geometry import (ParametricPath, PathPoint, build_path, path_from_csv,
                       path_to_csv, sigma_path)
from .global_mpcc import (ControlStep, GlobalMpccController, GlobalWeights,
                          assemble_global_qp, error_terms, linearize_stage,
                          linearize_stages)
from .harness import (RunMetrics, Scenario, Trace, benchmark_solvers,
                      compute_metrics, make_controller, make_path,
                      run_closed_loop)
from .local_mpcc import (LocalMpccController, LocalWeights, assemble_local_qp,
                         local_stage, local_stages, trust_region_bounds)
from .plant import Limits, MachineInput, MachineState, check_feasible, discretize
from .qp import (IpmSettings, QpSolution, StageLtv, StructuredQp, condense,
                 solve_condensed, solve_reference, solve_structured)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ControlStep",
    "GlobalMpccController",
    "GlobalWeights",
    "IpmSettings",
    "Limits",
    "LocalMpccController",
    "LocalWeights",
    "MachineInput",
    "MachineState",
    "ParametricPath",
    "PathPoint",
    "QpSolution",
    "RunConfig",
    "RunMetrics",
    "Scenario",
    "StageLtv",
    "StructuredQp",
    "Trace",
    "assemble_global_qp",
    "assemble_local_qp",
    "benchmark_solvers",
    "build_path",
    "check_feasible",
    "compute_metrics",
    "condense",
    "discretize",
    "error_terms",
    "linearize_stage",
    "linearize_stages",
    "load_config",
    "local_stage",
    "local_stages",
    "make_controller",
    "make_path",
    "parse_config",
    "path_from_csv",
    "path_to_csv",
    "run_closed_loop",
    "serialize_config",
    "sigma_path",
    "solve_condensed",
    "solve_reference",
    "solve_structured",
    "trust_region_bounds",
    "__version__",
]
