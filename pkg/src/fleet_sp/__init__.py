"""Car-sharing fleet rebalancing under demand uncertainty.

Pipeline: ingest trip records -> fit demand densities -> sample scenarios
-> build deterministic / two-stage stochastic models -> solve (extensive
form or Benders decomposition on the built-in LP/MIP core) -> evaluate
out of sample.
"""

from .benders import BendersState, Cut, run, solve_subproblem
from .density import (FAMILIES, DensityModel, KdeModel, ParamModel,
                      ScenarioSet, kde_fit, kde_pdf, kde_sample,
                      make_scenarios, parametric_fit, parametric_sample,
                      silverman_bandwidth)
from .ingest import (DemandSeries, TripRecord, aggregate_daily_demand,
                     parse_trips, split_train_test, top_k_locations)
from .lpcore import (DEFAULT_TOLERANCES, LinearProgram, LpOutcome, MipOutcome,
                     SolverError, Tolerances, solve_lp, solve_mip)
from .model import (AS_WRITTEN, FLOW_CORRECTED, VARIANTS,
                    FirstStageEvaluation, InfeasibleModelError, Instance,
                    ModelError, Solution, build_deterministic, build_extensive,
                    evaluate_first_stage, extract_solution)
from .saa import (SaaConfig, SaaReport, child_seed, evaluate_out_of_sample,
                  run_saa)

__version__ = "0.1.0"

__all__ = [
    "AS_WRITTEN", "BendersState", "Cut", "DEFAULT_TOLERANCES", "DemandSeries",
    "DensityModel", "FAMILIES", "FLOW_CORRECTED", "FirstStageEvaluation",
    "InfeasibleModelError", "Instance", "KdeModel", "LinearProgram",
    "LpOutcome", "MipOutcome", "ModelError", "ParamModel", "SaaConfig",
    "SaaReport", "ScenarioSet", "Solution", "SolverError", "Tolerances",
    "TripRecord", "VARIANTS", "aggregate_daily_demand", "build_deterministic",
    "build_extensive", "child_seed", "evaluate_first_stage",
    "evaluate_out_of_sample", "extract_solution", "kde_fit", "kde_pdf",
    "kde_sample", "make_scenarios", "parametric_fit", "parametric_sample",
    "parse_trips", "run", "run_saa", "silverman_bandwidth", "solve_lp",
    "solve_mip", "solve_subproblem", "split_train_test", "top_k_locations",
]
