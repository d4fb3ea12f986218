"""Device activity detection in multi-cell massive MIMO by coordinate descent.

Quick use::

    from covact import ScenarioConfig, generate, SolverState, active_set_cd
    scn, truth, obs = generate(ScenarioConfig(N=100, K=10, L=20, M=64))
    a, report = active_set_cd(SolverState.from_scenario(scn, obs))
"""

from ._backend import available as available_backends
from .errors import (CovactError, DimensionMismatch, DomainViolation, NotPositiveDefinite,
                     RootFindingFailure, ScenarioIOError, SchemaVersionMismatch, SingularUpdate,
                     UnsupportedLayout)
from .metrics import decide, error_rates, roc_sweep
from .mle import SolverState, gradient, objective, optimality_residual
from .scenario import ScenarioConfig, generate, load_scenario, save_scenario
from .solvers import DeltaSchedule, SolverConfig, SolverReport, Termination, active_set_cd, random_cd
from .subproblem import SubproblemInstance, solve_subproblem

__version__ = "0.1.0"
