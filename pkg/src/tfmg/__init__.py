"""Multigrid and preconditioned Krylov solvers for tempered fractional diffusion."""

from .multigrid import CycleConfig, build_hierarchy, mg_solve, v_cycle
from .krylov import build_preconditioner, cg, gmres
from .problems import ExperimentPlan, SolverConfig, example, run, run_experiment, table_plans
from .stencil import cn_operator, make_params, operator_2d, steady_operator
from .symbol import f_symbol, omega_star, smoothing_bound

__version__ = "0.1.0"
