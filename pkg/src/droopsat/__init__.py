"""Minimax MPC energy management for droop-controlled islanded microgrids."""
from .dispatch import (KERNEL, RhoBounds, augmented_total_power, dispatch_step, rho_bounds,
                       simulate_horizon, solve_rho)
from .harness import (closed_loop_simulate, compare_controllers, gen_synthetic_scenario,
                      load_scenario, mpc_step)
from .milp import MilpInstance, MilpSolution
from .model import (ControlPlan, CostWeights, MicrogridParams, Scenario, StepOutcome,
                    compact_params, dynamic_storage_limits, horizon_cost, saturate, stage_cost,
                    table1_params, validate_scenario)
from .mpc import ControllerConfig, OpenLoopSolution, build_problem, derive_big_m, extract_solution
from .solver import SolveOptions, register_backend, solve_lp, solve_milp
from .verify import run_verification_suite

__version__ = "0.1.0"
