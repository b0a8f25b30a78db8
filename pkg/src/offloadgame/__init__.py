"""Nash-equilibrium computation offloading for energy-harvesting mobile
devices sharing heterogeneous edge servers: analytic single-server queue
model, per-device KKT best responses, iterated best-response dynamics, an
event-level validating simulator, and exhaustive audit oracles."""

__version__ = "0.1.0"

from .analytic import (InterferenceCoeffs, PowerReport, ServerLoad,
                       TaskMoments, grad_response_time, interference_coeffs,
                       md_power, response_time_md, response_times,
                       row_context, server_load, task_moments)
from .bestresponse import BestResponse, best_response, golden_section, \
    grid_oracle, t_objective
from .game import GameTrace, MixedStrategy, iterate, mixed_strategy, ne_residual
from .kkt import (KktCandidate, Multipliers, fallback_allocation, grad_p3,
                  quintic_coefficients, real_roots, solve_p3,
                  stationarity_coefficients)
from .model import (LinkParams, MdConfig, MecConfig, ScenarioConfig,
                    SystemConfig, config_violations, make_scenario,
                    sample_channel_gains, solve_transmit_powers,
                    validate_config, with_transmit_powers)
from .queue_sim import SimConfig, SimResult, TwoPointDist, moment_matching, simulate
from .sweeps import SweepSpec, make_sweep_spec, scale_scenario
