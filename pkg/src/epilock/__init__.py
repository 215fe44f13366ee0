"""epilock: minimum-cost stabilising lockdowns for networked epidemics.

Builds infection-flow networks from travel and population data, computes
the cheapest per-location activity reduction that forces infections to
decay at a prescribed exponential rate (matrix balancing, with a
constrained covering fallback), and simulates the resulting policies
against cost-matched benchmarks.
"""

from .balancing import (BalancingResult, SolveReport, StabilityScalingInstance,
                        balance, check_high_spread, solve, solve_unconstrained,
                        to_stability_scaling)
from .constrained import CoveringInstance, solve_constrained, to_covering
from .errors import *  # noqa: F401,F403
from .ingest import Bundle, RawCountyTables, build_tau, initial_state, load_manifest
from .model import (COVID, SIR, SIS, CostKind, DiseaseParams, FlowFactors,
                    LockdownPolicy, NetworkData, TravelMatrix, apply_lockdown,
                    assemble_linearization, build_flow_matrix, lockdown_cost)
from .presets import HALVING_30_DAYS, PRESETS, get_preset
from .simulate import (EpidemicState, PolicySpec, Trajectory, efficiency,
                       grid_search_two_param, match_cost_bounded_decline,
                       match_cost_random, match_cost_uniform, simulate,
                       step_rk4, uniform_decay_matched)
from .spectral import (PerronPair, alpha_to_r, b1, calibrate_beta, growth_rate,
                       is_stabilizing, perron, perron_left, r_to_alpha,
                       reproduction_number, strongly_connected)

__version__ = "0.1.0"
