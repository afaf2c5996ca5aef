"""fleetroll: discrete-time taxi fleet simulation, dispatch policies,
two-phase multiagent rollout planning, and fleet-size stability analysis."""

from .graph import CityGraph, build_graph, grid_graph, load_graph, save_graph
from .demand import (DemandModel, Request, estimate_from_trips, expectation_terms,
                     sample_arrivals, sample_request, certainty_equivalence_requests,
                     synthetic_model)
from .matching import AssignmentProblem, Assignment, min_cost_assignment, brute_force_assignment
from .sim import FleetState, EpisodeTrace, transition, stage_cost, run_episode
from .policies import (GreedyPolicy, IARAPolicy, IACommitPolicy, RandomIAPolicy,
                       service_distance)
from .rollout import RolloutConfig, RolloutPolicy, one_at_a_time_control, rollout_policy_cost
from .partition import PartitionSpec, get_partitions
from .planner import TwoPhasePolicy, run_two_phase, two_phase_control, high_level_plan
from .stability import (StabilityReport, compute_bounds, bounds_from_expectations,
                        wasserstein_discrete, empirical_stability)

__version__ = "0.1.0"
