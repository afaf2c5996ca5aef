"""Two-phase planning policy: a high-level cross-sector rebalancer feeding
per-sector one-at-a-time rollout planners.

Each step the high level matches every free, non-transiting taxi against the
outstanding requests plus a certainty-equivalence batch of expected future
requests. Cross-sector matches put the taxi "in transit": it walks the
shortest path to the boundary entry point of the destination sector and is
invisible to the sector planners until it arrives, when it rejoins as an
ordinary local taxi. Sector planners run the rollout on their sub-state only,
with moves confined to the sector and scheduled inbound taxis announced as
deterministic future arrivals. With a single sector the whole construction
reduces exactly to global rollout.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .demand import certainty_equivalence_requests
from .matching import AssignmentProblem, min_cost_assignment
from .partition import get_partitions
from .rollout import RolloutConfig, one_at_a_time_control
from .sim import MOVE, NS_CE, FleetState, substream


class PlannerError(Exception):
    pass


class ConflictingControl(PlannerError):
    pass


@dataclass(frozen=True)
class TransitRoute:
    dest: int            # boundary entry node in the destination sector
    path: tuple          # node sequence from the assignment location to dest
    start_clock: int

    @property
    def arrive_clock(self) -> int:
        return self.start_clock + len(self.path) - 1

    def position(self, clock: int) -> int:
        return self.path[clock - self.start_clock]


@dataclass
class HighLevelPlan:
    transit: dict = field(default_factory=dict)  # taxi id -> TransitRoute

    @property
    def high_level_taxis(self):
        return sorted(self.transit)

    def scheduled_hops(self, clock: int, sector_of) -> dict:
        """(time, sector) slice of the schedule: taxi -> node at `clock`."""
        out = {}
        for taxi, route in self.transit.items():
            if route.start_clock <= clock <= route.arrive_clock:
                node = route.position(clock)
                out.setdefault(sector_of(node), {})[taxi] = node
        return out


def high_level_plan(state, graph, model, pspec, t_h, prev: HighLevelPlan,
                    seed) -> HighLevelPlan:
    """Re-balance taxis across sectors against current plus expected demand.

    Previously scheduled transits persist until arrival. Free taxis are
    min-cost matched to the pooled real and certainty-equivalence requests;
    only cross-sector matches generate transit routes (same-sector matches are
    left to the sector planner), and the route targets the boundary entry
    point, not the matched request, which may be a phantom.
    """
    transit = {}
    for taxi, route in prev.transit.items():
        if state.locations[taxi] != route.dest:
            transit[taxi] = route

    free = [(l, state.locations[l]) for l in range(state.m)
            if state.timers[l] == 0 and l not in transit]
    ce_rng = substream(seed, NS_CE, state.clock)
    pool = [state.outstanding[rid] for rid in sorted(state.outstanding)]
    pool += certainty_equivalence_requests(model, state.clock, t_h, ce_rng)
    if not free or not pool:
        return HighLevelPlan(transit)

    dist = graph._dist
    cost = [[dist[loc][r.pickup] for r in pool] for _, loc in free]
    k = min(len(free), len(pool))
    problem = AssignmentProblem(cost, row_ids=[l for l, _ in free],
                                col_ids=list(range(len(pool))))
    matched = min_cost_assignment(problem, epsilon=1.0 / (k + 1))
    for taxi, col in matched.pairs:
        pickup = pool[col].pickup
        loc = state.locations[taxi]
        if graph.sector_of(loc) == graph.sector_of(pickup):
            continue
        dest = graph.next_hop_in_partition(loc, pickup)
        transit[taxi] = TransitRoute(dest=dest, path=tuple(graph.shortest_path(loc, dest)),
                                     start_clock=state.clock)
    return HighLevelPlan(transit)


def split_state(state, graph, exclude):
    """Sector sub-states: local taxis (ascending global id) and the requests
    whose pickup lies in the sector. Returns {sector: (sub-state, global ids)}."""
    by_sector = {}
    for l in range(state.m):
        if l in exclude:
            continue
        k = graph.sector_of(state.locations[l])
        by_sector.setdefault(k, []).append(l)
    out = {}
    for k, ids in by_sector.items():
        outstanding = {rid: req for rid, req in state.outstanding.items()
                       if graph.sector_of(req.pickup) == k}
        sub = FleetState(
            [state.locations[l] for l in ids],
            [state.timers[l] for l in ids],
            outstanding,
            {i: state.in_service[l] for i, l in enumerate(ids) if l in state.in_service},
            state.clock,
        )
        out[k] = (sub, ids)
    return out


def low_level_plan(substate, inbound, graph, model, cfg: RolloutConfig, seed,
                   taxi_keys, sector_nodes):
    """Sector-local one-at-a-time rollout.

    Candidate moves leaving the sector are excluded; `inbound` announces
    scheduled transit arrivals as future free taxis for the lookahead.
    """
    if substate.m == 0:
        return []
    return one_at_a_time_control(substate, graph, model, cfg, seed,
                                 allowed_nodes=sector_nodes, inbound=inbound,
                                 taxi_keys=taxi_keys)


def two_phase_control(state, graph, model, pspec, cfg: RolloutConfig,
                      plan: HighLevelPlan, seed, sector_jobs: int = 1,
                      sector_timing=None):
    """One planning step: high-level rebalance, then all sector planners, then
    merge sector controls with the transit taxis' scheduled hops.

    When `sector_timing` is a list, one (t, sector, plan_ms) row is appended
    per sector planner call.
    """
    plan = high_level_plan(state, graph, model, pspec, cfg.t_h, plan, seed)

    actions = [None] * state.m
    for taxi, route in plan.transit.items():
        idx = state.clock - route.start_clock
        actions[taxi] = (MOVE, route.path[idx + 1])

    subs = split_state(state, graph, exclude=plan.transit)
    sector_nodes = {k: frozenset(pspec.nodes_of(k)) for k in subs}
    inbound_of = {
        k: tuple(sorted((r.arrive_clock, r.dest) for r in plan.transit.values()
                        if pspec.sector_of(r.dest) == k))
        for k in subs
    }

    def plan_sector(k):
        sub, ids = subs[k]
        t0 = time.perf_counter()
        ctrl = low_level_plan(sub, inbound_of[k], graph, model, cfg, seed,
                              taxi_keys=ids, sector_nodes=sector_nodes[k])
        return ctrl, (time.perf_counter() - t0) * 1000.0

    sectors = sorted(subs)
    if sector_jobs > 1 and len(sectors) > 1:
        with ThreadPoolExecutor(max_workers=sector_jobs) as pool:
            timed = list(pool.map(plan_sector, sectors))
    else:
        timed = [plan_sector(k) for k in sectors]
    results = [ctrl for ctrl, _ in timed]
    if sector_timing is not None:
        for k, (_, ms) in zip(sectors, timed):
            sector_timing.append((state.clock, k, ms))

    for k, ctrl in zip(sectors, results):
        _, ids = subs[k]
        for act, gid in zip(ctrl, ids):
            if actions[gid] is not None:
                raise ConflictingControl(f"taxi {gid} received two controls")
            actions[gid] = act
    assert all(a is not None for a in actions)
    return actions, plan


class TwoPhasePolicy:
    """Two-phase planner as an episode policy.

    Partitioning runs once (it is deterministic per graph/model/K) and the
    transit plan is carried across steps within an episode.
    """

    name = "two-phase"

    def __init__(self, graph, model, m: int, m_lim: int, cfg: RolloutConfig,
                 sector_jobs: int = 1):
        self.K = math.ceil(m / m_lim)
        self.pspec = get_partitions(graph, model, m_lim, self.K)
        self.graph = graph.with_sectors(self.pspec.assignment)
        self.model = model
        self.cfg = cfg
        self.sector_jobs = sector_jobs
        self._seed = None
        self.plan = HighLevelPlan()
        self.sector_timing = []

    def reset(self, seed):
        self._seed = seed
        self.plan = HighLevelPlan()
        self.sector_timing = []

    def control(self, state):
        ctrl, self.plan = two_phase_control(state, self.graph, self.model,
                                            self.pspec, self.cfg, self.plan,
                                            self._seed, self.sector_jobs,
                                            sector_timing=self.sector_timing)
        return ctrl, None


def run_two_phase(graph, model, m: int, T: int, m_lim: int, cfg: RolloutConfig,
                  seed: int, sector_jobs: int = 1):
    """Convenience wrapper: build the two-phase policy and run one episode."""
    from .sim import run_episode

    policy = TwoPhasePolicy(graph, model, m, m_lim, cfg, sector_jobs=sector_jobs)
    return run_episode(policy.graph, model, policy, m, T, seed)
