"""Dispatch base policies: greedy, random instantaneous assignment,
instantaneous assignment with commitment, and instantaneous assignment with
reassignment (IA-RA), plus the per-request service-distance metric.

Each policy maps a fleet state to one joint control. The matching-based
policies report their request->taxi pairing alongside the control so the
episode runner can record (re)assignment events for service distances.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .matching import auction_match
from .sim import MOVE, PICKUP, STAY, forced_hop_action, substream, NS_POLICY


def _toward(graph, loc, req):
    """Pick up when co-located, otherwise one hop toward the pickup."""
    if loc == req.pickup:
        return (PICKUP, req.id)
    return (MOVE, graph.next_hop(loc, req.pickup))


def _match_free_to_requests(graph, free, requests):
    """Min-cost matching of free taxis to requests on approach distance.

    free: list of (taxi index, node); requests: list of Request. Returns
    {taxi index: Request}. Distances are integers, so the auction epsilon
    1/(k+1) makes every per-step matching exactly optimal.
    """
    if not free or not requests:
        return {}
    dist = graph._dist
    eps = 1.0 / (min(len(free), len(requests)) + 1)
    if len(free) <= len(requests):
        cost = [[dist[loc][r.pickup] for r in requests] for _, loc in free]
        cols = auction_match(cost, eps)
        return {free[i][0]: requests[j] for i, j in enumerate(cols)}
    cost = [[dist[loc][r.pickup] for _, loc in free] for r in requests]
    cols = auction_match(cost, eps)
    return {free[j][0]: requests[i] for i, j in enumerate(cols)}


def greedy_control(state, graph):
    """Every free taxi independently chases its nearest outstanding request.

    No coordination: several taxis may converge on one request. Ties go to the
    smallest request id; a co-located request already claimed by a
    lower-indexed taxi this step leaves the later taxi in place.
    """
    requests = [state.outstanding[rid] for rid in sorted(state.outstanding)]
    dist = graph._dist
    control = []
    claimed = set()
    for l in range(state.m):
        if state.timers[l] > 0:
            control.append(forced_hop_action(state, graph, l))
            continue
        if not requests:
            control.append((STAY,))
            continue
        loc = state.locations[l]
        drow = dist[loc]
        best = min(requests, key=lambda r: (drow[r.pickup], r.id))
        if drow[best.pickup] == 0:
            if best.id in claimed:
                control.append((STAY,))
            else:
                claimed.add(best.id)
                control.append((PICKUP, best.id))
        else:
            control.append((MOVE, graph.next_hop(loc, best.pickup)))
    return control, {}


def ia_ra_control(state, graph):
    """Instantaneous assignment with reassignment: re-match from scratch.

    All free taxis vs all outstanding requests each step; matched taxis move
    one hop toward (or pick up) their request, unmatched free taxis stay.
    """
    requests = [state.outstanding[rid] for rid in sorted(state.outstanding)]
    free = [(l, state.locations[l]) for l in range(state.m) if state.timers[l] == 0]
    matched = _match_free_to_requests(graph, free, requests)
    control = []
    for l in range(state.m):
        if state.timers[l] > 0:
            control.append(forced_hop_action(state, graph, l))
        elif l in matched:
            control.append(_toward(graph, state.locations[l], matched[l]))
        else:
            control.append((STAY,))
    assignments = {req.id: taxi for taxi, req in matched.items()}
    return control, assignments


def ia_commit_control(state, graph, memory):
    """Instantaneous assignment with commitment to the initial pairing.

    memory maps taxi -> request id and persists across steps; a pair survives
    until pickup, at which point the taxi is occupied and the slot frees up.
    Only uncommitted free taxis and unassigned requests enter each step's
    fresh matching.
    """
    for l in [l for l, rid in memory.items() if rid not in state.outstanding]:
        del memory[l]  # picked up: released
    taken = set(memory.values())
    requests = [state.outstanding[rid] for rid in sorted(state.outstanding)
                if rid not in taken]
    free = [(l, state.locations[l]) for l in range(state.m)
            if state.timers[l] == 0 and l not in memory]
    for taxi, req in _match_free_to_requests(graph, free, requests).items():
        memory[taxi] = req.id
    control = []
    for l in range(state.m):
        if state.timers[l] > 0:
            control.append(forced_hop_action(state, graph, l))
        elif l in memory:
            control.append(_toward(graph, state.locations[l], state.outstanding[memory[l]]))
        else:
            control.append((STAY,))
    assignments = {rid: taxi for taxi, rid in memory.items()}
    return control, assignments


def random_ia_control(state, graph, rng, memory):
    """Random instantaneous assignment: requests go to uniformly random free
    taxis, and a taxi stays bound to its request until the dropoff completes.

    Unassigned taxis do not move. memory maps taxi -> request id and holds
    through the whole service (approach and trip).
    """
    for l in list(memory):
        rid = memory[l]
        if rid in state.outstanding:
            continue
        serving = state.in_service.get(l)
        if serving is None or serving[0] != rid:
            del memory[l]  # dropoff complete (or zero-length trip): released
    taken = set(memory.values())
    pool = sorted(l for l in range(state.m)
                  if state.timers[l] == 0 and l not in memory)
    for rid in sorted(state.outstanding):
        if rid in taken:
            continue
        if not pool:
            break
        pick = int(rng.integers(len(pool)))
        memory[pool.pop(pick)] = rid
    control = []
    for l in range(state.m):
        if state.timers[l] > 0:
            control.append(forced_hop_action(state, graph, l))
        elif l in memory:
            control.append(_toward(graph, state.locations[l], state.outstanding[memory[l]]))
        else:
            control.append((STAY,))
    assignments = {rid: taxi for taxi, rid in memory.items()
                   if rid in state.outstanding}
    return control, assignments


class GreedyPolicy:
    name = "greedy"

    def __init__(self, graph):
        self.graph = graph

    def reset(self, seed):
        pass

    def control(self, state):
        return greedy_control(state, self.graph)


class IARAPolicy:
    name = "ia-ra"

    def __init__(self, graph):
        self.graph = graph

    def reset(self, seed):
        pass

    def control(self, state):
        return ia_ra_control(state, self.graph)


class IACommitPolicy:
    name = "ia-commit"

    def __init__(self, graph):
        self.graph = graph
        self.memory = {}

    def reset(self, seed):
        self.memory = {}

    def control(self, state):
        return ia_commit_control(state, self.graph, self.memory)


class RandomIAPolicy:
    name = "random-ia"

    def __init__(self, graph):
        self.graph = graph
        self.memory = {}
        self.rng = None

    def reset(self, seed):
        self.memory = {}
        self.rng = substream(seed, NS_POLICY)

    def control(self, state):
        return random_ia_control(state, self.graph, self.rng, self.memory)


@dataclass
class ServiceDistanceReport:
    total: int
    per_request: dict = field(default_factory=dict)
    unassigned: list = field(default_factory=list)


def service_distance(trace, graph) -> ServiceDistanceReport:
    """Total service distance: for each request that was ever assigned, the
    distance from the finally-assigned taxi's location (at the moment that
    assignment was made) to the pickup, plus the trip length.

    Requests that never received an assignment are excluded from the total and
    listed separately.
    """
    total = 0
    per_request = {}
    unassigned = []
    for rid in sorted(trace.request_info):
        req = trace.request_info[rid]
        events = trace.assignment_events.get(rid)
        if not events:
            unassigned.append(rid)
            continue
        _, _, loc = events[-1]
        w = graph.distance(loc, req.pickup) + graph.distance(req.pickup, req.dropoff)
        per_request[rid] = w
        total += w
    return ServiceDistanceReport(total, per_request, unassigned)
