"""Minimum-cost bipartite assignment of taxis to requests.

The production solver is a forward auction. Rectangular problems are solved
directly by letting the smaller side bid (zero initial prices), which matches
the smaller side fully and keeps the k*epsilon optimality guarantee, k being
the number of matched pairs; square problems additionally use epsilon-scaling
(start at max_cost/2, divide by 4 per phase) with prices warm-started between
phases. A brute-force enumerator is kept alongside as the test oracle.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


class MatchingError(Exception):
    pass


class TooLarge(MatchingError):
    pass


@dataclass
class AssignmentProblem:
    cost: list  # rows = taxis, columns = requests
    row_ids: list = None
    col_ids: list = None

    def __post_init__(self):
        nr = len(self.cost)
        nc = len(self.cost[0]) if nr else 0
        for row in self.cost:
            if len(row) != nc:
                raise MatchingError("cost matrix is ragged")
            for c in row:
                if not math.isfinite(c) or c < 0:
                    raise MatchingError(f"costs must be finite and nonnegative, got {c}")
        if self.row_ids is None:
            self.row_ids = list(range(nr))
        if self.col_ids is None:
            self.col_ids = list(range(nc))

    @property
    def shape(self):
        return len(self.cost), len(self.cost[0]) if self.cost else 0


@dataclass
class Assignment:
    pairs: list = field(default_factory=list)  # (row id, col id)
    total_cost: float = 0.0


def _auction_pass(cost, eps, prices):
    """One forward-auction pass to a complete assignment of all bidders.

    Bidders are the rows; each grabs the object minimizing cost + price and
    raises that price to its second-best margin plus eps. Prices persist
    across calls; ties go to the lowest object index.
    """
    n_obj = len(cost[0])
    owner = [-1] * n_obj
    assigned = [-1] * len(cost)
    queue = deque(range(len(cost)))
    while queue:
        i = queue.popleft()
        row = cost[i]
        best_j = 0
        best = row[0] + prices[0]
        second = math.inf
        for j in range(1, n_obj):
            v = row[j] + prices[j]
            if v < best:
                second = best
                best = v
                best_j = j
            elif v < second:
                second = v
        if second == math.inf:
            second = best  # single object: bid the minimum increment
        prices[best_j] += second - best + eps
        prev = owner[best_j]
        if prev >= 0:
            assigned[prev] = -1
            queue.append(prev)
        owner[best_j] = i
        assigned[i] = best_j
    return assigned


def auction_match(cost, epsilon):
    """Auction on raw cost rows (rows <= columns); column index per row.

    Square problems run the scaling schedule (max cost / 2, divided by 4 per
    phase, prices carried over); rectangular ones run a single phase from zero
    prices, which is what keeps the k*epsilon bound valid when objects can end
    up unassigned.
    """
    k, n_obj = len(cost), len(cost[0])
    prices = [0.0] * n_obj
    if k == n_obj:
        eps = max(max(row) for row in cost) / 2.0
        while eps > epsilon:
            _auction_pass(cost, eps, prices)
            eps /= 4.0
    return _auction_pass(cost, epsilon, prices)


def min_cost_assignment(problem: AssignmentProblem, epsilon: float) -> Assignment:
    """Auction solve; total cost within k*epsilon of optimal (k = matched pairs).

    With integer costs and epsilon < 1/k the result is exactly optimal. Empty
    problems return an empty assignment. The smaller side is always matched
    fully; pairs come back sorted by row id.
    """
    if epsilon <= 0:
        raise MatchingError(f"epsilon must be positive, got {epsilon}")
    nr, nc = problem.shape
    if nr == 0 or nc == 0:
        return Assignment()
    transposed = nr > nc
    if transposed:
        cost = [[problem.cost[i][j] for i in range(nr)] for j in range(nc)]
    else:
        cost = problem.cost
    assigned = auction_match(cost, epsilon)

    pairs = []
    total = 0.0
    for i, j in enumerate(assigned):
        total += cost[i][j]
        if transposed:
            pairs.append((problem.row_ids[j], problem.col_ids[i]))
        else:
            pairs.append((problem.row_ids[i], problem.col_ids[j]))
    pairs.sort()
    return Assignment(pairs, total)


_PERM_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _permutations_array(n: int, k: int) -> np.ndarray:
    key = (n, k)
    arr = _PERM_CACHE.get(key)
    if arr is None:
        arr = np.array(list(itertools.permutations(range(n), k)), dtype=np.intp)
        _PERM_CACHE[key] = arr
    return arr


def brute_force_assignment(problem: AssignmentProblem) -> Assignment:
    """Exact optimum by enumerating all injections of the smaller side.

    Only for min(rows, cols) <= 8. Returns the lexicographically smallest
    optimal injection (enumeration order), so results are deterministic.
    """
    nr, nc = problem.shape
    if nr == 0 or nc == 0:
        return Assignment()
    if min(nr, nc) > 8:
        raise TooLarge(f"brute force limited to 8 matched pairs, got {min(nr, nc)}")
    cost = np.asarray(problem.cost, dtype=float)
    if nr <= nc:
        perms = _permutations_array(nc, nr)  # column choice per row
        totals = cost[np.arange(nr)[None, :], perms].sum(axis=1)
        best = perms[int(np.argmin(totals))]
        pairs = [(problem.row_ids[i], problem.col_ids[int(best[i])]) for i in range(nr)]
    else:
        perms = _permutations_array(nr, nc)  # row choice per column
        totals = cost[perms, np.arange(nc)[None, :]].sum(axis=1)
        best = perms[int(np.argmin(totals))]
        pairs = [(problem.row_ids[int(best[j])], problem.col_ids[j]) for j in range(nc)]
    pairs.sort()
    total = float(totals.min())
    return Assignment(pairs, total)
