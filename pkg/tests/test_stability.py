from fractions import Fraction

import numpy as np
import pytest

from fleetroll.demand import DemandModel, synthetic_model
from fleetroll.stability import (MarginalMismatch, MissingCoordinates, TooFewTraces,
                                 bounds_from_expectations, compute_bounds,
                                 empirical_stability, wasserstein_discrete)
from conftest import line_graph


class SeriesTrace:
    def __init__(self, series):
        self._series = list(series)

    def outstanding_series(self):
        return self._series


# ---------- transport oracles ----------

from oracles import grid_aligned_pmf, lp_transport_value, vertex_enumeration_value


def test_vertex_oracle_agrees_with_lp():
    rng = np.random.default_rng(5)
    for _ in range(20):
        S, T = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        a = rng.integers(1, 6, size=S).astype(float)
        b = rng.integers(1, 6, size=T).astype(float)
        b *= a.sum() / b.sum()
        cost = rng.integers(0, 9, size=(S, T)).astype(float).tolist()
        lp = lp_transport_value(a, b, cost)
        ve = vertex_enumeration_value([Fraction(x).limit_denominator(10**9) for x in a],
                                      [Fraction(x).limit_denominator(10**9) for x in b],
                                      cost)
        assert ve == pytest.approx(lp, rel=1e-9, abs=1e-9)


# ---------- wasserstein_discrete ----------

def test_identical_pmfs_zero():
    p = {1: 0.25, 2: 0.75}
    v, plan = wasserstein_discrete(p, dict(p), lambda a, b: abs(a - b))
    assert v == 0.0
    assert plan.coupling == {(1, 1): 0.25, (2, 2): 0.75}


def test_point_masses_forced_coupling():
    v, plan = wasserstein_discrete({3: 1.0}, {7: 1.0}, lambda a, b: abs(a - b))
    assert v == pytest.approx(4.0)
    assert plan.coupling == {(3, 7): 1.0}


def test_three_point_line():
    v, _ = wasserstein_discrete({0: 0.5, 2: 0.5}, {1: 1.0}, lambda a, b: abs(a - b))
    assert v == pytest.approx(1.0)


def test_marginal_mismatch():
    with pytest.raises(MarginalMismatch):
        wasserstein_discrete({1: 0.9}, {1: 1.0}, lambda a, b: 0.0)


def test_plan_marginals_match():
    rng = np.random.default_rng(11)
    for _ in range(30):
        S, T = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        p = rng.random(S) + 0.05
        q = rng.random(T) + 0.05
        p /= p.sum()
        q /= q.sum()
        pm = {i + 1: float(x) for i, x in enumerate(p)}
        qm = {j + 1: float(x) for j, x in enumerate(q)}
        v, plan = wasserstein_discrete(pm, qm, lambda a, b: abs(a - b))
        rows, cols = plan.marginals()
        for u, mass in pm.items():
            assert rows.get(u, 0.0) == pytest.approx(mass, abs=2e-6)
        for u, mass in qm.items():
            assert cols.get(u, 0.0) == pytest.approx(mass, abs=2e-6)
        assert v == pytest.approx(sum(m * abs(u - w) for (u, w), m in plan.coupling.items()),
                                  abs=1e-9)


def test_flow_value_matches_lp_oracle():
    rng = np.random.default_rng(23)
    for _ in range(60):
        S, T = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        nodes_p = sorted(rng.choice(np.arange(1, 30), size=S, replace=False).tolist())
        nodes_q = sorted(rng.choice(np.arange(1, 30), size=T, replace=False).tolist())
        pm = grid_aligned_pmf(rng, S, nodes_p)
        qm = grid_aligned_pmf(rng, T, nodes_q)
        v, _ = wasserstein_discrete(pm, qm, lambda a, b: abs(a - b))
        lp = lp_transport_value([pm[n] for n in nodes_p], [qm[n] for n in nodes_q],
                                [[abs(u - w) for w in nodes_q] for u in nodes_p])
        assert v == pytest.approx(lp, rel=1e-6, abs=1e-6)


def test_quantization_error_is_bounded_for_arbitrary_masses():
    # masses off the 1e-6 grid are rounded; the value error stays ~1e-5
    rng = np.random.default_rng(29)
    for _ in range(20):
        S, T = int(rng.integers(1, 7)), int(rng.integers(1, 7))
        p = rng.random(S) + 0.05
        q = rng.random(T) + 0.05
        p /= p.sum()
        q /= q.sum()
        nodes_p = sorted(rng.choice(np.arange(1, 30), size=S, replace=False).tolist())
        nodes_q = sorted(rng.choice(np.arange(1, 30), size=T, replace=False).tolist())
        pm = {n: float(x) for n, x in zip(nodes_p, p)}
        qm = {n: float(x) for n, x in zip(nodes_q, q)}
        v, _ = wasserstein_discrete(pm, qm, lambda a, b: abs(a - b))
        lp = lp_transport_value(p.tolist(), q.tolist(),
                                [[abs(u - w) for w in nodes_q] for u in nodes_p])
        assert v == pytest.approx(lp, abs=1e-4)


def test_metric_sandwich_euclidean_below_graph(grid5):
    model = synthetic_model(grid5, 1.0, hotspot=3, hotspot_mass=0.5)
    rep_g = compute_bounds(model, grid5, metric="graph")
    rep_e = compute_bounds(model, grid5, metric="euclidean")
    assert rep_e.wd <= rep_g.wd + 1e-9


def test_euclidean_needs_coordinates():
    g = line_graph(3)
    model = DemandModel({1: 1.0}, {1: 0.5, 3: 0.5},
                        {1: {3: 1.0}, 3: {1: 1.0}})
    with pytest.raises(MissingCoordinates):
        compute_bounds(model, g, metric="euclidean")


# ---------- bounds ----------

def test_two_node_bounds_exact():
    g = line_graph(2)
    model = DemandModel({1: 1.0}, {1: 1.0}, {1: {2: 1.0}})
    # pickups at 1, dropoffs at 2; initial and previous-dropoff mass at 2
    rep = compute_bounds(model, g)
    assert rep.e_xi_rho == 1.0 and rep.e_lrand_rho == 1.0 and rep.e_rho_delta == 1.0
    assert rep.d_max == 2.0
    assert rep.wd == pytest.approx(1.0)   # move mass at 2 onto pickups at 1
    assert rep.d_min == pytest.approx(2.0)
    assert rep.m_sufficient == 2
    assert rep.m_necessary == 2


def test_single_node_degenerate():
    from fleetroll import build_graph

    g = build_graph(1, [])
    model = DemandModel({1: 1.0}, {1: 1.0}, {1: {1: 1.0}})
    rep = compute_bounds(model, g)
    assert rep.d_max == 0.0 and rep.d_min == 0.0
    assert rep.m_sufficient == 0


def test_reference_inputs_reproduce_published_bounds():
    rep = bounds_from_expectations(e_xi_rho=15.0, e_lrand_rho=13.0,
                                   e_rho_delta=15.0, wd=1.87, e_eta=1.0)
    assert rep.d_max == 30.0
    assert rep.m_sufficient == 30
    assert rep.instability_threshold == pytest.approx(16.87)
    assert rep.m_necessary == 17


def test_d_min_never_exceeds_d_max_when_initials_match_dropoffs(grid5):
    for seed in range(5):
        model = synthetic_model(grid5, 1.0, hotspot=(seed * 5 + 1), hotspot_mass=0.4)
        rep = compute_bounds(model, grid5)
        assert rep.d_min <= rep.d_max + 1e-9


# ---------- empirical verdicts ----------

def test_zero_traces_stable():
    traces = [SeriesTrace([0] * 100) for _ in range(6)]
    assert empirical_stability(traces, window=20).verdict == "STABLE"


def test_linear_growth_unstable():
    traces = [SeriesTrace(list(range(100))) for _ in range(6)]
    v = empirical_stability(traces, window=20)
    assert v.verdict == "UNSTABLE"
    assert v.slope > 0 and v.slope_p < 0.05


def test_too_few_traces():
    with pytest.raises(TooFewTraces):
        empirical_stability([SeriesTrace([0] * 10)] * 4, window=2)


def test_window_too_large():
    with pytest.raises(Exception):
        empirical_stability([SeriesTrace([0] * 10)] * 6, window=8)
