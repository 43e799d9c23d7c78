#!/usr/bin/env python3
"""
Test script for the centralized system: closed forms, location solvers, Q-search and retailer-as-DC
"""
import os
import sys
import math
import logging
import traceback

import numpy as np

# Add src to path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), 'src'))

from core.csm import (
    CsmSolver, NonConcavitySetup, QSearch, WeberProblem, anchor_optimum, case3_profit_surface, case3_weber_problem,
    center_of_gravity, central_floor, csm_case3_objective, csm_expected_profit, csm_realized_profit,
    finite_difference_hessian, finite_difference_quadratic_form, hessian_matrix, hessian_quadratic_form, q_search,
    retailer_as_dc, retailer_dc_profile, search_box, solve_csm_case1, solve_csm_case2, total_demand_dist, weber_solve,
)
from core.model import (
    EconomicParams, Instance, Point, Retailer, TransportMode, TransportParams, generate_instance,
)
from core.stochastics import NormalDist
from utils.errors import ArgumentError, ConvergenceError, DomainError, SingularityError

# Setup logging
logging.basicConfig(
    level=logging.WARNING,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)
logger.setLevel(logging.INFO)

Z_03 = -0.5244005127080407
SMALL_SEARCH = {"q_steps": 40, "weber_tol": 1e-6, "weber_max_iter": 10_000}


def _raises(exc_type, func, *args, **kwargs):
    try:
        func(*args, **kwargs)
    except exc_type:
        return True
    return False


def make_instance(supplier, points, mus, sigmas, mode=TransportMode.QUANTITY_DISTANCE, econ=None, **transport):
    """Hand-built network on a 1000 mi map"""
    retailers = tuple(
        Retailer(i, Point(*xy), NormalDist(mu, sigma))
        for i, (xy, mu, sigma) in enumerate(zip(points, mus, sigmas))
    )
    return Instance(
        supplier_location=Point(*supplier),
        retailers=retailers,
        econ=econ or EconomicParams(),
        transport=TransportParams(mode=mode, **transport),
    )


def test_total_demand_dist():
    one = make_instance((0, 0), [(10, 10)], [150.0], [15.0])
    pooled = total_demand_dist(one)
    assert pooled.mu == 150.0 and abs(pooled.sigma - 15.0) <= 1e-12

    four = make_instance((0, 0), [(10, 10)] * 4, [150.0] * 4, [15.0] * 4)
    pooled = total_demand_dist(four)
    assert pooled.mu == 600.0 and abs(pooled.sigma - 30.0) <= 1e-12

    ten = make_instance((0, 0), [(10, 10)] * 10, [150.0] * 10, [float(s) for s in range(10, 20)])
    # sum of squares for sigma = 10..19 is 2185
    assert abs(total_demand_dist(ten).sigma - math.sqrt(2185.0)) <= 1e-12
    assert abs(total_demand_dist(ten).sigma - 46.744) <= 0.0005


def test_case1_fractile_half():
    """b=100, c=50, v=20, r_0=10 gives fractile 0.5 and Q_0 = mu_0"""
    econ = EconomicParams(b=100.0, gamma=0.01)
    inst = make_instance((0, 0), [(100, 100), (200, 50), (400, 300)], [120.0, 150.0, 180.0], [10.0, 12.0, 20.0],
                         mode=TransportMode.QUANTITY, econ=econ, trunk_rate=10.0)
    sol = solve_csm_case1(inst)
    assert sol.dc_location is None
    assert abs(sol.fractile - 0.5) <= 1e-12
    assert abs(sol.q0 - 450.0) <= 1e-6
    assert not sol.diagnostics.floor_binding


def test_case1_floor_binds():
    """b=25 makes the central fractile negative; the aggregate floor sets Q_0"""
    econ = EconomicParams(b=25.0, gamma=0.3)
    mus, sigmas = [120.0, 150.0, 180.0], [10.0, 12.0, 20.0]
    inst = make_instance((0, 0), [(100, 100), (200, 50), (400, 300)], mus, sigmas,
                         mode=TransportMode.QUANTITY, econ=econ)
    sol = solve_csm_case1(inst)
    assert sol.fractile < 0
    assert sol.diagnostics.floor_binding
    expected = sum(mu + Z_03 * s for mu, s in zip(mus, sigmas))
    assert abs(sol.q0 - expected) <= 1e-6
    assert abs(sol.q0 - central_floor(inst)) <= 1e-9


def test_closed_forms_match_grid():
    """Closed-form Q_0 is within one grid step of a floor-feasible 1-D brute force (cases 1 and 2)"""
    for seed in range(20):
        base = generate_instance(3 + seed % 7, 100 + seed)
        for mode, solve in ((TransportMode.QUANTITY, solve_csm_case1), (TransportMode.DISTANCE, solve_csm_case2)):
            inst = base.with_transport(mode=mode)
            sol = solve(inst)
            floor = central_floor(inst)
            grid = np.linspace(floor, 2.0 * floor, 801)
            profits = [csm_expected_profit(inst, q, sol.dc_location).total for q in grid]
            best = int(np.argmax(profits))
            assert abs(grid[best] - sol.q0) <= grid[1] - grid[0], f"seed {seed}, {mode.value}"
            assert sol.expected_profit >= max(profits) - 1e-6


def test_case1_wrong_mode():
    inst = generate_instance(3, 17)
    assert _raises(ArgumentError, solve_csm_case1, inst)
    assert _raises(ArgumentError, solve_csm_case2, inst)
    assert _raises(ArgumentError, q_search, inst.with_transport(mode=TransportMode.QUANTITY))


def test_quantity_mode_ignores_geometry():
    inst = generate_instance(6, 4).with_transport(mode=TransportMode.QUANTITY)
    moved = inst.scaled(250.0)
    assert abs(solve_csm_case1(inst).expected_profit - solve_csm_case1(moved).expected_profit) <= 1e-6


def test_case2_centroid():
    equal = make_instance((0, 0), [(10, 0), (5, 9)], [100.0, 100.0], [10.0, 10.0],
                          mode=TransportMode.DISTANCE, trunk_rate=1.0, last_rate=1.0)
    dc = center_of_gravity(equal)
    assert abs(dc.x - 5.0) <= 1e-12 and abs(dc.y - 3.0) <= 1e-12

    weighted = make_instance((0, 5), [(8, 5)], [100.0], [10.0],
                             mode=TransportMode.DISTANCE, trunk_rate=3.0, last_rate=1.0)
    dc = center_of_gravity(weighted)
    assert abs(dc.x - 2.0) <= 1e-12 and abs(dc.y - 5.0) <= 1e-12

    colocated = make_instance((40, 60), [(40, 60)], [100.0], [10.0], mode=TransportMode.DISTANCE)
    sol = solve_csm_case2(colocated)
    assert abs(sol.dc_location.x - 40.0) <= 1e-9 and abs(sol.dc_location.y - 60.0) <= 1e-9


def test_case2_solution():
    inst = generate_instance(12, 6).with_transport(mode=TransportMode.DISTANCE)
    sol = solve_csm_case2(inst)
    econ = inst.econ
    assert abs(sol.fractile - (econ.b - econ.c) / (econ.b - econ.v)) <= 1e-12
    assert sol.dc_location == center_of_gravity(inst)
    assert sol.diagnostics.weber_improvement >= -1e-9
    # Q_0 does not depend on geometry in distance-only transport
    assert abs(solve_csm_case2(inst.scaled(300.0)).q0 - sol.q0) <= 1e-9


def test_weber_equilateral():
    anchors = [(0.0, 0.0), (1.0, 0.0), (0.5, math.sqrt(3.0) / 2.0)]
    problem = WeberProblem(anchors, [1.0, 1.0, 1.0])
    point, _ = weber_solve(problem, Point(0.9, 0.1))
    assert abs(point.x - 0.5) <= 1e-4
    assert abs(point.y - 0.288675) <= 1e-4


def test_weber_heavy_anchor():
    anchors = [(10.0, 10.0), (90.0, 20.0), (50.0, 80.0), (70.0, 70.0)]
    problem = WeberProblem(anchors, [1e6, 1.0, 1.0, 1.0])
    point, _ = weber_solve(problem, Point(50.0, 50.0))
    assert math.hypot(point.x - 10.0, point.y - 10.0) <= 1e-3


def test_weber_dense_grid():
    """Random 5-anchor problem against an exhaustive grid"""
    rng = np.random.default_rng(2024)
    anchors = rng.uniform(0.0, 100.0, size=(5, 2))
    weights = rng.uniform(0.5, 3.0, size=5)
    problem = WeberProblem(anchors, weights)
    point, _ = weber_solve(problem, Point(50.0, 50.0))

    axis = np.linspace(0.0, 100.0, 401)
    xx, yy = np.meshgrid(axis, axis)
    grid = np.column_stack([xx.ravel(), yy.ravel()])
    diff = grid[:, None, :] - anchors[None, :, :]
    values = np.sqrt(np.sum(diff ** 2, axis=-1) + problem.epsilon) @ weights
    best = int(np.argmin(values))
    assert problem.objective(point.as_array()) <= values[best] + 1e-6
    assert math.hypot(point.x - grid[best, 0], point.y - grid[best, 1]) <= 1.0


def test_weber_monotone_and_stationary():
    rng = np.random.default_rng(8)
    problem = WeberProblem(rng.uniform(0.0, 1000.0, size=(20, 2)), rng.uniform(1.0, 10.0, size=20))
    values = []
    point, iterations = weber_solve(problem, Point(0.0, 0.0), callback=lambda it, p, f: values.append(f))
    assert len(values) == iterations + 1
    assert all(b <= a + 1e-12 for a, b in zip(values, values[1:]))
    assert np.linalg.norm(problem.gradient(point.as_array())) / problem.total_weight <= 1e-6


def test_weber_anchor_optimum():
    """A warm start next to a dominant anchor converges onto the anchor"""
    anchors = [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0)]
    # pull of the two retailers on the supplier is sqrt(2)
    held = WeberProblem(anchors, [1.5, 1.0, 1.0])
    assert anchor_optimum(held) == Point(0.0, 0.0)
    point, iterations = weber_solve(held, Point(3e-6, -2e-6))
    assert point == Point(0.0, 0.0) and iterations == 0

    slack = WeberProblem(anchors, [1.4, 1.0, 1.0])
    assert anchor_optimum(slack) is None
    start = Point(3e-6, -2e-6)
    point, _ = weber_solve(slack, start)
    assert slack.objective(point.as_array()) <= slack.objective(start.as_array()) + 1e-12

    # an optimal anchor outside the box is not taken
    assert anchor_optimum(held, box=(10.0, 90.0)) is None


def test_weber_near_supplier_in_search():
    """Supplier weight near half the total: the inner solve returns instead of raising"""
    inst = generate_instance(10, 42)
    problem = case3_weber_problem(inst, 2527.29)
    start = Point(368.1012438, 481.5491197)
    point, _ = weber_solve(problem, start, 1e-6, 10_000, search_box(inst))
    assert problem.objective(point.as_array()) <= problem.objective(start.as_array()) + 1e-9

    for n in (10, 40, 100):
        inst = generate_instance(n, 42)
        q_lb = central_floor(inst)
        for workers in (1, 2):
            sol = QSearch({"q_steps": 60, "workers": workers}).search(inst)
            assert q_lb - 1e-9 <= sol.q0 <= 2.0 * q_lb + 1e-9
            assert math.isfinite(sol.expected_profit)


def test_weber_box():
    problem = WeberProblem([(2000.0, 2000.0)], [1.0])
    point, _ = weber_solve(problem, Point(500.0, 500.0), box=(-100.0, 1100.0))
    assert abs(point.x - 1100.0) <= 1e-9 and abs(point.y - 1100.0) <= 1e-9


def test_weber_errors():
    anchors = [(0.0, 0.0), (100.0, 0.0), (0.0, 100.0), (100.0, 100.0), (50.0, 20.0), (30.0, 70.0)]
    problem = WeberProblem(anchors, [1.0] * 6)
    assert anchor_optimum(problem) is None
    try:
        weber_solve(problem, Point(10.0, 90.0), tol=1e-12, max_iter=1)
    except ConvergenceError as e:
        assert e.last_iterate is not None
        assert e.gradient_norm > 1e-12
        tagged = e.with_q0(1234.5)
        assert tagged.q0 == 1234.5 and "1234.5" in str(tagged)
    else:
        raise AssertionError("one iteration reached a 1e-12 tolerance")

    assert _raises(DomainError, weber_solve, problem, Point(0.0, 0.0), tol=0.0)
    assert _raises(DomainError, WeberProblem, [(0.0, 0.0), (1.0, 1.0)], [0.0, 0.0])
    assert _raises(DomainError, WeberProblem, [(0.0, 0.0)], [-1.0])
    assert _raises(ArgumentError, WeberProblem, [(0.0, 0.0), (1.0, 1.0)], [1.0])


def test_case3_objective_value():
    setup = NonConcavitySetup()
    inst = setup.to_instance()
    value = csm_case3_objective(inst, 1000.0, Point(300.0, 300.0)).total
    assert abs(value - (-27756.35)) <= 0.5


def test_case3_objective_properties():
    inst = generate_instance(5, 12)
    loc = Point(420.0, 610.0)
    base = csm_case3_objective(inst, 800.0, loc).total
    bumped = inst.with_transport(trunk_fixed=inst.transport.trunk_fixed + 100.0)
    assert abs(base - csm_case3_objective(bumped, 800.0, loc).total - 100.0) <= 1e-6

    free = inst.with_transport(trunk_rate=0.0, last_rate=0.0)
    a = csm_case3_objective(free, 800.0, Point(10.0, 10.0)).total
    b = csm_case3_objective(free, 800.0, Point(900.0, 500.0)).total
    assert abs(a - b) <= 1e-6

    xy = np.array([[420.0, 610.0], [10.0, 990.0]])
    surface = case3_profit_surface(inst, 800.0, xy)
    assert abs(surface[0] - base) <= 1e-6
    assert abs(surface[1] - csm_case3_objective(inst, 800.0, Point(10.0, 990.0)).total) <= 1e-6

    assert _raises(DomainError, csm_expected_profit, inst, -1.0, loc)
    assert _raises(ArgumentError, csm_expected_profit, inst, 100.0, None)


def test_hessian_witness():
    setup = NonConcavitySetup()
    value = hessian_quadratic_form(setup, (-100.0, 1.0, 1.0))
    assert abs(value - 10.0 * math.sqrt(2.0)) <= 1e-6
    assert hessian_quadratic_form(setup, (0.0, 0.0, 0.0)) == 0.0
    # the density term underflows at z = 90
    assert hessian_matrix(setup)[0, 0] == 0.0


def test_hessian_matches_finite_differences():
    for setup in (NonConcavitySetup(), NonConcavitySetup(retailer=Point(700.0, 200.0)),
                  NonConcavitySetup(q0=105.0)):
        inst = setup.to_instance()
        for z in ((-100.0, 1.0, 1.0), (1.0, -2.0, 0.5), (0.0, 1.0, -1.0)):
            analytic = hessian_quadratic_form(setup, z)
            numeric = finite_difference_quadratic_form(inst, setup.q0, setup.dc, z)
            assert abs(analytic - numeric) <= 1e-3 * max(1.0, abs(analytic)), (setup, z, analytic, numeric)

    setup = NonConcavitySetup(retailer=Point(650.0, 150.0), q0=100.0)
    full = finite_difference_hessian(setup.to_instance(), setup.q0, setup.dc)
    assert np.allclose(full, hessian_matrix(setup), rtol=1e-3, atol=1e-3)


def test_hessian_singularity():
    assert _raises(SingularityError, hessian_quadratic_form, NonConcavitySetup(dc=Point(100.0, 100.0)), (1, 1, 1))
    assert _raises(SingularityError, hessian_matrix, NonConcavitySetup(dc=Point(500.0, 500.0)))
    # smoothing removes the singularity
    hessian_matrix(NonConcavitySetup(dc=Point(100.0, 100.0), epsilon=1e-6))


def test_q_search_contract():
    inst = generate_instance(6, 5)
    sol = QSearch(SMALL_SEARCH).search(inst)
    q_lb = central_floor(inst)
    grid = np.linspace(q_lb, 2.0 * q_lb, 40)
    assert q_lb - 1e-9 <= sol.q0 <= 2.0 * q_lb + 1e-9
    assert sol.diagnostics.grid_points == 40
    assert abs(sol.diagnostics.q_lower_bound - q_lb) <= 1e-9
    # without refinement the answer is a grid point
    assert len(sol.trace) == 40 and not any(p.refined for p in sol.trace)
    assert np.min(np.abs(grid - sol.q0)) <= 1e-9
    assert sol.diagnostics.refine_steps == 0
    assert abs(sol.expected_profit - max(p.profit for p in sol.trace)) <= 1e-6

    lo, hi = search_box(inst)
    assert lo <= sol.dc_location.x <= hi and lo <= sol.dc_location.y <= hi

    # never worse than the centroid start at any grid Q_0
    centroid = center_of_gravity(inst)
    for q0 in grid:
        assert sol.expected_profit >= csm_case3_objective(inst, q0, centroid).total - 1e-6


def test_q_search_refinement():
    inst = generate_instance(6, 5)
    plain = QSearch(SMALL_SEARCH).search(inst)
    refined = QSearch(dict(SMALL_SEARCH, refine=True)).search(inst)
    assert refined.expected_profit >= plain.expected_profit - 1e-9
    assert [p.profit for p in refined.trace[:40]] == [p.profit for p in plain.trace]
    assert all(p.refined for p in refined.trace[40:])
    if refined.diagnostics.refine_steps > 0:
        assert refined.expected_profit > plain.expected_profit


def test_q_search_brute_force():
    """Random two-retailer networks against a Q x location grid"""
    axis = np.linspace(0.0, 1000.0, 161)
    xx, yy = np.meshgrid(axis, axis)
    xy = np.column_stack([xx.ravel(), yy.ravel()])
    for seed in range(20):
        inst = generate_instance(2, 300 + seed)
        sol = q_search(inst, steps=100)
        q_lb = central_floor(inst)
        brute = max(float(np.max(case3_profit_surface(inst, q0, xy))) for q0 in np.linspace(q_lb, 2.0 * q_lb, 80))
        assert sol.expected_profit >= brute - 1e-3 * abs(brute), f"seed {300 + seed}"


def test_inner_solvers_agree():
    inst = generate_instance(8, 14)
    weiszfeld = QSearch(dict(SMALL_SEARCH, inner="weiszfeld")).search(inst)
    slsqp = QSearch(dict(SMALL_SEARCH, inner="slsqp")).search(inst)
    assert slsqp.diagnostics.inner_solver == "slsqp"
    assert abs(weiszfeld.expected_profit - slsqp.expected_profit) <= 1e-3 * abs(weiszfeld.expected_profit)


def test_parallel_grid_matches_serial():
    inst = generate_instance(8, 14)
    serial = QSearch(dict(SMALL_SEARCH, workers=1)).search(inst)
    parallel = QSearch(dict(SMALL_SEARCH, workers=4)).search(inst)
    assert abs(serial.expected_profit - parallel.expected_profit) <= 1e-5 * abs(serial.expected_profit)
    assert abs(serial.q0 - parallel.q0) <= 1e-3 * serial.q0


def test_q_search_config_errors():
    assert _raises(ArgumentError, QSearch, {"q_steps": 1})
    assert _raises(ArgumentError, QSearch, {"inner": "simplex"})
    assert _raises(DomainError, QSearch, {"weber_tol": 0.0})


def test_solver_dispatch():
    inst = generate_instance(5, 30)
    assert CsmSolver().solve(inst.with_transport(mode=TransportMode.QUANTITY)).dc_location is None
    assert CsmSolver().solve(inst.with_transport(mode=TransportMode.DISTANCE)).mode is TransportMode.DISTANCE
    sol = CsmSolver(SMALL_SEARCH).solve(inst)
    assert sol.mode is TransportMode.QUANTITY_DISTANCE
    assert sol.to_dict()["dc_location"] == [sol.dc_location.x, sol.dc_location.y]


def test_realized_profit():
    inst = generate_instance(5, 30)
    sol = CsmSolver(SMALL_SEARCH).solve(inst)
    demands = np.zeros(inst.n)
    demands[0] = sol.q0
    exact = csm_realized_profit(inst, sol, demands)
    assert exact.shortage == 0.0 and exact.salvage == 0.0
    batch = csm_realized_profit(inst, sol, np.vstack([inst.mus, inst.mus * 3.0]))
    assert batch.total.shape == (2,)
    assert batch.shortage[1] > 0
    assert _raises(ArgumentError, csm_realized_profit, inst, sol, inst.mus[:2])


def test_retailer_as_dc_not_better():
    inst = generate_instance(10, 7)
    opt = QSearch(SMALL_SEARCH).search(inst)
    constrained = retailer_as_dc(inst, opt)
    assert constrained.expected_profit <= opt.expected_profit + 1e-6 * abs(opt.expected_profit)
    choice = constrained.retailer_dc
    separations = [math.hypot(r.location.x - opt.dc_location.x, r.location.y - opt.dc_location.y)
                   for r in inst.retailers]
    assert abs(choice.separation - min(separations)) <= 1e-9
    assert constrained.dc_location == inst.retailers[choice.retailer_id].location

    profile = retailer_dc_profile(inst, opt)
    assert [e.retailer_id for e in profile] == list(range(inst.n))
    assert abs(profile[choice.retailer_id].expected_profit - constrained.expected_profit) <= 1e-9


def test_retailer_as_dc_collocated():
    """A dominant retailer pulls the optimal DC onto itself"""
    inst = make_instance((100.0, 100.0), [(600.0, 600.0), (300.0, 800.0), (850.0, 200.0)],
                         [5000.0, 100.0, 100.0], [50.0, 10.0, 10.0])
    opt = q_search(inst, steps=40)
    constrained = retailer_as_dc(inst, opt)
    assert constrained.retailer_dc.retailer_id == 0
    assert constrained.retailer_dc.separation <= 0.01
    assert abs(opt.expected_profit - constrained.expected_profit) <= 1e-4 * abs(opt.expected_profit) + 1.0


def test_retailer_as_dc_needs_location():
    inst = generate_instance(4, 1).with_transport(mode=TransportMode.QUANTITY)
    sol = solve_csm_case1(inst)
    assert _raises(ArgumentError, retailer_as_dc, inst, sol)
    assert _raises(ArgumentError, retailer_dc_profile, inst, sol)


def main():
    """Run all tests"""
    logger.info("=" * 60)
    logger.info("CSM Test Suite")
    logger.info("=" * 60)

    tests = [
        ("Pooled Demand", test_total_demand_dist),
        ("Case 1 Fractile 0.5", test_case1_fractile_half),
        ("Case 1 Floor", test_case1_floor_binds),
        ("Closed Forms vs Grid", test_closed_forms_match_grid),
        ("Wrong Mode", test_case1_wrong_mode),
        ("Quantity Mode Geometry", test_quantity_mode_ignores_geometry),
        ("Case 2 Centroid", test_case2_centroid),
        ("Case 2 Solution", test_case2_solution),
        ("Weber Equilateral", test_weber_equilateral),
        ("Weber Heavy Anchor", test_weber_heavy_anchor),
        ("Weber vs Dense Grid", test_weber_dense_grid),
        ("Weber Monotone", test_weber_monotone_and_stationary),
        ("Weber Anchor Optimum", test_weber_anchor_optimum),
        ("Weber Near Supplier", test_weber_near_supplier_in_search),
        ("Weber Box", test_weber_box),
        ("Weber Errors", test_weber_errors),
        ("Case 3 Objective Value", test_case3_objective_value),
        ("Case 3 Objective Properties", test_case3_objective_properties),
        ("Hessian Witness", test_hessian_witness),
        ("Hessian vs Finite Differences", test_hessian_matches_finite_differences),
        ("Hessian Singularity", test_hessian_singularity),
        ("Q-search Contract", test_q_search_contract),
        ("Q-search Refinement", test_q_search_refinement),
        ("Q-search Brute Force", test_q_search_brute_force),
        ("Inner Solvers Agree", test_inner_solvers_agree),
        ("Parallel Grid", test_parallel_grid_matches_serial),
        ("Q-search Config Errors", test_q_search_config_errors),
        ("Solver Dispatch", test_solver_dispatch),
        ("Realized Profit", test_realized_profit),
        ("Retailer-as-DC Bound", test_retailer_as_dc_not_better),
        ("Retailer-as-DC Collocated", test_retailer_as_dc_collocated),
        ("Retailer-as-DC Errors", test_retailer_as_dc_needs_location),
    ]

    results = []
    for name, test_func in tests:
        try:
            test_func()
            results.append((name, True))
        except Exception as e:
            logger.error(f"Test '{name}' failed: {e!r}")
            traceback.print_exc()
            results.append((name, False))

    # Summary
    logger.info("\n" + "=" * 60)
    logger.info("Test Summary")
    logger.info("=" * 60)

    passed = sum(1 for _, result in results if result)
    total = len(results)

    for name, result in results:
        status = "✓ PASS" if result else "✗ FAIL"
        logger.info(f"{status}: {name}")

    logger.info(f"\nTotal: {passed}/{total} tests passed")
    return 0 if passed == total else 1


if __name__ == "__main__":
    sys.exit(main())
