"""
CSM - Centralized system: one distribution center pools all retailer orders

Closed forms cover quantity-only and distance-only transport. The
quantity-distance case is not jointly concave in (Q_0, x, y) and is solved by
Q-search: a grid over Q_0 with a smoothed Weber location problem per point.
"""
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from core.dsm import service_floor
from core.model import (
    DEFAULT_EPSILON, EconomicParams, Instance, Point, ProfitBreakdown, Retailer, TransportMode,
    TransportParams, distance, distances_from, transport_cost,
)
from core.stochastics import NormalDist, clamp_probability, loss_terms, std_pdf, std_quantile
from utils.errors import ArgumentError, ConvergenceError, DomainError, SearchRangeError, SingularityError

logger = logging.getLogger(__name__)

INNER_SOLVERS = ("weiszfeld", "slsqp")


@dataclass(frozen=True)
class SearchPoint:
    """One evaluated (profit, Q_0, x, y) tuple of Q-search"""

    profit: float
    q0: float
    x: float
    y: float
    refined: bool = False


@dataclass(frozen=True)
class CsmDiagnostics:
    grid_points: int = 0
    weber_iterations: int = 0
    floor_binding: bool = False
    q_lower_bound: float = 0.0
    refine_steps: int = 0
    inner_solver: str = ""
    runtime_seconds: float = 0.0
    weber_improvement: float = 0.0


@dataclass(frozen=True)
class RetailerDcChoice:
    """Retailer chosen to host the DC and its distance to the unconstrained optimum"""

    retailer_id: int
    location: Point
    separation: float


@dataclass(frozen=True, eq=False)
class CsmSolution:
    """
    Centralized solution

    Attributes:
        q0: Central order quantity
        dc_location: DC coordinates (None in QUANTITY mode)
        expected_profit: Expected system profit
        breakdown: ProfitBreakdown with trunk and last-mile transport
        diagnostics: CsmDiagnostics
        mode: TransportMode the solution was computed for
        fractile: Unclamped critical fractile at the returned DC
        trace: Q-search tuples, in evaluation order
        retailer_dc: RetailerDcChoice when the DC was placed at a retailer
    """

    q0: float
    dc_location: object
    expected_profit: float
    breakdown: ProfitBreakdown
    diagnostics: CsmDiagnostics
    mode: TransportMode
    fractile: float = float("nan")
    trace: tuple = field(default_factory=tuple)
    retailer_dc: object = None

    def to_dict(self):
        out = {
            "mode": self.mode.value,
            "q0": self.q0,
            "dc_location": None if self.dc_location is None else [self.dc_location.x, self.dc_location.y],
            "expected_profit": self.expected_profit,
            "fractile": self.fractile,
            "breakdown": self.breakdown.to_dict(),
            "diagnostics": self.diagnostics.__dict__.copy(),
        }
        if self.retailer_dc is not None:
            out["retailer_dc"] = {
                "retailer_id": self.retailer_dc.retailer_id,
                "location": [self.retailer_dc.location.x, self.retailer_dc.location.y],
                "separation": self.retailer_dc.separation,
            }
        return out


@dataclass(frozen=True, eq=False)
class WeberProblem:
    """
    Minimise sum_k w_k * [(x - a_k)^2 + (y - b_k)^2 + epsilon]^(1/2)

    Attributes:
        anchors: Array of shape (k, 2)
        weights: Array of shape (k,), nonnegative with at least one positive entry
        epsilon: Distance smoothing in square miles
    """

    anchors: np.ndarray
    weights: np.ndarray
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        anchors = np.asarray(self.anchors, dtype=float).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if anchors.shape[0] != weights.shape[0]:
            raise ArgumentError(f"{anchors.shape[0]} anchors but {weights.shape[0]} weights")
        if np.any(weights < 0) or not np.any(weights > 0):
            raise DomainError("Weber weights must be nonnegative with at least one positive weight")
        if self.epsilon < 0:
            raise DomainError("epsilon must be >= 0")
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "weights", weights)

    @property
    def total_weight(self):
        return float(np.sum(self.weights))

    def objective(self, xy):
        return float(self.weights @ distances_from(xy, self.anchors, self.epsilon))

    def gradient(self, xy):
        diff = np.asarray(xy, dtype=float) - self.anchors
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff) + self.epsilon)
        return (self.weights / d) @ diff

    def hessian(self, xy):
        diff = np.asarray(xy, dtype=float) - self.anchors
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff) + self.epsilon)
        coef = self.weights / d
        outer = np.einsum("i,ij,ik->jk", self.weights / d ** 3, diff, diff)
        return np.sum(coef) * np.eye(2) - outer


def total_demand_dist(inst):
    """Distribution of pooled demand: N(sum mu_i, sqrt(sum sigma_i^2))"""
    return NormalDist(float(np.sum(inst.mus)), float(math.sqrt(np.sum(inst.sigmas ** 2))))


def central_floor(inst):
    """Aggregate service floor sum_i F_i^{-1}(gamma)"""
    return float(np.sum(service_floor(inst)))


def search_box(inst):
    """Map bounding box expanded by 10% on every side"""
    margin = 0.1 * inst.map_size
    return -margin, inst.map_size + margin


def weighted_centroid(points, weights):
    """Center of gravity of points (shape (k, 2)) under nonnegative weights"""
    points = np.asarray(points, dtype=float)
    weights = np.asarray(weights, dtype=float)
    total = float(np.sum(weights))
    if total <= 0:
        raise DomainError("Center of gravity needs a positive total weight")
    return Point.from_array(weights @ points / total)


def center_of_gravity(inst):
    """
    Rate-weighted center of gravity over the supplier and all retailers

    Weights are r_0 for the supplier and r_i for every retailer; with all
    rates zero every facility counts equally.
    """
    points = np.vstack([inst.supplier_location.as_array(), inst.coords])
    weights = np.concatenate([[inst.transport.trunk_rate], np.full(inst.n, inst.transport.last_rate)])
    if not np.any(weights > 0):
        weights = np.ones_like(weights)
    return weighted_centroid(points, weights)


def _leg_distances(inst, loc):
    """Smoothed supplier->DC distance and DC->retailer distances"""
    xy = loc.as_array()
    d0 = float(distances_from(xy, inst.supplier_location.as_array()[None, :], inst.epsilon)[0])
    return d0, distances_from(xy, inst.coords, inst.epsilon)


def _trunk_marginal(inst, mode, d0):
    """Marginal trunk transport cost of one more unit in Q_0"""
    if mode is TransportMode.QUANTITY:
        return inst.transport.trunk_rate
    if mode is TransportMode.DISTANCE:
        return 0.0
    return inst.transport.trunk_rate * d0


def _closed_form_q0(inst, trunk_marginal):
    """
    Q_0 = max{sum F_i^{-1}(gamma), F_0^{-1}((b - c - marginal) / (b - v))}

    Returns:
        Tuple (q0, unclamped fractile, floor_binding)
    """
    econ = inst.econ
    pooled = total_demand_dist(inst)
    beta = (econ.b - econ.c - trunk_marginal) / econ.overage_underage_span
    if beta <= 0:
        logger.debug(f"Central fractile {beta:.4f} is non-positive; clamped")
    fractile_q = pooled.mu + pooled.sigma * std_quantile(clamp_probability(beta))
    floor_q = central_floor(inst)
    q0 = max(floor_q, fractile_q, 0.0)
    return float(q0), float(beta), bool(floor_q >= fractile_q)


def csm_expected_profit(inst, q0, loc=None, mode=None):
    """
    Expected centralized profit at a central order quantity and DC location

    Last-mile shipments equal realized demand, so their expected quantity is mu_i.

    Args:
        inst: Instance
        q0: Central order quantity (>= 0)
        loc: DC Point (ignored, and may be None, in QUANTITY mode)
        mode: Transport mode to evaluate; defaults to the instance's mode

    Returns:
        ProfitBreakdown
    """
    mode = inst.mode if mode is None else TransportMode.parse(mode)
    if not (math.isfinite(q0) and q0 >= 0):
        raise DomainError(f"Q_0 must be finite and >= 0, got {q0}")
    if mode is TransportMode.QUANTITY:
        d0, di = 0.0, np.zeros(inst.n)
    else:
        if loc is None:
            raise ArgumentError(f"A DC location is required in {mode.value} mode")
        d0, di = _leg_distances(inst, loc)

    econ = inst.econ
    tr = inst.transport
    pooled = total_demand_dist(inst)
    overage, underage = loss_terms(pooled.mu, pooled.sigma, q0)
    last_mile = transport_cost(mode, tr.last_fixed, tr.last_rate, inst.mus, di)
    return ProfitBreakdown(
        revenue=econ.s * pooled.mu,
        shortage=econ.b * float(underage),
        salvage=econ.v * float(overage),
        procurement=econ.c * q0,
        trunk_transport=float(transport_cost(mode, tr.trunk_fixed, tr.trunk_rate, q0, d0)),
        last_mile_transport=float(np.sum(last_mile)),
        fixed=float(np.sum(inst.retailer_fixed_costs)) + econ.supplier_fixed_cost,
    )


def csm_case3_objective(inst, q0, loc):
    """Expected profit with quantity-distance transport on both legs"""
    return csm_expected_profit(inst, q0, loc, mode=TransportMode.QUANTITY_DISTANCE)


def case3_profit_surface(inst, q0, xy):
    """
    Vectorised case-3 expected profit for one Q_0 over many DC locations

    Args:
        inst: Instance
        q0: Central order quantity
        xy: Array of candidate locations, shape (m, 2)

    Returns:
        Array of shape (m,)
    """
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    econ = inst.econ
    tr = inst.transport
    base = csm_expected_profit(inst, q0, None, mode=TransportMode.QUANTITY)
    newsvendor = base.revenue - base.shortage + base.salvage - base.procurement - base.fixed
    d0 = distances_from(inst.supplier_location.as_array(), xy, inst.epsilon)
    di = np.sqrt(np.sum((xy[:, None, :] - inst.coords[None, :, :]) ** 2, axis=-1) + inst.epsilon)
    trunk = tr.trunk_fixed + tr.trunk_rate * q0 * d0
    last = inst.n * tr.last_fixed + tr.last_rate * (di @ inst.mus)
    return newsvendor - trunk - last


def csm_realized_profit(inst, sol, demands):
    """
    Centralized profit once demands are observed

    Args:
        inst: Instance
        sol: CsmSolution
        demands: DemandSample or array of realized demands, shape (n,) or (samples, n)

    Returns:
        ProfitBreakdown; with a batch of samples each field is an array over samples
    """
    d = np.asarray(demands, dtype=float)
    if d.shape[-1:] != (inst.n,):
        raise ArgumentError(f"Expected {inst.n} demands per sample, got shape {d.shape}")
    econ = inst.econ
    tr = inst.transport
    mode = sol.mode
    if mode is TransportMode.QUANTITY or sol.dc_location is None:
        d0, di = 0.0, np.zeros(inst.n)
    else:
        d0, di = _leg_distances(inst, sol.dc_location)

    pooled = np.sum(d, axis=-1)
    last_mile = transport_cost(mode, tr.last_fixed, tr.last_rate, d, di)
    return ProfitBreakdown(
        revenue=econ.s * pooled,
        shortage=econ.b * np.maximum(pooled - sol.q0, 0.0),
        salvage=econ.v * np.maximum(sol.q0 - pooled, 0.0),
        procurement=econ.c * sol.q0,
        trunk_transport=float(transport_cost(mode, tr.trunk_fixed, tr.trunk_rate, sol.q0, d0)),
        last_mile_transport=np.sum(last_mile, axis=-1),
        fixed=float(np.sum(inst.retailer_fixed_costs)) + econ.supplier_fixed_cost,
    )


def _require_mode(inst, mode, op):
    if inst.mode is not mode:
        raise ArgumentError(f"{op} needs {mode.value} transport, instance uses {inst.mode.value}")


def solve_csm_case1(inst):
    """
    Quantity-dependent transport: the DC location has no effect on profit

    Returns:
        CsmSolution without a DC location
    """
    _require_mode(inst, TransportMode.QUANTITY, "solve_csm_case1")
    q0, beta, binding = _closed_form_q0(inst, inst.transport.trunk_rate)
    breakdown = csm_expected_profit(inst, q0, None)
    logger.info(f"CSM case 1 solved: Q_0={q0:.2f} (floor binding={binding}), expected profit={breakdown.total:.2f}")
    return CsmSolution(
        q0=q0,
        dc_location=None,
        expected_profit=breakdown.total,
        breakdown=breakdown,
        diagnostics=CsmDiagnostics(floor_binding=binding, q_lower_bound=central_floor(inst)),
        mode=TransportMode.QUANTITY,
        fractile=beta,
    )


def case2_weber_problem(inst):
    """Distance-only location problem: supplier weight r_0, retailer weights r_i"""
    anchors = np.vstack([inst.supplier_location.as_array(), inst.coords])
    weights = np.concatenate([[inst.transport.trunk_rate], np.full(inst.n, inst.transport.last_rate)])
    return WeberProblem(anchors, weights, inst.epsilon)


def solve_csm_case2(inst, tol=1e-6, max_iter=10_000):
    """
    Distance-dependent transport: newsvendor Q_0 plus center-of-gravity DC

    The Weber point of the same weights is solved as a cross-check; its
    transport saving over the centroid is reported in the diagnostics.
    """
    _require_mode(inst, TransportMode.DISTANCE, "solve_csm_case2")
    q0, beta, binding = _closed_form_q0(inst, 0.0)
    dc = center_of_gravity(inst)
    breakdown = csm_expected_profit(inst, q0, dc)

    improvement = 0.0
    if inst.transport.trunk_rate > 0 or inst.transport.last_rate > 0:
        problem = case2_weber_problem(inst)
        weber_point, _ = weber_solve(problem, dc, tol=tol, max_iter=max_iter, box=search_box(inst))
        improvement = problem.objective(dc.as_array()) - problem.objective(weber_point.as_array())
        if improvement > 1e-6:
            logger.warning(f"Center of gravity is not the weighted-distance optimum: the Weber point "
                           f"({weber_point.x:.2f}, {weber_point.y:.2f}) saves {improvement:.2f} in transport")

    logger.info(f"CSM case 2 solved: Q_0={q0:.2f}, DC=({dc.x:.2f}, {dc.y:.2f}), expected profit={breakdown.total:.2f}")
    return CsmSolution(
        q0=q0,
        dc_location=dc,
        expected_profit=breakdown.total,
        breakdown=breakdown,
        diagnostics=CsmDiagnostics(floor_binding=binding, q_lower_bound=central_floor(inst),
                                   weber_improvement=float(improvement)),
        mode=TransportMode.DISTANCE,
        fractile=beta,
    )


def _project(xy, box):
    return xy if box is None else np.clip(xy, box[0], box[1])


def _stationarity(problem, xy, box):
    """Weight-normalised projected gradient norm"""
    g = problem.gradient(xy) / problem.total_weight
    if box is None:
        return float(np.linalg.norm(g))
    return float(np.linalg.norm(xy - _project(xy - g, box)))


def _in_box(xy, box):
    return box is None or bool(np.all((xy >= box[0]) & (xy <= box[1])))


def anchor_optimum(problem, box=None):
    """
    Anchor that solves the unsmoothed problem outright, if any

    Anchor j is optimal when the pull of the other anchors,
    ||sum_{k != j} w_k (a_j - a_k) / |a_j - a_k|||, does not exceed w_j.
    Coincident anchors pool their weight.

    Returns:
        Point or None
    """
    anchors, weights = problem.anchors, problem.weights
    diff = anchors[:, None, :] - anchors[None, :, :]
    dist = np.sqrt(np.einsum("jkd,jkd->jk", diff, diff))
    same = dist <= 1e-12
    unit = diff / np.where(same, 1.0, dist)[..., None]
    unit[same] = 0.0
    pull = np.linalg.norm(np.einsum("k,jkd->jd", weights, unit), axis=1)
    held = same.astype(float) @ weights

    best, margin = None, -np.inf
    for j in range(len(weights)):
        if held[j] > 0 and pull[j] <= held[j] and _in_box(anchors[j], box) and held[j] - pull[j] > margin:
            best, margin = j, held[j] - pull[j]
    return None if best is None else Point.from_array(anchors[best])


def weber_solve(problem, start, tol=1e-6, max_iter=10_000, box=None, callback=None):
    """
    Minimise the smoothed weighted-distance objective

    An anchor that passes the vertex-optimality test is returned at once.
    Otherwise each iteration tries a Newton step on the smoothed objective and
    falls back to the damped Weiszfeld fixed-point step; a step is only
    accepted when it lowers the objective. Stationarity is measured on the
    gradient divided by the total weight. When no step lowers the objective
    in floating point the current iterate is returned.

    Args:
        problem: WeberProblem
        start: Starting Point
        tol: Stationarity tolerance (> 0)
        max_iter: Iteration limit
        box: Optional (lo, hi) bounds applied to both coordinates
        callback: Optional callable(iteration, Point, objective)

    Returns:
        Tuple (Point, iterations)

    Raises:
        ConvergenceError: max_iter iterations without reaching tol
    """
    if not tol > 0:
        raise DomainError(f"tol must be > 0, got {tol}")

    vertex = anchor_optimum(problem, box)
    if vertex is not None:
        if callback is not None:
            callback(0, vertex, problem.objective(vertex.as_array()))
        return vertex, 0

    xy = _project(start.as_array(), box)
    f = problem.objective(xy)
    if callback is not None:
        callback(0, Point.from_array(xy), f)

    gnorm = _stationarity(problem, xy, box)
    for it in range(1, max_iter + 1):
        if gnorm <= tol:
            return Point.from_array(xy), it - 1

        candidate, f_candidate = None, None
        f_accept = f - 4.0 * np.finfo(float).eps * abs(f)

        grad = problem.gradient(xy)
        try:
            newton = xy - np.linalg.solve(problem.hessian(xy), grad)
        except np.linalg.LinAlgError:
            newton = None
        if newton is not None and np.all(np.isfinite(newton)):
            newton = _project(newton, box)
            f_newton = problem.objective(newton)
            if f_newton < f_accept:
                candidate, f_candidate = newton, f_newton

        if candidate is None:
            diff = problem.anchors - xy
            coef = problem.weights / np.sqrt(np.einsum("ij,ij->i", diff, diff) + problem.epsilon)
            target = _project(coef @ problem.anchors / np.sum(coef), box)
            step = 1.0
            while step >= 1e-12:
                trial = xy + step * (target - xy)
                f_trial = problem.objective(trial)
                if f_trial < f_accept:
                    candidate, f_candidate = trial, f_trial
                    break
                step *= 0.5

        if candidate is None:
            logger.debug(f"Weber descent stalled at ({xy[0]:.6f}, {xy[1]:.6f}), gradient norm {gnorm:.3e}")
            return Point.from_array(xy), it - 1

        xy, f = candidate, f_candidate
        gnorm = _stationarity(problem, xy, box)
        if callback is not None:
            callback(it, Point.from_array(xy), f)

    if gnorm <= tol:
        return Point.from_array(xy), max_iter
    raise ConvergenceError("Weber iteration did not reach tolerance",
                           last_iterate=(float(xy[0]), float(xy[1])), gradient_norm=gnorm)


def slsqp_location(problem, start, tol=1e-6, max_iter=10_000, box=None):
    """
    Solve the same smoothed location problem with scipy's SLSQP

    Returns:
        Tuple (Point, iterations)
    """
    vertex = anchor_optimum(problem, box)
    if vertex is not None:
        return vertex, 0

    x0 = _project(start.as_array(), box)
    scale = problem.total_weight
    bounds = None if box is None else [box, box]
    result = optimize.minimize(
        lambda p: problem.objective(p) / scale,
        x0,
        jac=lambda p: problem.gradient(p) / scale,
        method="SLSQP",
        bounds=bounds,
        options={"maxiter": max_iter, "ftol": min(tol, 1e-6) * 1e-4},
    )
    xy = _project(np.asarray(result.x, dtype=float), box)
    if not result.success:
        if problem.objective(xy) <= problem.objective(x0):
            logger.debug(f"SLSQP stopped early ({result.message}); keeping its improved iterate")
        else:
            raise ConvergenceError(f"SLSQP failed: {result.message}",
                                   last_iterate=(float(xy[0]), float(xy[1])),
                                   gradient_norm=_stationarity(problem, xy, box))
    return Point.from_array(xy), int(result.nit)


def case3_weber_problem(inst, q0):
    """Fixed-Q_0 location problem: supplier weight r_0*Q_0, retailer weights r_i*mu_i"""
    anchors = np.vstack([inst.supplier_location.as_array(), inst.coords])
    weights = np.concatenate([[inst.transport.trunk_rate * q0], inst.transport.last_rate * inst.mus])
    if not np.any(weights > 0):
        # Zero rates: location is irrelevant, any anchor works
        weights = np.ones_like(weights)
    return WeberProblem(anchors, weights, inst.epsilon)


class QSearch:
    """Grid search over Q_0 in [Q_lb, 2 Q_lb] with an inner location solve per grid point"""

    def __init__(self, config=None):
        """
        Initialize Q-search

        Args:
            config: Solver configuration dictionary (q_steps, weber_tol,
                weber_max_iter, inner, refine, workers)
        """
        config = config or {}
        self.steps = int(config.get("q_steps", 200))
        self.tol = float(config.get("weber_tol", 1e-6))
        self.max_iter = int(config.get("weber_max_iter", 10_000))
        self.inner = str(config.get("inner", "weiszfeld")).lower()
        self.refine = bool(config.get("refine", False))
        self.workers = int(config.get("workers", 1))
        self.max_refine_steps = int(config.get("max_refine_steps", 50))

        if self.steps < 2:
            raise ArgumentError(f"Q-search needs at least 2 grid points, got {self.steps}")
        if self.inner not in INNER_SOLVERS:
            raise ArgumentError(f"Unknown inner solver {self.inner!r} (choose from {', '.join(INNER_SOLVERS)})")
        if not self.tol > 0:
            raise DomainError(f"weber_tol must be > 0, got {self.tol}")

    def _locate(self, inst, q0, start, box):
        problem = case3_weber_problem(inst, q0)
        try:
            if self.inner == "slsqp":
                return slsqp_location(problem, start, self.tol, self.max_iter, box)
            return weber_solve(problem, start, self.tol, self.max_iter, box)
        except ConvergenceError as e:
            raise e.with_q0(q0) from e

    def _evaluate(self, inst, q0, start, box):
        loc, iterations = self._locate(inst, q0, start, box)
        profit = csm_case3_objective(inst, q0, loc).total
        return SearchPoint(float(profit), float(q0), loc.x, loc.y), iterations

    def search(self, inst):
        """
        Run Q-search on a quantity-distance instance

        Returns:
            CsmSolution at the best evaluated tuple (ties go to the smaller Q_0)
        """
        _require_mode(inst, TransportMode.QUANTITY_DISTANCE, "q_search")
        started = time.perf_counter()

        q_lb = central_floor(inst)
        if q_lb <= 0:
            raise SearchRangeError(f"Service floor sum F_i^-1(gamma) = {q_lb:.4f} must be positive for Q-search")
        grid = np.linspace(q_lb, 2.0 * q_lb, self.steps)
        box = search_box(inst)
        centroid = center_of_gravity(inst)

        if self.workers > 1:
            # Independent points, each started from the centroid
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                results = list(pool.map(lambda q: self._evaluate(inst, q, centroid, box), grid))
        else:
            results = []
            start = centroid
            for q0 in grid:
                point, iterations = self._evaluate(inst, q0, start, box)
                results.append((point, iterations))
                start = Point(point.x, point.y)
                logger.debug(f"Q-search Q_0={q0:.2f}: DC=({point.x:.2f}, {point.y:.2f}), profit={point.profit:.2f}")

        trace = [point for point, _ in results]
        iterations = sum(it for _, it in results)
        best = trace[0]
        for point in trace[1:]:
            if point.profit > best.profit:
                best = point

        refine_steps = 0
        if self.refine:
            best, extra, refine_steps, iterations = self._refine(inst, best, q_lb, box, iterations)
            trace.extend(extra)

        loc = Point(best.x, best.y)
        breakdown = csm_case3_objective(inst, best.q0, loc)
        d0, _ = _leg_distances(inst, loc)
        beta = (inst.econ.b - inst.econ.c - inst.transport.trunk_rate * d0) / inst.econ.overage_underage_span
        runtime = time.perf_counter() - started

        logger.info(f"Q-search solved: n={inst.n}, Q_0={best.q0:.2f} in [{q_lb:.2f}, {2 * q_lb:.2f}], "
                    f"DC=({best.x:.2f}, {best.y:.2f}), expected profit={best.profit:.2f}, "
                    f"{len(trace)} points, {runtime:.2f}s")
        return CsmSolution(
            q0=best.q0,
            dc_location=loc,
            expected_profit=breakdown.total,
            breakdown=breakdown,
            diagnostics=CsmDiagnostics(
                grid_points=len(grid),
                weber_iterations=iterations,
                floor_binding=bool(best.q0 <= q_lb * (1 + 1e-12)),
                q_lower_bound=q_lb,
                refine_steps=refine_steps,
                inner_solver=self.inner,
                runtime_seconds=runtime,
            ),
            mode=TransportMode.QUANTITY_DISTANCE,
            fractile=float(beta),
            trace=tuple(trace),
        )

    def _refine(self, inst, best, q_lb, box, iterations):
        """
        Alternate the closed-form Q_0 at the current DC with a new location solve

        Every accepted move raises profit, so the result never loses to the grid.
        """
        extra = []
        steps = 0
        for _ in range(self.max_refine_steps):
            d0, _ = _leg_distances(inst, Point(best.x, best.y))
            q_new, _, _ = _closed_form_q0(inst, inst.transport.trunk_rate * d0)
            q_new = float(np.clip(q_new, q_lb, 2.0 * q_lb))
            if abs(q_new - best.q0) <= 1e-9 * max(1.0, best.q0):
                break
            point, its = self._evaluate(inst, q_new, Point(best.x, best.y), box)
            iterations += its
            point = replace(point, refined=True)
            extra.append(point)
            if point.profit <= best.profit:
                break
            best = point
            steps += 1
        return best, extra, steps, iterations


def q_search(inst, steps=200, tol=1e-6, max_iter=10_000, inner="weiszfeld", refine=False, workers=1):
    """
    Q-search for the quantity-distance centralized model

    Args:
        inst: Instance in QUANTITY_DISTANCE mode
        steps: Number of grid points over [Q_lb, 2 Q_lb] (>= 2)
        tol: Inner location solver tolerance
        max_iter: Inner iteration limit
        inner: 'weiszfeld' or 'slsqp'
        refine: Polish the best grid point by alternating closed-form Q_0 and location
        workers: Thread count for grid evaluation

    Returns:
        CsmSolution
    """
    return QSearch({
        "q_steps": steps, "weber_tol": tol, "weber_max_iter": max_iter,
        "inner": inner, "refine": refine, "workers": workers,
    }).search(inst)


def solve_at_location(inst, loc, mode=None):
    """Closed-form Q_0 with the DC fixed at loc"""
    mode = inst.mode if mode is None else TransportMode.parse(mode)
    d0, _ = _leg_distances(inst, loc)
    q0, beta, binding = _closed_form_q0(inst, _trunk_marginal(inst, mode, d0))
    breakdown = csm_expected_profit(inst, q0, loc, mode=mode)
    return q0, beta, binding, breakdown


def retailer_as_dc(inst, opt):
    """
    Place the DC at the retailer nearest the unconstrained optimum and re-optimise Q_0

    Args:
        inst: Instance
        opt: CsmSolution carrying a dc_location

    Returns:
        CsmSolution with retailer_dc set (retailer id and separation distance)
    """
    if opt.dc_location is None:
        raise ArgumentError("retailer_as_dc needs a solution with a DC location")
    separations = distances_from(opt.dc_location.as_array(), inst.coords, 0.0)
    idx = min(range(inst.n), key=lambda i: (separations[i], inst.retailers[i].id))
    chosen = inst.retailers[idx]

    q0, beta, binding, breakdown = solve_at_location(inst, chosen.location, opt.mode)
    logger.info(f"Retailer-as-DC: retailer {chosen.id} at ({chosen.location.x:.1f}, {chosen.location.y:.1f}), "
                f"{separations[idx]:.1f} mi from the optimal DC; Q_0={q0:.2f}, expected profit={breakdown.total:.2f} "
                f"(gap {opt.expected_profit - breakdown.total:.2f})")
    return CsmSolution(
        q0=q0,
        dc_location=chosen.location,
        expected_profit=breakdown.total,
        breakdown=breakdown,
        diagnostics=CsmDiagnostics(floor_binding=binding, q_lower_bound=central_floor(inst)),
        mode=opt.mode,
        fractile=beta,
        retailer_dc=RetailerDcChoice(chosen.id, chosen.location, float(separations[idx])),
    )


@dataclass(frozen=True)
class ProfileEntry:
    retailer_id: int
    separation: float
    q0: float
    expected_profit: float


def retailer_dc_profile(inst, opt):
    """Expected profit (with re-optimised Q_0) when the DC sits at each retailer in turn"""
    if opt.dc_location is None:
        raise ArgumentError("retailer_dc_profile needs a solution with a DC location")
    entries = []
    for r in sorted(inst.retailers, key=lambda r: r.id):
        q0, _, _, breakdown = solve_at_location(inst, r.location, opt.mode)
        entries.append(ProfileEntry(r.id, distance(opt.dc_location, r.location), q0, breakdown.total))
    return entries


class CsmSolver:
    """Dispatch to the centralized solver matching the instance's transport mode"""

    def __init__(self, config=None):
        self.config = config or {}
        self.tol = float(self.config.get("weber_tol", 1e-6))
        self.max_iter = int(self.config.get("weber_max_iter", 10_000))

    def solve(self, inst):
        if inst.mode is TransportMode.QUANTITY:
            return solve_csm_case1(inst)
        if inst.mode is TransportMode.DISTANCE:
            return solve_csm_case2(inst, tol=self.tol, max_iter=self.max_iter)
        return QSearch(self.config).search(inst)


# Non-concavity witness -------------------------------------------------------

@dataclass(frozen=True)
class NonConcavitySetup:
    """
    Single-retailer network used to show the centralized profit is not jointly concave

    Both legs share fixed cost p and unit-mile rate r.
    """

    s: float = 200.0
    c: float = 50.0
    v: float = 20.0
    b: float = 25.0
    p: float = 100.0
    r: float = 0.05
    supplier: Point = Point(100.0, 100.0)
    retailer: Point = Point(500.0, 500.0)
    dc: Point = Point(300.0, 300.0)
    q0: float = 1000.0
    mu: float = 100.0
    sigma: float = 10.0
    epsilon: float = 0.0

    def to_instance(self):
        """Equivalent quantity-distance Instance (epsilon floored at the default smoothing)"""
        extent = max(1000.0, self.supplier.x, self.supplier.y, self.retailer.x, self.retailer.y)
        return Instance(
            supplier_location=self.supplier,
            retailers=(Retailer(0, self.retailer, NormalDist(self.mu, self.sigma)),),
            econ=EconomicParams(s=self.s, w=min(max(100.0, self.c), self.s), c=self.c, v=self.v, b=self.b),
            transport=TransportParams(
                mode=TransportMode.QUANTITY_DISTANCE,
                direct_fixed=self.p, direct_rate=self.r,
                trunk_fixed=self.p, trunk_rate=self.r,
                last_fixed=self.p, last_rate=self.r,
            ),
            epsilon=max(self.epsilon, DEFAULT_EPSILON),
            map_size=extent,
        )


def _distance_derivatives(x, y, a, b, epsilon):
    dx, dy = x - a, y - b
    d = math.sqrt(dx * dx + dy * dy + epsilon)
    if d == 0.0:
        raise SingularityError(f"DC coincides with the facility at ({a}, {b}) and epsilon = 0")
    grad = np.array([dx / d, dy / d])
    hess = np.array([[1.0 / d - dx * dx / d ** 3, -dx * dy / d ** 3],
                     [-dx * dy / d ** 3, 1.0 / d - dy * dy / d ** 3]])
    return grad, hess


def hessian_matrix(setup):
    """
    Analytic Hessian of the single-retailer case-3 profit in (Q_0, x, y)

    The supplier leg carries r * Q_0 * d_0 and the last mile r * mu * d_1.
    """
    x, y = setup.dc.x, setup.dc.y
    g0, h0 = _distance_derivatives(x, y, setup.supplier.x, setup.supplier.y, setup.epsilon)
    _, h1 = _distance_derivatives(x, y, setup.retailer.x, setup.retailer.y, setup.epsilon)

    H = np.zeros((3, 3))
    # density term underflows to 0 far in the tail
    H[0, 0] = -(setup.b - setup.v) * std_pdf((setup.q0 - setup.mu) / setup.sigma) / setup.sigma
    H[0, 1:] = -setup.r * g0
    H[1:, 0] = -setup.r * g0
    H[1:, 1:] = -setup.r * setup.q0 * h0 - setup.r * setup.mu * h1
    return H


def hessian_quadratic_form(setup, z):
    """z^T H z for the analytic Hessian at the setup's point"""
    z = np.asarray(z, dtype=float).reshape(3)
    return float(z @ hessian_matrix(setup) @ z)


def finite_difference_quadratic_form(inst, q0, loc, z, h=1e-3):
    """Central second difference of csm_case3_objective along direction z = (dQ_0, dx, dy)"""
    z = np.asarray(z, dtype=float).reshape(3)

    def f(t):
        return csm_case3_objective(inst, q0 + t * z[0], Point(loc.x + t * z[1], loc.y + t * z[2])).total

    return (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h)


def finite_difference_hessian(inst, q0, loc, h=1e-3):
    """Central finite-difference Hessian of csm_case3_objective in (Q_0, x, y)"""
    base = np.array([q0, loc.x, loc.y], dtype=float)

    def f(p):
        return csm_case3_objective(inst, p[0], Point(p[1], p[2])).total

    H = np.zeros((3, 3))
    eye = np.eye(3) * h
    for i in range(3):
        for j in range(i, 3):
            value = (f(base + eye[i] + eye[j]) - f(base + eye[i] - eye[j])
                     - f(base - eye[i] + eye[j]) + f(base - eye[i] - eye[j])) / (4.0 * h * h)
            H[i, j] = H[j, i] = value
    return H
