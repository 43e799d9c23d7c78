"""
Analysis - DSM vs CSM profit gaps, realized-demand simulation, fulfillment metrics and sensitivity sweeps
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from core.csm import CsmSolver, csm_realized_profit, solve_csm_case1
from core.dsm import dsm_realized_profit, party_payoffs, solve_dsm
from core.model import (
    DemandSample, EconomicParams, Instance, Point, ProfitBreakdown, Retailer, TransportMode, TransportParams,
    direct_distances, distances_from,
)
from core.stochastics import NormalDist, RngStream, clamp_probability, partial_expectations, sample_joint, \
    std_quantile, unit_loss
from utils.errors import ArgumentError, ConfigurationError

logger = logging.getLogger(__name__)

SWEEP_PARAMETERS = ("gamma", "map_size", "rates")


# Analytical gaps ---------------------------------------------------------------

@dataclass(frozen=True)
class GapInputs:
    """
    Symmetric network used for the closed-form comparisons

    Every retailer shares demand N(mu, sigma); rates are homogeneous:
    rs for direct shipments, r0 for the trunk and rq for the last mile.
    Fixed shipment costs are aligned (trunk 0, last mile = direct) so they cancel.
    """

    n: int
    sigma: float
    econ: EconomicParams = field(default_factory=EconomicParams)
    rs: float = 0.0
    r0: float = 0.0
    rq: float = 0.0
    mu: float = 150.0
    fixed: float = 0.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        for name in ("rs", "r0", "rq", "fixed"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be >= 0")

    @property
    def sigma0(self):
        return math.sqrt(self.n) * self.sigma

    @property
    def mu0(self):
        return self.n * self.mu

    def to_instance(self, mode=TransportMode.QUANTITY):
        """Instance with the retailers spread along a diagonal of a 1000 mi map"""
        step = 1000.0 / (self.n + 1)
        retailers = tuple(
            Retailer(i, Point(step * (i + 1), step * (i + 1)), NormalDist(self.mu, self.sigma))
            for i in range(self.n)
        )
        transport = TransportParams(
            mode=mode,
            direct_fixed=self.fixed, direct_rate=self.rs,
            trunk_fixed=0.0, trunk_rate=self.r0,
            last_fixed=self.fixed, last_rate=self.rq,
        )
        return Instance(Point(0.0, 0.0), retailers, self.econ, transport)


@dataclass(frozen=True)
class GapResult:
    """
    Centralization gap P_CSM - P_DSM

    Attributes:
        direct: Gap from the two profit evaluators (authoritative)
        closed_form: Textbook chain for the active regime (None when mixed)
        derived_closed_form: Corrected chain for the active regime (None when mixed)
        regime: 'fractile', 'floor' or 'mixed'
        consistent: Whether the textbook chain matches the direct gap
    """

    direct: float
    closed_form: object
    derived_closed_form: object
    regime: str
    consistent: bool


def _agrees(a, b):
    return abs(a - b) <= 1e-6 * (1.0 + abs(b))


def case1_profit_gap(g):
    """
    Quantity-only transport: closed-form vs direct centralization gap

    The regime follows the binding constraint in each system: both on the
    gamma floor, both on the fractile, or mixed.

    Args:
        g: GapInputs

    Returns:
        GapResult
    """
    inst = g.to_instance(TransportMode.QUANTITY)
    dsm = solve_dsm(inst)
    csm = solve_csm_case1(inst)
    direct = csm.expected_profit - dsm.total_profit

    dsm_floor = all(dsm.floor_binding)
    csm_floor = csm.diagnostics.floor_binding
    if dsm_floor and csm_floor:
        regime = "floor"
    elif not any(dsm.floor_binding) and not csm_floor:
        regime = "fractile"
    else:
        regime = "mixed"

    econ = g.econ
    span = econ.overage_underage_span
    n, sigma, sigma0, mu0 = g.n, g.sigma, g.sigma0, g.mu0
    root_n = math.sqrt(n)

    if regime == "fractile":
        zi = float(std_quantile(clamp_probability((econ.b - econ.c - g.rs) / span)))
        z0 = float(std_quantile(clamp_probability((econ.b - econ.c - g.r0) / span)))
        closed = ((g.rs - g.r0 - g.rq) * mu0
                  + (econ.c - econ.v) * (n * sigma * zi - sigma0 * z0)
                  + g.rs * n * sigma * zi - g.r0 * sigma0 * z0
                  + span * root_n * sigma * (root_n * unit_loss(zi) - unit_loss(z0)))
        derived = closed
    elif regime == "floor":
        zg = float(std_quantile(econ.gamma))
        q0 = csm.q0
        # the textbook chain scores the pooled order at z_gamma and multiplies Q_0 by sigma
        closed = -g.rq * mu0 + (g.rs - g.r0) * q0 * sigma + span * root_n * sigma * unit_loss(zg) * (root_n - 1.0)
        derived = (g.rs - g.r0) * q0 - g.rq * mu0 + span * (n * sigma * unit_loss(zg) - sigma0 * unit_loss(root_n * zg))
    else:
        closed = derived = None
        logger.warning(f"Mixed regime (DSM floor binding={dsm_floor}, CSM floor binding={csm_floor}); "
                       f"only the direct gap {direct:.2f} is reported")

    consistent = closed is not None and _agrees(closed, direct)
    if closed is not None and not consistent:
        logger.warning(f"Closed-form gap {closed:.4f} disagrees with direct gap {direct:.4f} in the {regime} regime")
    if derived is not None and not _agrees(derived, direct):
        logger.warning(f"Derived gap {derived:.4f} disagrees with direct gap {direct:.4f}")

    return GapResult(
        direct=float(direct),
        closed_form=None if closed is None else float(closed),
        derived_closed_form=None if derived is None else float(derived),
        regime=regime,
        consistent=consistent,
    )


@dataclass(frozen=True)
class DominanceCertificate:
    delta: float
    z_retailer: float
    z_central: float


def dominance_holds(g):
    """
    Dominance test: delta = rs - r0 - rq > 0 and sqrt(n) * z_beta_i >= z_beta_0

    Returns:
        Tuple (predicate, DominanceCertificate)
    """
    econ = g.econ
    span = econ.overage_underage_span
    delta = g.rs - g.r0 - g.rq
    zi = float(std_quantile(clamp_probability((econ.b - econ.c - g.rs) / span)))
    z0 = float(std_quantile(clamp_probability((econ.b - econ.c - g.r0) / span)))
    holds = delta > 0 and math.sqrt(g.n) * zi >= z0
    return bool(holds), DominanceCertificate(float(delta), zi, z0)


@dataclass(frozen=True)
class PoolingGap:
    """
    Distance-only transport: risk-pooling benefit against extra travel

    Attributes:
        inventory_gap: (b - v) sqrt(n) sigma (sqrt(n) - 1) R(z)
        measured_inventory_gap: (b - v) [sum sigma_i R(z) - sigma_0 R(z)] from partial expectations
        safety_stock_gap: (c - v) (n sigma - sigma_0) z
        transport_gap: sum_i r (d_0 + d_i - ds_i) at the DC (None without an instance)
        transport_delta: CSM minus DSM transport cost under the instance's cost model
        z: Common standardized order level
    """

    inventory_gap: float
    measured_inventory_gap: float
    safety_stock_gap: float
    z: float
    transport_gap: object = None
    transport_delta: object = None

    @property
    def net(self):
        """Pooling benefit minus extra transport; None without a transport side"""
        if self.transport_gap is None:
            return None
        return self.inventory_gap + self.safety_stock_gap - self.transport_gap


def case2_pooling_gap(g, z=None, inst=None, dc=None):
    """
    Risk-pooling gap with a common standardized order level z

    Args:
        g: GapInputs
        z: Common z; defaults to max(z_gamma, z_beta) with beta = (b - c) / (b - v)
        inst: Optional Instance for the transport side
        dc: DC Point for the transport side (required with inst)

    Returns:
        PoolingGap
    """
    econ = g.econ
    if z is None:
        beta = (econ.b - econ.c) / econ.overage_underage_span
        z = max(float(std_quantile(econ.gamma)), float(std_quantile(clamp_probability(beta))))
    z = float(z)
    span = econ.overage_underage_span
    root_n = math.sqrt(g.n)

    closed = span * root_n * g.sigma * (root_n - 1.0) * unit_loss(z)

    single = NormalDist(g.mu, g.sigma)
    pooled = NormalDist(g.mu0, g.sigma0)
    _, under_i = partial_expectations(single, g.mu + z * g.sigma)
    _, under_0 = partial_expectations(pooled, g.mu0 + z * g.sigma0)
    measured = span * (g.n * under_i - under_0)
    safety = (econ.c - econ.v) * (g.n * g.sigma - g.sigma0) * z

    transport_gap = transport_delta = None
    if inst is not None:
        if dc is None:
            raise ArgumentError("case2_pooling_gap needs a DC location with an instance")
        xy = dc.as_array()
        d0 = float(distances_from(xy, inst.supplier_location.as_array()[None, :], 0.0)[0])
        di = distances_from(xy, inst.coords, 0.0)
        ds = direct_distances(inst)
        rate = inst.transport.last_rate
        transport_gap = float(np.sum(rate * (d0 + di - ds)))
        tr = inst.transport
        csm_cost = tr.trunk_fixed + tr.trunk_rate * d0 + np.sum(tr.last_fixed + tr.last_rate * di)
        dsm_cost = np.sum(tr.direct_fixed + tr.direct_rate * ds)
        transport_delta = float(csm_cost - dsm_cost)
        logger.info(f"Pooling benefit {closed + safety:.2f} vs extra transport {transport_gap:.2f}: "
                    f"CSM {'gains' if closed + safety > transport_gap else 'loses'}")

    return PoolingGap(
        inventory_gap=float(closed),
        measured_inventory_gap=float(measured),
        safety_stock_gap=float(safety),
        z=z,
        transport_gap=transport_gap,
        transport_delta=transport_delta,
    )


# Comparison and simulation -----------------------------------------------------

@dataclass(frozen=True)
class ProfitComparison:
    """P_DSM and P_CSM with their revenue/transport split; deltas are CSM minus DSM"""

    dsm: float
    csm: float
    dsm_net_revenue: float
    csm_net_revenue: float
    dsm_transport: float
    csm_transport: float

    @classmethod
    def from_breakdowns(cls, dsm, csm):
        return cls(
            dsm=float(dsm.total),
            csm=float(csm.total),
            dsm_net_revenue=float(dsm.net_revenue),
            csm_net_revenue=float(csm.net_revenue),
            dsm_transport=float(dsm.transport),
            csm_transport=float(csm.transport),
        )

    @property
    def delta(self):
        return self.csm - self.dsm

    @property
    def delta_revenue(self):
        return self.csm_net_revenue - self.dsm_net_revenue

    @property
    def delta_transport(self):
        return self.csm_transport - self.dsm_transport


@dataclass(frozen=True)
class ComparisonReport:
    """
    Expected and realized comparison of both systems on one instance

    Attributes:
        n: Retailer count
        mode: TransportMode
        expected: ProfitComparison of expected profits
        realized: ProfitComparison of realized (or sample-averaged) profits
        m1: mean Q_i / mu_i
        m2: mean Q_i / D_i over retailers with positive demand
        m3: Q_0 / sum mu_i
        m4: Q_0 / sum D_i
        seed: Sample stream seed
        stream_id: Sample stream id
        samples: Demand draws behind the realized figures
        m2_excluded: Retailer ids left out of M2 because D_i = 0
        q0: Central order quantity
        dc_location: DC Point or None
        supplier_payoff: DSM supplier profit at wholesale price w
        retailer_payoff: DSM retailers' combined profit at wholesale price w
    """

    n: int
    mode: TransportMode
    expected: ProfitComparison
    realized: ProfitComparison
    m1: float
    m2: float
    m3: float
    m4: float
    seed: int
    stream_id: int
    samples: int
    q0: float
    dc_location: object
    m2_excluded: tuple = ()
    supplier_payoff: float = float("nan")
    retailer_payoff: float = float("nan")


def _mean_breakdown(bd):
    """Average every field of a batched ProfitBreakdown"""
    return ProfitBreakdown(**{name: float(np.mean(getattr(bd, name))) for name in bd.__dataclass_fields__})


def _sample_metrics(q, q0, demands, ids):
    """Per-sample M2 and M4 plus the ids excluded from M2"""
    positive = demands > 0
    counts = np.sum(positive, axis=-1)
    ratios = np.where(positive, q / np.where(positive, demands, 1.0), 0.0)
    m2 = np.sum(ratios, axis=-1) / np.maximum(counts, 1)
    total = np.sum(demands, axis=-1)
    m4 = q0 / np.where(total > 0, total, np.nan)
    excluded = tuple(int(ids[i]) for i in np.flatnonzero(~np.all(positive.reshape(-1, len(ids)), axis=0)))
    return m2, m4, excluded


def _report(inst, dsm, csm, rng, realized_dsm, realized_csm, m2, m4, excluded, samples):
    payoffs = party_payoffs(inst, dsm.quantities)
    if excluded:
        logger.warning(f"Zero realized demand at retailers {list(excluded)}; excluded from M2")
    return ComparisonReport(
        n=inst.n,
        mode=csm.mode,
        expected=ProfitComparison.from_breakdowns(dsm.breakdown, csm.breakdown),
        realized=ProfitComparison.from_breakdowns(realized_dsm, realized_csm),
        m1=float(np.mean(dsm.quantities / inst.mus)),
        m2=float(m2),
        m3=float(csm.q0 / np.sum(inst.mus)),
        m4=float(m4),
        seed=int(rng.seed),
        stream_id=int(rng.stream_id),
        samples=int(samples),
        q0=float(csm.q0),
        dc_location=csm.dc_location,
        m2_excluded=excluded,
        supplier_payoff=payoffs.supplier,
        retailer_payoff=float(sum(payoffs.retailers)),
    )


def simulate_realized(inst, dsm, csm, rng):
    """
    Evaluate both solutions against one draw of realized demand

    Args:
        inst: Instance both solutions were computed on
        dsm: DsmSolution
        csm: CsmSolution
        rng: RngStream for the demand draw

    Returns:
        ComparisonReport with single-sample realized figures
    """
    draw, _ = sample_joint(inst.mus, inst.sigmas, rng)
    demands = DemandSample(draw)
    ids = np.array([r.id for r in inst.retailers])
    m2, m4, excluded = _sample_metrics(dsm.quantities, csm.q0, demands.as_array(), ids)
    realized_dsm = _mean_breakdown(dsm_realized_profit(inst, dsm.quantities, demands))
    realized_csm = _mean_breakdown(csm_realized_profit(inst, csm, demands))
    return _report(inst, dsm, csm, rng, realized_dsm, realized_csm, m2, m4, excluded, 1)


def simulate_average(inst, dsm, csm, rng, samples, batch_size=10_000):
    """
    Average realized profits and metrics over independent demand draws

    Args:
        inst: Instance
        dsm: DsmSolution
        csm: CsmSolution
        rng: RngStream; each batch consumes one draw of the stream
        samples: Number of joint demand samples (>= 1)
        batch_size: Samples drawn per batch

    Returns:
        ComparisonReport with sample-averaged realized figures
    """
    if samples < 1:
        raise ArgumentError(f"samples must be >= 1, got {samples}")

    ids = np.array([r.id for r in inst.retailers])
    sums_dsm, sums_csm = {}, {}
    m2_sum = m4_sum = 0.0
    m4_count = 0
    excluded = set()
    stream = rng
    remaining = int(samples)
    while remaining > 0:
        size = min(batch_size, remaining)
        demands, stream = sample_joint(inst.mus, inst.sigmas, stream, size=size)
        for sums, bd in ((sums_dsm, dsm_realized_profit(inst, dsm.quantities, demands)),
                         (sums_csm, csm_realized_profit(inst, csm, demands))):
            for name in bd.__dataclass_fields__:
                sums[name] = sums.get(name, 0.0) + float(np.sum(np.broadcast_to(getattr(bd, name), (size,))))
        m2, m4, ex = _sample_metrics(dsm.quantities, csm.q0, demands, ids)
        m2_sum += float(np.sum(m2))
        m4_sum += float(np.nansum(m4))
        m4_count += int(np.sum(np.isfinite(m4)))
        excluded.update(ex)
        remaining -= size

    realized_dsm = ProfitBreakdown(**{k: v / samples for k, v in sums_dsm.items()})
    realized_csm = ProfitBreakdown(**{k: v / samples for k, v in sums_csm.items()})
    m4_mean = m4_sum / m4_count if m4_count else float("nan")
    logger.debug(f"Averaged {samples} demand samples: realized P_DSM={realized_dsm.total:.2f}, "
                 f"P_CSM={realized_csm.total:.2f}")
    return _report(inst, dsm, csm, rng, realized_dsm, realized_csm, m2_sum / samples, m4_mean,
                   tuple(sorted(excluded)), samples)


def solve_both(inst, solver_config=None):
    """Solve DSM and the CSM variant matching the instance's transport mode"""
    return solve_dsm(inst), CsmSolver(solver_config).solve(inst)


def simulate(inst, dsm, csm, rng, samples=1):
    """One realized draw, or an average over samples"""
    if samples <= 1:
        return simulate_realized(inst, dsm, csm, rng)
    return simulate_average(inst, dsm, csm, rng, samples)


def compare(inst, rng, solver_config=None, samples=1):
    """Solve both systems and simulate realized demand"""
    dsm, csm = solve_both(inst, solver_config)
    return simulate(inst, dsm, csm, rng, samples)


# Sensitivity sweeps ------------------------------------------------------------

@dataclass(frozen=True)
class SweepRow:
    parameter: str
    value: object
    report: ComparisonReport


def _parse_rate_pair(value):
    if isinstance(value, str):
        parts = value.split(":")
        if len(parts) != 2:
            raise ArgumentError(f"Rate pair must look like 'r0:ri', got {value!r}")
        value = parts
    try:
        r0, ri = (float(x) for x in value)
    except (TypeError, ValueError):
        raise ArgumentError(f"Rate pair must hold two numbers, got {value!r}")
    if r0 < 0 or ri < 0:
        raise ArgumentError(f"Rates must be >= 0, got {value!r}")
    return r0, ri


def apply_sweep_value(inst, parameter, value):
    """
    Instance variant for one sweep value

    gamma sets the service floor, map_size rescales the layout and a rates
    pair (r0, ri) sets the trunk rate to r0 and both the last-mile and the
    direct rate to ri.
    """
    if parameter == "gamma":
        value = float(value)
        if not 0.0 < value < 1.0:
            raise ArgumentError(f"gamma must lie in (0, 1), got {value}")
        return inst.with_econ(gamma=value)
    if parameter == "map_size":
        value = float(value)
        if not value > 0:
            raise ArgumentError(f"map_size must be > 0, got {value}")
        return inst.scaled(value)
    if parameter == "rates":
        r0, ri = _parse_rate_pair(value)
        return inst.with_transport(trunk_rate=r0, last_rate=ri, direct_rate=ri)
    raise ArgumentError(f"Unknown sweep parameter {parameter!r} (choose from {', '.join(SWEEP_PARAMETERS)})")


def sweep(inst, parameter, values, seed=0, solver_config=None, samples=1, workers=1):
    """
    Re-solve both systems for each parameter value

    Row k draws its demand from stream id k of the given seed, so rows are
    reproducible whether they run in sequence or in parallel.

    Args:
        inst: Template Instance
        parameter: 'gamma', 'map_size' or 'rates'
        values: Values to sweep (rates as (r0, ri) pairs or 'r0:ri' strings)
        seed: Demand sampling seed
        solver_config: Solver section passed to the CSM solver
        samples: Demand draws per row
        workers: Thread count

    Returns:
        List of SweepRow in input order
    """
    values = list(values)
    if not values:
        raise ArgumentError("sweep needs at least one value")
    variants = [apply_sweep_value(inst, parameter, v) for v in values]

    def run(k):
        return SweepRow(parameter, values[k], compare(variants[k], RngStream(seed, k), solver_config, samples))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, range(len(values))))
    else:
        rows = [run(k) for k in range(len(values))]

    logger.info(f"Sweep over {parameter}: {len(rows)} rows, expected delta from "
                f"{rows[0].report.expected.delta:.2f} to {rows[-1].report.expected.delta:.2f}")
    return rows
