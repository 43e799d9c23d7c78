"""
DSM - Decentralized system: each retailer solves its own newsvendor problem against the supplier
"""
import logging
from dataclasses import dataclass

import numpy as np

from core.model import ProfitBreakdown, TransportMode, direct_distances, transport_cost
from core.stochastics import clamp_probability, loss_terms, std_quantile
from utils.errors import ArgumentError, DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DsmSolution:
    """
    Optimal decentralized order quantities

    Attributes:
        quantities: Q_i per retailer
        retailer_profits: Expected profit of each retailer's subproblem (before K_0)
        total_profit: Sum of retailer profits minus K_0
        floor_binding: True where the gamma floor, not the fractile, sets Q_i
        fractiles: Unclamped critical fractiles beta_i
        breakdown: ProfitBreakdown of the total
    """

    quantities: np.ndarray
    retailer_profits: np.ndarray
    total_profit: float
    floor_binding: tuple
    fractiles: np.ndarray
    breakdown: ProfitBreakdown

    def to_dict(self):
        return {
            "quantities": [float(q) for q in self.quantities],
            "retailer_profits": [float(p) for p in self.retailer_profits],
            "total_profit": self.total_profit,
            "floor_binding": list(self.floor_binding),
            "fractiles": [float(b) for b in self.fractiles],
            "breakdown": self.breakdown.to_dict(),
        }


@dataclass(frozen=True)
class PartyPayoffs:
    supplier: float
    retailers: tuple

    @property
    def total(self):
        return self.supplier + sum(self.retailers)


def dsm_fractiles(inst):
    """
    Critical fractile beta_i of every retailer for the instance's transport mode

    QUANTITY: (b - c - rs) / (b - v); DISTANCE: (b - c) / (b - v);
    QUANTITY_DISTANCE: (b - c - rs * ds_i) / (b - v)
    """
    econ = inst.econ
    rs = inst.transport.direct_rate
    mode = inst.transport.mode
    if mode is TransportMode.QUANTITY:
        marginal = np.full(inst.n, rs)
    elif mode is TransportMode.DISTANCE:
        marginal = np.zeros(inst.n)
    else:
        marginal = rs * direct_distances(inst)
    return (econ.b - econ.c - marginal) / econ.overage_underage_span


def service_floor(inst):
    """F_i^{-1}(gamma) per retailer"""
    return inst.mus + inst.sigmas * std_quantile(inst.econ.gamma)


def _check_quantities(inst, quantities):
    q = np.asarray(quantities, dtype=float)
    if q.shape[-1:] != (inst.n,):
        raise ArgumentError(f"Expected {inst.n} order quantities, got shape {q.shape}")
    if not np.all(np.isfinite(q)) or np.any(q < 0):
        raise DomainError("Order quantities must be finite and nonnegative")
    return q


def _retailer_terms(inst, q):
    """Per-retailer expected profit components; q may carry leading batch axes"""
    econ = inst.econ
    tr = inst.transport
    overage, underage = loss_terms(inst.mus, inst.sigmas, q)
    revenue = econ.s * inst.mus * np.ones_like(q)
    shortage = econ.b * underage
    salvage = econ.v * overage
    procurement = econ.c * q
    transport = transport_cost(tr.mode, tr.direct_fixed, tr.direct_rate, q, direct_distances(inst))
    fixed = inst.retailer_fixed_costs * np.ones_like(q)
    return revenue, shortage, salvage, procurement, transport, fixed


def dsm_retailer_profits(inst, quantities):
    """
    Expected profit of each retailer's subproblem

    Args:
        inst: Instance
        quantities: Array of shape (..., n); leading axes are evaluated independently

    Returns:
        Array of the same shape: s*mu_i - b*E[x-Q]^+ + v*E[Q-x]^+ - c*Q - TS_i - K_i
    """
    q = _check_quantities(inst, quantities)
    revenue, shortage, salvage, procurement, transport, fixed = _retailer_terms(inst, q)
    return revenue - shortage + salvage - procurement - transport - fixed


def dsm_expected_profit(inst, quantities):
    """
    Expected total profit of the decentralized system

    Args:
        inst: Instance
        quantities: One order quantity per retailer

    Returns:
        ProfitBreakdown whose total is sum_i Pi_i(Q_i) - K_0
    """
    q = _check_quantities(inst, quantities)
    if q.ndim != 1:
        raise ArgumentError("dsm_expected_profit takes a single vector of quantities")
    revenue, shortage, salvage, procurement, transport, fixed = _retailer_terms(inst, q)
    return ProfitBreakdown(
        revenue=float(np.sum(revenue)),
        shortage=float(np.sum(shortage)),
        salvage=float(np.sum(salvage)),
        procurement=float(np.sum(procurement)),
        direct_transport=float(np.sum(transport)),
        fixed=float(np.sum(fixed)) + inst.econ.supplier_fixed_cost,
    )


def dsm_realized_profit(inst, quantities, demands):
    """
    Profit once demands are observed

    Args:
        inst: Instance
        quantities: Q_i per retailer
        demands: DemandSample or array of realized demands, shape (n,) or (samples, n)

    Returns:
        ProfitBreakdown; with a batch of samples each field is an array over samples
    """
    econ = inst.econ
    tr = inst.transport
    q = _check_quantities(inst, quantities)
    d = np.asarray(demands, dtype=float)
    if d.shape[-1:] != (inst.n,):
        raise ArgumentError(f"Expected {inst.n} demands per sample, got shape {d.shape}")

    transport = transport_cost(tr.mode, tr.direct_fixed, tr.direct_rate, q, direct_distances(inst))
    return ProfitBreakdown(
        revenue=np.sum(econ.s * d, axis=-1),
        shortage=np.sum(econ.b * np.maximum(d - q, 0.0), axis=-1),
        salvage=np.sum(econ.v * np.maximum(q - d, 0.0), axis=-1),
        procurement=float(econ.c * np.sum(q)),
        direct_transport=float(np.sum(transport)),
        fixed=float(np.sum(inst.retailer_fixed_costs)) + econ.supplier_fixed_cost,
    )


def solve_dsm(inst):
    """
    Closed-form decentralized solution

    Q_i = max{F_i^{-1}(gamma), F_i^{-1}(beta_i)} with beta_i clamped into (0, 1)

    Args:
        inst: Instance

    Returns:
        DsmSolution
    """
    betas = dsm_fractiles(inst)
    if np.any(betas <= 0):
        logger.warning(f"{int(np.sum(betas <= 0))}/{inst.n} DSM fractiles are non-positive; "
                       f"the service floor gamma={inst.econ.gamma} sets those orders")

    fractile_q = inst.mus + inst.sigmas * std_quantile(clamp_probability(betas))
    floor_q = service_floor(inst)
    binding = floor_q >= fractile_q
    quantities = np.maximum(np.maximum(floor_q, fractile_q), 0.0)

    retailer_profits = dsm_retailer_profits(inst, quantities)
    breakdown = dsm_expected_profit(inst, quantities)
    total = float(np.sum(retailer_profits)) - inst.econ.supplier_fixed_cost

    logger.info(f"DSM solved: n={inst.n}, mode={inst.mode.value}, sum Q={np.sum(quantities):.2f}, "
                f"floor binding for {int(np.sum(binding))} retailers, expected profit={total:.2f}")
    return DsmSolution(
        quantities=quantities,
        retailer_profits=retailer_profits,
        total_profit=total,
        floor_binding=tuple(bool(x) for x in binding),
        fractiles=betas,
        breakdown=breakdown,
    )


def party_payoffs(inst, quantities):
    """
    Split the decentralized profit between supplier and retailers at wholesale price w

    Returns:
        PartyPayoffs with supplier = sum (w - c) Q_i - K_0 and
        retailer_i = s*mu_i - b*E[x-Q]^+ + v*E[Q-x]^+ - w*Q_i - TS_i - K_i
    """
    q = _check_quantities(inst, quantities)
    econ = inst.econ
    supplier = float(np.sum((econ.w - econ.c) * q)) - econ.supplier_fixed_cost
    retailers = dsm_retailer_profits(inst, q) - (econ.w - econ.c) * q
    return PartyPayoffs(supplier=supplier, retailers=tuple(float(x) for x in retailers))
