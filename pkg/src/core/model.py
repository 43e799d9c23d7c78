"""
Model - Supply-chain network types, geometry helpers and instance generation
"""
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from core.stochastics import NormalDist, RngStream
from utils.errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

DEFAULT_EPSILON = 1e-9


class TransportMode(str, Enum):
    """How shipment cost depends on quantity and distance"""

    QUANTITY = "quantity"
    DISTANCE = "distance"
    QUANTITY_DISTANCE = "quantity_distance"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(m.value for m in cls)
            raise ConfigurationError(f"Unknown transport mode {value!r} (choose from {choices})")


@dataclass(frozen=True)
class Point:
    """Planar location in miles"""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise DomainError(f"Point coordinates must be finite, got ({self.x}, {self.y})")

    def as_array(self):
        return np.array([self.x, self.y], dtype=float)

    @classmethod
    def from_array(cls, xy):
        return cls(float(xy[0]), float(xy[1]))


@dataclass(frozen=True)
class Retailer:
    id: int
    location: Point
    demand: NormalDist
    fixed_cost: float = 0.0

    def __post_init__(self):
        if self.fixed_cost < 0:
            raise ConfigurationError(f"Retailer {self.id}: fixed_cost must be >= 0")


@dataclass(frozen=True)
class EconomicParams:
    """
    Prices and costs shared by every retailer

    Attributes:
        s: Selling price per unit
        w: Wholesale price per unit (moves profit between parties only)
        c: Supplier unit cost
        v: Salvage value per unit
        b: Shortage cost per unit
        gamma: Service-level floor, F_i(Q_i) >= gamma
        supplier_fixed_cost: K_0
    """

    s: float = 200.0
    w: float = 100.0
    c: float = 50.0
    v: float = 20.0
    b: float = 100.0
    gamma: float = 0.3
    supplier_fixed_cost: float = 0.0

    def __post_init__(self):
        if not self.s > self.c > self.v:
            raise ConfigurationError(f"Prices must satisfy s > c > v, got s={self.s}, c={self.c}, v={self.v}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not self.c <= self.w <= self.s:
            raise ConfigurationError(f"Wholesale price must satisfy c <= w <= s, got w={self.w}")
        if not self.b > self.v:
            raise ConfigurationError(f"Shortage cost must exceed salvage value, got b={self.b}, v={self.v}")
        if self.supplier_fixed_cost < 0:
            raise ConfigurationError("supplier_fixed_cost must be >= 0")

    @property
    def overage_underage_span(self):
        """b - v, the denominator of every critical fractile"""
        return self.b - self.v


@dataclass(frozen=True)
class TransportParams:
    """
    Fixed and variable shipment costs, uniform across retailers

    direct_* apply to supplier -> retailer shipments (decentralized system),
    trunk_* to supplier -> DC and last_* to DC -> retailer (centralized system).
    """

    mode: TransportMode = TransportMode.QUANTITY_DISTANCE
    direct_fixed: float = 100.0
    direct_rate: float = 0.05
    trunk_fixed: float = 200.0
    trunk_rate: float = 0.03
    last_fixed: float = 100.0
    last_rate: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "mode", TransportMode.parse(self.mode))
        for name in ("direct_fixed", "direct_rate", "trunk_fixed", "trunk_rate", "last_fixed", "last_rate"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigurationError(f"Transport parameter {name} must be finite and >= 0, got {value}")


def transport_cost(mode, fixed, rate, quantity, dist):
    """
    Shipment cost for one leg under the given transport mode

    Args:
        mode: TransportMode
        fixed: Bundling cost per shipment
        rate: Per unit, per mile, or per unit-mile rate depending on mode
        quantity: Units shipped (scalar or array)
        dist: Miles travelled (scalar or array)
    """
    q = np.asarray(quantity, dtype=float)
    d = np.asarray(dist, dtype=float)
    if mode is TransportMode.QUANTITY:
        variable = rate * q
    elif mode is TransportMode.DISTANCE:
        variable = rate * d * np.ones_like(q)
    else:
        variable = rate * q * d
    return fixed + variable


@dataclass(frozen=True)
class ProfitBreakdown:
    """
    Expected or realized profit split into its components (all in dollars)

    total = revenue - shortage + salvage - procurement - transport - fixed
    """

    revenue: float
    shortage: float
    salvage: float
    procurement: float
    fixed: float
    direct_transport: float = 0.0
    trunk_transport: float = 0.0
    last_mile_transport: float = 0.0

    @property
    def transport(self):
        return self.direct_transport + self.trunk_transport + self.last_mile_transport

    @property
    def total(self):
        return self.revenue - self.shortage + self.salvage - self.procurement - self.transport - self.fixed

    @property
    def net_revenue(self):
        """Everything except transport; total = net_revenue - transport"""
        return self.total + self.transport

    def to_dict(self):
        return {
            "revenue": self.revenue,
            "shortage": self.shortage,
            "salvage": self.salvage,
            "procurement": self.procurement,
            "direct_transport": self.direct_transport,
            "trunk_transport": self.trunk_transport,
            "last_mile_transport": self.last_mile_transport,
            "fixed": self.fixed,
            "total": self.total,
        }


@dataclass(frozen=True)
class Instance:
    """Full network description: supplier, retailers, economics, transport and geometry"""

    supplier_location: Point
    retailers: tuple
    econ: EconomicParams
    transport: TransportParams
    epsilon: float = DEFAULT_EPSILON
    map_size: float = 1000.0
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "retailers", tuple(self.retailers))
        if not self.retailers:
            raise ConfigurationError("An instance needs at least one retailer")
        if not self.epsilon > 0:
            raise ConfigurationError(f"epsilon must be > 0, got {self.epsilon}")
        if not self.map_size > 0:
            raise ConfigurationError(f"map_size must be > 0, got {self.map_size}")
        for label, point in [("supplier", self.supplier_location)] + \
                            [(f"retailer {r.id}", r.location) for r in self.retailers]:
            if not (0.0 <= point.x <= self.map_size and 0.0 <= point.y <= self.map_size):
                raise ConfigurationError(f"{label} at ({point.x}, {point.y}) lies outside the {self.map_size} mi map")

    @property
    def n(self):
        return len(self.retailers)

    @property
    def mode(self):
        return self.transport.mode

    @property
    def mus(self):
        return np.array([r.demand.mu for r in self.retailers], dtype=float)

    @property
    def sigmas(self):
        return np.array([r.demand.sigma for r in self.retailers], dtype=float)

    @property
    def retailer_fixed_costs(self):
        return np.array([r.fixed_cost for r in self.retailers], dtype=float)

    @property
    def coords(self):
        """Retailer coordinates, shape (n, 2)"""
        return np.array([[r.location.x, r.location.y] for r in self.retailers], dtype=float)

    def with_econ(self, **changes):
        return replace(self, econ=replace(self.econ, **changes))

    def with_transport(self, **changes):
        return replace(self, transport=replace(self.transport, **changes))

    def scaled(self, new_map_size):
        """Same relative layout on a map of a different size"""
        k = new_map_size / self.map_size
        retailers = tuple(
            replace(r, location=Point(min(r.location.x * k, new_map_size), min(r.location.y * k, new_map_size)))
            for r in self.retailers
        )
        supplier = Point(min(self.supplier_location.x * k, new_map_size),
                         min(self.supplier_location.y * k, new_map_size))
        return replace(self, supplier_location=supplier, retailers=retailers, map_size=float(new_map_size))


@dataclass(frozen=True)
class DemandSample:
    """One realized demand per retailer"""

    values: tuple = field(default_factory=tuple)

    def __post_init__(self):
        values = tuple(float(x) for x in self.values)
        if any(not math.isfinite(x) or x < 0 for x in values):
            raise DomainError("Realized demands must be finite and nonnegative")
        object.__setattr__(self, "values", values)

    def as_array(self):
        return np.array(self.values, dtype=float)

    def __array__(self, dtype=None, copy=None):
        return np.array(self.values, dtype=dtype or float)

    def __len__(self):
        return len(self.values)


def distance(a, b, epsilon=0.0):
    """
    Smoothed Euclidean distance [(ax - bx)^2 + (ay - by)^2 + epsilon]^(1/2)

    Args:
        a: Point
        b: Point
        epsilon: Smoothing term in square miles (>= 0)
    """
    if epsilon < 0:
        raise DomainError(f"epsilon must be >= 0, got {epsilon}")
    dx = a.x - b.x
    dy = a.y - b.y
    return math.sqrt(dx * dx + dy * dy + epsilon)


def distances_from(xy, coords, epsilon=0.0):
    """Vectorised smoothed distances from one location (length-2 array) to rows of coords"""
    diff = np.asarray(coords, dtype=float) - np.asarray(xy, dtype=float)
    return np.sqrt(np.einsum("...i,...i->...", diff, diff) + epsilon)


def direct_distances(inst):
    """Exact supplier -> retailer distances ds_i (no smoothing, endpoints are fixed)"""
    return distances_from(inst.supplier_location.as_array(), inst.coords, 0.0)


class InstanceGenerator:
    """Draw random networks from the generation ranges of the experiment settings"""

    def __init__(self, config=None):
        """
        Initialize instance generator

        Args:
            config: Settings dictionary with optional 'generation', 'economics'
                and 'transport' sections; missing keys fall back to the defaults
        """
        config = config or {}
        generation = config.get("generation", {}) or {}
        economics = config.get("economics", {}) or {}
        transport = config.get("transport", {}) or {}

        self.map_size = float(generation.get("map_size", 1000.0))
        self.mu_range = self._range(generation.get("mu_range", [100.0, 200.0]), "mu_range")
        self.sigma_range = self._range(generation.get("sigma_range", [10.0, 20.0]), "sigma_range")
        self.epsilon = float(generation.get("epsilon", DEFAULT_EPSILON))
        self.retailer_fixed_cost = float(economics.get("retailer_fixed_cost", 0.0))

        if self.map_size <= 0:
            raise ConfigurationError(f"map_size must be > 0, got {self.map_size}")
        if self.sigma_range[0] <= 0:
            raise ConfigurationError("sigma_range must be strictly positive")

        self.econ = EconomicParams(
            s=float(economics.get("s", 200.0)),
            w=float(economics.get("w", 100.0)),
            c=float(economics.get("c", 50.0)),
            v=float(economics.get("v", 20.0)),
            b=float(economics.get("b", 100.0)),
            gamma=float(economics.get("gamma", 0.3)),
            supplier_fixed_cost=float(economics.get("supplier_fixed_cost", 0.0)),
        )
        self.transport = TransportParams(
            mode=TransportMode.parse(transport.get("mode", TransportMode.QUANTITY_DISTANCE.value)),
            direct_fixed=float(transport.get("direct_fixed", 100.0)),
            direct_rate=float(transport.get("direct_rate", 0.05)),
            trunk_fixed=float(transport.get("trunk_fixed", 200.0)),
            trunk_rate=float(transport.get("trunk_rate", 0.03)),
            last_fixed=float(transport.get("last_fixed", 100.0)),
            last_rate=float(transport.get("last_rate", 0.05)),
        )

    @staticmethod
    def _range(value, name):
        try:
            lo, hi = (float(x) for x in value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{name} must be a [lo, hi] pair, got {value!r}")
        if lo > hi:
            raise ConfigurationError(f"{name} has lo > hi: [{lo}, {hi}]")
        return lo, hi

    def generate(self, n, seed):
        """
        Generate a network

        Args:
            n: Number of retailers (>= 1)
            seed: 64-bit unsigned seed

        Returns:
            Instance, identical for identical (n, seed, config)
        """
        if n < 1:
            raise ConfigurationError(f"Number of retailers must be >= 1, got {n}")

        gen = RngStream(seed, stream_id=0).generator()
        supplier_xy = gen.uniform(0.0, self.map_size, size=2)
        coords = gen.uniform(0.0, self.map_size, size=(n, 2))
        mus = gen.uniform(self.mu_range[0], self.mu_range[1], size=n)
        sigmas = gen.uniform(self.sigma_range[0], self.sigma_range[1], size=n)

        retailers = tuple(
            Retailer(
                id=i,
                location=Point(float(coords[i, 0]), float(coords[i, 1])),
                demand=NormalDist(float(mus[i]), float(sigmas[i])),
                fixed_cost=self.retailer_fixed_cost,
            )
            for i in range(n)
        )

        inst = Instance(
            supplier_location=Point(float(supplier_xy[0]), float(supplier_xy[1])),
            retailers=retailers,
            econ=self.econ,
            transport=self.transport,
            epsilon=self.epsilon,
            map_size=self.map_size,
            seed=int(seed),
        )
        logger.info(f"Generated instance: n={n}, seed={seed}, mode={self.transport.mode.value}, "
                    f"map={self.map_size:g} mi, b={self.econ.b:g}, w={self.econ.w:g}")
        return inst


def generate_instance(n, seed, config=None):
    """Generate a network from the default generation ranges (or the overrides in config)"""
    return InstanceGenerator(config).generate(n, seed)
