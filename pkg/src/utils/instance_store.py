"""
Instance Store - Save and load network instances as versioned JSON documents
"""
import json
import logging
import os

from core.model import EconomicParams, Instance, Point, Retailer, TransportMode, TransportParams
from core.stochastics import NormalDist
from utils.errors import ConfigurationError, DomainError, InstanceFormatError, InstanceVersionError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


def instance_to_dict(inst):
    """Plain key/value tree mirroring the Instance type"""
    return {
        "format_version": FORMAT_VERSION,
        "seed": int(inst.seed),
        "map_size": inst.map_size,
        "epsilon": inst.epsilon,
        "supplier_location": {"x": inst.supplier_location.x, "y": inst.supplier_location.y},
        "econ": {
            "s": inst.econ.s,
            "w": inst.econ.w,
            "c": inst.econ.c,
            "v": inst.econ.v,
            "b": inst.econ.b,
            "gamma": inst.econ.gamma,
            "supplier_fixed_cost": inst.econ.supplier_fixed_cost,
        },
        "transport": {
            "mode": inst.transport.mode.value,
            "direct_fixed": inst.transport.direct_fixed,
            "direct_rate": inst.transport.direct_rate,
            "trunk_fixed": inst.transport.trunk_fixed,
            "trunk_rate": inst.transport.trunk_rate,
            "last_fixed": inst.transport.last_fixed,
            "last_rate": inst.transport.last_rate,
        },
        "retailers": [
            {
                "id": r.id,
                "location": {"x": r.location.x, "y": r.location.y},
                "demand": {"mu": r.demand.mu, "sigma": r.demand.sigma},
                "fixed_cost": r.fixed_cost,
            }
            for r in inst.retailers
        ],
    }


def _require(doc, key, path):
    """Fetch a mandatory key, naming the full field path when it is absent"""
    name = f"{path}.{key}" if path else key
    if not isinstance(doc, dict):
        raise InstanceFormatError(path or "<root>", "expected an object")
    if key not in doc:
        raise InstanceFormatError(name, "missing")
    return doc[key]


def _number(doc, key, path):
    value = _require(doc, key, path)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceFormatError(f"{path}.{key}" if path else key, f"expected a number, got {value!r}")
    return float(value)


def _build(path, factory, *args, **kwargs):
    """Call a validating constructor, reporting its complaint under the given field path"""
    try:
        return factory(*args, **kwargs)
    except (ConfigurationError, DomainError) as e:
        raise InstanceFormatError(path, str(e)) from e


def _point(doc, key, path):
    node = _require(doc, key, path)
    name = f"{path}.{key}" if path else key
    return _build(name, Point, _number(node, "x", name), _number(node, "y", name))


def _demand(item, path):
    name = f"{path}.demand"
    node = _require(item, "demand", path)
    mu = _number(node, "mu", name)
    sigma = _number(node, "sigma", name)
    if not sigma > 0:
        raise InstanceFormatError(f"{name}.sigma", f"must be positive, got {sigma}")
    return _build(name, NormalDist, mu, sigma)


def instance_from_dict(doc):
    """
    Rebuild an Instance from its key/value tree

    Raises:
        InstanceVersionError: format_version missing or unsupported
        InstanceFormatError: a field is missing or has the wrong type/value
    """
    if not isinstance(doc, dict):
        raise InstanceFormatError("<root>", "expected an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise InstanceVersionError(version, FORMAT_VERSION)

    raw_retailers = _require(doc, "retailers", "")
    if not isinstance(raw_retailers, list):
        raise InstanceFormatError("retailers", "expected a list")

    econ_doc = _require(doc, "econ", "")
    transport_doc = _require(doc, "transport", "")

    retailers = []
    for i, item in enumerate(raw_retailers):
        path = f"retailers[{i}]"
        rid = _require(item, "id", path)
        if isinstance(rid, bool) or not isinstance(rid, int):
            raise InstanceFormatError(f"{path}.id", f"expected an integer, got {rid!r}")
        retailers.append(_build(
            path, Retailer,
            id=rid,
            location=_point(item, "location", path),
            demand=_demand(item, path),
            fixed_cost=_number(item, "fixed_cost", path),
        ))

    econ = _build("econ", EconomicParams, **{k: _number(econ_doc, k, "econ")
                                             for k in ("s", "w", "c", "v", "b", "gamma", "supplier_fixed_cost")})
    mode = _build("transport.mode", TransportMode.parse, _require(transport_doc, "mode", "transport"))
    transport = _build(
        "transport", TransportParams,
        mode=mode,
        **{k: _number(transport_doc, k, "transport")
           for k in ("direct_fixed", "direct_rate", "trunk_fixed", "trunk_rate", "last_fixed", "last_rate")}
    )

    seed = _require(doc, "seed", "")
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise InstanceFormatError("seed", f"expected an integer, got {seed!r}")

    return _build(
        "<root>", Instance,
        supplier_location=_point(doc, "supplier_location", ""),
        retailers=tuple(retailers),
        econ=econ,
        transport=transport,
        epsilon=_number(doc, "epsilon", ""),
        map_size=_number(doc, "map_size", ""),
        seed=seed,
    )


def save_instance(inst, path):
    """
    Write an instance to a JSON file

    Args:
        inst: Instance
        path: Destination file path (parent directories are created)
    """
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(instance_to_dict(inst), f, indent=2)
    logger.info(f"Saved instance (n={inst.n}, seed={inst.seed}) to {path}")


def load_instance(path):
    """
    Read an instance written by save_instance

    Args:
        path: Source file path

    Returns:
        Instance equal field-for-field to the one saved
    """
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as e:
        raise InstanceFormatError("<root>", f"not valid JSON ({e})") from e

    inst = instance_from_dict(doc)
    logger.debug(f"Loaded instance (n={inst.n}, seed={inst.seed}) from {path}")
    return inst
