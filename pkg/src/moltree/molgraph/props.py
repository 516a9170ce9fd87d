"""Scalar molecular properties for optimization targets.

The default "desk" property rewards heavy-atom count and penalizes rings
with more than six atoms.  Alternative property functions can be registered
by name and selected through configuration.
"""

from __future__ import annotations

from typing import Callable

from .model import MolGraph
from .rings import find_sssr

__all__ = ["desk_property", "register_property", "get_property", "property_names"]

PropertyFn = Callable[[MolGraph], float]

_REGISTRY: dict[str, PropertyFn] = {}


def register_property(name: str, fn: PropertyFn) -> None:
    """Register a property function under a stable name."""
    _REGISTRY[name] = fn


def get_property(name: str) -> PropertyFn:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown property {name!r}; registered: {sorted(_REGISTRY)}"
        ) from None


def property_names() -> list[str]:
    return sorted(_REGISTRY)


def desk_property(g: MolGraph) -> float:
    """(heavy atoms) / 10 minus the number of rings larger than six atoms."""
    large_rings = sum(1 for ring in find_sssr(g) if len(ring) > 6)
    return len(g.atoms) / 10.0 - large_rings


register_property("desk", desk_property)
