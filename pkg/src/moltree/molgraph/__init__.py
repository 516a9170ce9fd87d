"""Molecular graph toolkit: SMILES IO, canonical form, rings, similarity."""

from .canon import refinement_classes, rooted_string, write_canonical
from .fingerprint import Fingerprint, fnv1a32, morgan_fingerprint, tanimoto
from .iso import find_isomorphism, is_isomorphic
from .model import (
    AROMATIC_ELEMENTS,
    BOND_AROMATIC,
    BOND_CONTRIBUTION,
    BOND_DOUBLE,
    BOND_SINGLE,
    BOND_TRIPLE,
    SUPPORTED_ELEMENTS,
    Atom,
    Bond,
    MolGraph,
    MoleculeError,
    SmilesSyntaxError,
    UnsupportedFeature,
    ValenceError,
    max_valence,
)
from .props import desk_property, get_property, property_names, register_property
from .rings import find_sssr, ring_atom_set, ring_bond_set
from .smiles import parse_fragment, parse_smiles

__all__ = [
    "AROMATIC_ELEMENTS",
    "Atom",
    "Bond",
    "BOND_AROMATIC",
    "BOND_CONTRIBUTION",
    "BOND_DOUBLE",
    "BOND_SINGLE",
    "BOND_TRIPLE",
    "Fingerprint",
    "MolGraph",
    "MoleculeError",
    "SmilesSyntaxError",
    "SUPPORTED_ELEMENTS",
    "UnsupportedFeature",
    "ValenceError",
    "desk_property",
    "find_isomorphism",
    "find_sssr",
    "fnv1a32",
    "get_property",
    "is_isomorphic",
    "max_valence",
    "morgan_fingerprint",
    "parse_fragment",
    "parse_smiles",
    "property_names",
    "refinement_classes",
    "register_property",
    "ring_atom_set",
    "ring_bond_set",
    "rooted_string",
    "tanimoto",
    "write_canonical",
]
