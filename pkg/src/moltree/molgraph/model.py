"""Molecular graph data model: atoms, bonds, valence rules.

Graphs are immutable after construction. Two construction paths exist:
``MolGraph.molecule`` enforces every molecule-level invariant (connectivity,
aromatic ring membership), while ``MolGraph.fragment`` only enforces the
valence table and is used for induced subgraphs (cluster labels, fingerprint
environments) that are not standalone molecules.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

__all__ = [
    "Atom",
    "Bond",
    "MolGraph",
    "MoleculeError",
    "SmilesSyntaxError",
    "UnsupportedFeature",
    "ValenceError",
    "BOND_SINGLE",
    "BOND_DOUBLE",
    "BOND_TRIPLE",
    "BOND_AROMATIC",
    "BOND_CONTRIBUTION",
    "SUPPORTED_ELEMENTS",
    "AROMATIC_ELEMENTS",
    "max_valence",
]

BOND_SINGLE = 1
BOND_DOUBLE = 2
BOND_TRIPLE = 3
BOND_AROMATIC = 4

# Contribution of each bond kind towards an atom's valence total.
BOND_CONTRIBUTION = {
    BOND_SINGLE: 1.0,
    BOND_DOUBLE: 2.0,
    BOND_TRIPLE: 3.0,
    BOND_AROMATIC: 1.5,
}

SUPPORTED_ELEMENTS = ("C", "N", "O", "S", "P", "F", "Cl", "Br", "I")
AROMATIC_ELEMENTS = frozenset({"C", "N", "O", "S", "P"})

# Ceiling on the summed bond-order contributions per element.  S and P use
# their highest common valence state.
_BASE_VALENCE = {
    "C": 4.0,
    "N": 3.0,
    "O": 2.0,
    "S": 6.0,
    "P": 5.0,
    "F": 1.0,
    "Cl": 1.0,
    "Br": 1.0,
    "I": 1.0,
}

_CHARGE_VALENCE = {
    ("N", 1): 4.0,
    ("O", -1): 1.0,
}


class MoleculeError(ValueError):
    """Base class for molecular model errors."""


class SmilesSyntaxError(MoleculeError):
    """Malformed SMILES text: unbalanced rings or branches, unknown token."""


class UnsupportedFeature(MoleculeError):
    """Syntactically valid SMILES feature outside the supported subset."""


class ValenceError(MoleculeError):
    """An atom exceeds its valence ceiling."""


def max_valence(element: str, charge: int) -> float:
    """Valence ceiling for an element at a given formal charge."""
    return _CHARGE_VALENCE.get((element, charge), _BASE_VALENCE[element])


@dataclass(frozen=True, slots=True)
class Atom:
    """A heavy atom; hydrogens stay implicit."""

    element: str
    charge: int = 0
    aromatic: bool = False

    def __post_init__(self) -> None:
        if self.element not in _BASE_VALENCE:
            raise UnsupportedFeature(f"unsupported element {self.element!r}")
        if not -2 <= self.charge <= 2:
            raise MoleculeError(f"formal charge {self.charge} outside [-2, +2]")
        if self.aromatic and self.element not in AROMATIC_ELEMENTS:
            raise MoleculeError(f"element {self.element!r} cannot be aromatic")


@dataclass(frozen=True, slots=True)
class Bond:
    """Undirected bond between two atom indices; endpoints stored sorted."""

    u: int
    v: int
    order: int = BOND_SINGLE

    def __post_init__(self) -> None:
        if self.u == self.v:
            raise MoleculeError("bond endpoints must be distinct")
        if self.order not in BOND_CONTRIBUTION:
            raise MoleculeError(f"unknown bond order {self.order!r}")
        if self.u > self.v:
            lo, hi = self.v, self.u
            object.__setattr__(self, "u", lo)
            object.__setattr__(self, "v", hi)

    @property
    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)


class MolGraph:
    """Immutable labeled molecular graph.

    Attributes:
        atoms: tuple of :class:`Atom`.
        bonds: tuple of :class:`Bond` sorted by endpoints.
        adjacency: per-atom tuple of neighbor indices, ascending.
    """

    __slots__ = ("atoms", "bonds", "adjacency", "_order", "_ring_cache")

    def __init__(
        self,
        atoms: Sequence[Atom],
        bonds: Iterable[Bond],
        *,
        _molecule: bool = True,
    ) -> None:
        self.atoms: tuple[Atom, ...] = tuple(atoms)
        bond_list = sorted(bonds, key=lambda b: (b.u, b.v))
        n = len(self.atoms)
        order: dict[tuple[int, int], int] = {}
        nbrs: list[list[int]] = [[] for _ in range(n)]
        for b in bond_list:
            if not (0 <= b.u < n and 0 <= b.v < n):
                raise MoleculeError(f"bond {b.endpoints} outside atom range")
            if (b.u, b.v) in order:
                raise MoleculeError(f"duplicate bond between {b.u} and {b.v}")
            order[(b.u, b.v)] = b.order
            nbrs[b.u].append(b.v)
            nbrs[b.v].append(b.u)
        self.bonds: tuple[Bond, ...] = tuple(bond_list)
        self.adjacency: tuple[tuple[int, ...], ...] = tuple(
            tuple(sorted(a)) for a in nbrs
        )
        self._order = order
        self._ring_cache: tuple[tuple[int, ...], ...] | None = None
        self._check_valence()
        if _molecule:
            self._check_molecule()

    # -- constructors ------------------------------------------------------

    @classmethod
    def molecule(cls, atoms: Sequence[Atom], bonds: Iterable[Bond]) -> "MolGraph":
        """Build a full molecule; all invariants enforced."""
        return cls(atoms, bonds, _molecule=True)

    @classmethod
    def fragment(cls, atoms: Sequence[Atom], bonds: Iterable[Bond]) -> "MolGraph":
        """Build an induced-subgraph fragment; only the valence table applies."""
        return cls(atoms, bonds, _molecule=False)

    # -- queries -----------------------------------------------------------

    def __len__(self) -> int:
        return len(self.atoms)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self.adjacency[i]

    def degree(self, i: int) -> int:
        return len(self.adjacency[i])

    def bond_order(self, u: int, v: int) -> int | None:
        """Order of the bond between u and v, or None when not bonded."""
        if u > v:
            u, v = v, u
        return self._order.get((u, v))

    def valence_total(self, i: int) -> float:
        return sum(
            BOND_CONTRIBUTION[self._order[(min(i, j), max(i, j))]]
            for j in self.adjacency[i]
        )

    def induced_subgraph(self, atom_indices: Sequence[int]) -> tuple["MolGraph", list[int]]:
        """Fragment induced on ``atom_indices``; also returns the index map.

        The map lists, per fragment atom, the parent-graph atom index.
        """
        keep = list(atom_indices)
        pos = {a: k for k, a in enumerate(keep)}
        atoms = [self.atoms[a] for a in keep]
        bonds = [
            Bond(pos[b.u], pos[b.v], b.order)
            for b in self.bonds
            if b.u in pos and b.v in pos
        ]
        return MolGraph.fragment(atoms, bonds), keep

    def is_connected(self) -> bool:
        if not self.atoms:
            return False
        seen = {0}
        stack = [0]
        while stack:
            for j in self.adjacency[stack.pop()]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return len(seen) == len(self.atoms)

    # -- validation --------------------------------------------------------

    def _check_valence(self) -> None:
        for i, atom in enumerate(self.atoms):
            total = self.valence_total(i)
            ceiling = max_valence(atom.element, atom.charge)
            if total > ceiling + 1e-9:
                raise ValenceError(
                    f"atom {i} ({atom.element}{atom.charge:+d}) has bond total"
                    f" {total:g} > ceiling {ceiling:g}"
                )

    def _check_molecule(self) -> None:
        if not self.atoms:
            raise MoleculeError("empty molecule")
        if not self.is_connected():
            raise MoleculeError("molecule graph is disconnected")
        self._check_aromatic_rings()

    def _check_aromatic_rings(self) -> None:
        """Every aromatic atom and bond must lie on a cycle of aromatic bonds."""
        arom_bonds = [b for b in self.bonds if b.order == BOND_AROMATIC]
        for b in arom_bonds:
            if not (self.atoms[b.u].aromatic and self.atoms[b.v].aromatic):
                raise MoleculeError(
                    f"aromatic bond {b.endpoints} with non-aromatic endpoint"
                )
        cyclic_atoms: set[int] = set()
        for b in arom_bonds:
            if self._aromatic_edge_on_cycle(b, arom_bonds):
                cyclic_atoms.add(b.u)
                cyclic_atoms.add(b.v)
            else:
                raise MoleculeError(
                    f"aromatic bond {b.endpoints} not part of an aromatic ring"
                )
        for i, atom in enumerate(self.atoms):
            if atom.aromatic and i not in cyclic_atoms:
                raise MoleculeError(f"aromatic atom {i} not on an aromatic ring")

    def _aromatic_edge_on_cycle(self, edge: Bond, arom_bonds: list[Bond]) -> bool:
        # An edge lies on a cycle of the aromatic subgraph iff its endpoints
        # stay connected through the remaining aromatic edges.
        adj: dict[int, list[int]] = {}
        for b in arom_bonds:
            if b is edge:
                continue
            adj.setdefault(b.u, []).append(b.v)
            adj.setdefault(b.v, []).append(b.u)
        seen = {edge.u}
        stack = [edge.u]
        while stack:
            for j in adj.get(stack.pop(), ()):
                if j == edge.v:
                    return True
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return False

    # -- equality is structural (same indexing) -----------------------------

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MolGraph):
            return NotImplemented
        return self.atoms == other.atoms and self.bonds == other.bonds

    def __hash__(self) -> int:
        return hash((self.atoms, self.bonds))

    def __repr__(self) -> str:
        return f"MolGraph(atoms={len(self.atoms)}, bonds={len(self.bonds)})"
