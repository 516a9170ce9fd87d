"""SMILES reader for the supported grammar subset.

Accepted: organic-subset atoms (B excluded), bracket atoms with charge,
branches, ring-closure digits and ``%nn``, bond symbols ``- = # :``, and
aromatic lowercase atoms.  Stereo markers (``@ / \\``) and bracket hydrogen
counts are accepted and discarded.  Isotopes, wildcard atoms, and
multi-fragment input are rejected.
"""

from __future__ import annotations

from .model import (
    BOND_AROMATIC,
    BOND_DOUBLE,
    BOND_SINGLE,
    BOND_TRIPLE,
    Atom,
    Bond,
    MolGraph,
    SmilesSyntaxError,
    SUPPORTED_ELEMENTS,
    UnsupportedFeature,
)

__all__ = ["parse_smiles", "parse_fragment"]

_BOND_SYMBOLS = {"-": BOND_SINGLE, "=": BOND_DOUBLE, "#": BOND_TRIPLE, ":": BOND_AROMATIC}
_TWO_LETTER = ("Cl", "Br")
_ONE_LETTER = frozenset("CNOSPFI")
_AROMATIC_TOKENS = frozenset("cnosp")


def parse_smiles(text: str) -> MolGraph:
    """Parse SMILES text into a validated molecule.

    Raises:
        SmilesSyntaxError: malformed text (unbalanced rings/branches, unknown
            token, dangling bond).
        UnsupportedFeature: feature outside the grammar subset ('.', isotopes,
            wildcards, unsupported elements).
        ValenceError: an atom exceeds the valence table.
    """
    atoms, bonds = _parse(text)
    return MolGraph.molecule(atoms, bonds)


def parse_fragment(text: str) -> MolGraph:
    """Parse SMILES text into a fragment; skips molecule-level checks.

    Fragments may contain aromatic atoms without their ring (a cluster label
    induced from a larger molecule); the valence table still applies.
    """
    atoms, bonds = _parse(text)
    return MolGraph.fragment(atoms, bonds)


def _parse(text: str) -> tuple[list[Atom], list[Bond]]:
    if not text:
        raise SmilesSyntaxError("empty SMILES")
    atoms: list[Atom] = []
    bonds: list[Bond] = []
    prev: int | None = None
    pending: int | None = None  # explicit bond symbol awaiting its atom
    branch_stack: list[int | None] = []
    open_rings: dict[int, tuple[int, int | None]] = {}  # digit -> (atom, symbol)

    def close_bond(a: int, b: int, symbol: int | None) -> None:
        if a == b:
            raise SmilesSyntaxError("ring closure bonds an atom to itself")
        if symbol is None:
            arom = atoms[a].aromatic and atoms[b].aromatic
            symbol = BOND_AROMATIC if arom else BOND_SINGLE
        if any(x.endpoints == (min(a, b), max(a, b)) for x in bonds):
            raise SmilesSyntaxError(f"duplicate bond between atoms {a} and {b}")
        bonds.append(Bond(a, b, symbol))

    def add_atom(atom: Atom) -> None:
        nonlocal prev, pending
        idx = len(atoms)
        atoms.append(atom)
        if prev is not None:
            close_bond(prev, idx, pending)
        pending = None
        prev = idx

    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == ".":
            raise UnsupportedFeature("multi-fragment SMILES not supported")
        if ch == "*":
            raise UnsupportedFeature("wildcard atoms not supported")
        if ch in "/\\":
            # cis/trans markers double as single bonds
            pending = BOND_SINGLE if pending is None else pending
            i += 1
            continue
        if ch in _BOND_SYMBOLS:
            if pending is not None:
                raise SmilesSyntaxError(f"consecutive bond symbols at position {i}")
            pending = _BOND_SYMBOLS[ch]
            i += 1
            continue
        if ch == "(":
            if prev is None:
                raise SmilesSyntaxError("branch before any atom")
            branch_stack.append(prev)
            i += 1
            continue
        if ch == ")":
            if not branch_stack:
                raise SmilesSyntaxError("unbalanced ')'")
            if pending is not None:
                raise SmilesSyntaxError("dangling bond before ')'")
            prev = branch_stack.pop()
            i += 1
            continue
        if ch.isdigit() or ch == "%":
            if ch == "%":
                if i + 2 >= n or not text[i + 1 : i + 3].isdigit():
                    raise SmilesSyntaxError("'%' must be followed by two digits")
                num = int(text[i + 1 : i + 3])
                i += 3
            else:
                num = int(ch)
                i += 1
            if prev is None:
                raise SmilesSyntaxError("ring closure before any atom")
            if num in open_rings:
                other, sym = open_rings.pop(num)
                if sym is not None and pending is not None and sym != pending:
                    raise SmilesSyntaxError(f"ring {num} closed with conflicting bond")
                close_bond(other, prev, pending if pending is not None else sym)
            else:
                open_rings[num] = (prev, pending)
            pending = None
            continue
        if ch == "[":
            j = text.find("]", i)
            if j < 0:
                raise SmilesSyntaxError("unterminated bracket atom")
            add_atom(_parse_bracket(text[i + 1 : j]))
            i = j + 1
            continue
        if ch.isupper():
            if text[i : i + 2] in _TWO_LETTER:
                add_atom(Atom(text[i : i + 2]))
                i += 2
                continue
            if ch in _ONE_LETTER:
                add_atom(Atom(ch))
                i += 1
                continue
            raise SmilesSyntaxError(f"unknown atom token {ch!r} at position {i}")
        if ch in _AROMATIC_TOKENS:
            add_atom(Atom(ch.upper(), aromatic=True))
            i += 1
            continue
        raise SmilesSyntaxError(f"unknown token {ch!r} at position {i}")

    if branch_stack:
        raise SmilesSyntaxError("unbalanced '('")
    if open_rings:
        raise SmilesSyntaxError(f"unclosed ring closures: {sorted(open_rings)}")
    if pending is not None:
        raise SmilesSyntaxError("dangling bond at end of input")
    if not atoms:
        raise SmilesSyntaxError("no atoms in SMILES")
    return atoms, bonds


def _parse_bracket(body: str) -> Atom:
    """Parse the inside of a bracket atom: element, H count, charge, stereo."""
    if not body:
        raise SmilesSyntaxError("empty bracket atom")
    k = 0
    if body[0].isdigit():
        raise UnsupportedFeature("isotope labels not supported")
    element: str | None = None
    aromatic = False
    ch = body[0]
    if ch == "*":
        raise UnsupportedFeature("wildcard atoms not supported")
    if ch.isupper():
        # Greedy two-letter element token; 'H' never starts an element here.
        if len(body) > 1 and body[1].islower() and body[1] != "h":
            element, k = body[:2], 2
        else:
            element, k = ch, 1
        if element not in SUPPORTED_ELEMENTS:
            raise UnsupportedFeature(f"unsupported element {element!r}")
    elif ch in _AROMATIC_TOKENS:
        element, aromatic, k = ch.upper(), True, 1
    elif ch.islower():
        raise UnsupportedFeature(f"unsupported element {ch!r}")
    else:
        raise SmilesSyntaxError(f"unknown bracket element in [{body}]")
    charge = 0
    while k < len(body):
        ch = body[k]
        if ch == "@":  # chirality: accepted and discarded
            k += 1
            continue
        if ch == "H":  # hydrogen count: accepted and discarded
            k += 1
            while k < len(body) and body[k].isdigit():
                k += 1
            continue
        if ch in "+-":
            sign = 1 if ch == "+" else -1
            k += 1
            if k < len(body) and body[k].isdigit():
                charge = sign * int(body[k])
                k += 1
            else:
                charge = sign
                while k < len(body) and body[k] == ch:
                    charge += sign
                    k += 1
            continue
        raise SmilesSyntaxError(f"unknown bracket token {ch!r} in [{body}]")
    if element not in SUPPORTED_ELEMENTS:
        raise UnsupportedFeature(f"unsupported element {element!r}")
    return Atom(element, charge=charge, aromatic=aromatic)
