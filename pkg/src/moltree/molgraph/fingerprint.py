"""Circular substructure fingerprints and Tanimoto similarity.

Each atom contributes one bit per radius r in [0, radius]: the canonical
string of the induced subgraph on its r-neighborhood, rooted at the atom,
hashed with 64-bit FNV-1a and truncated to 32 bits.
"""

from __future__ import annotations

from dataclasses import dataclass

from .canon import rooted_string
from .model import MolGraph

__all__ = ["Fingerprint", "morgan_fingerprint", "tanimoto", "fnv1a32"]

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def fnv1a32(text: str) -> int:
    """64-bit FNV-1a of UTF-8 text, truncated to 32 bits."""
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * _FNV_PRIME) & _MASK64
    return h & 0xFFFFFFFF


@dataclass(frozen=True, slots=True)
class Fingerprint:
    """Sparse bit set; deterministic for a given molecule."""

    bits: frozenset[int]

    def __len__(self) -> int:
        return len(self.bits)


def morgan_fingerprint(g: MolGraph, radius: int) -> Fingerprint:
    """Hash every atom's r-neighborhood environment for r in [0, radius]."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    bits: set[int] = set()
    for atom in range(len(g)):
        shell = {atom}
        frontier = {atom}
        for _ in range(radius + 1):
            sub, keep = g.induced_subgraph(sorted(shell))
            root_local = keep.index(atom)
            bits.add(fnv1a32(rooted_string(sub, root_local)))
            frontier = {
                j for i in frontier for j in g.neighbors(i) if j not in shell
            }
            if not frontier:
                break
            shell |= frontier
    return Fingerprint(frozenset(bits))


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; two empty sets count as identical."""
    union = len(a.bits | b.bits)
    if union == 0:
        return 1.0
    return len(a.bits & b.bits) / union
