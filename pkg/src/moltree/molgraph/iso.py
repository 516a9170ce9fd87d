"""Graph isomorphism by backtracking search with invariant pruning."""

from __future__ import annotations

from typing import Mapping, Sequence

from .model import MolGraph

__all__ = ["is_isomorphic", "find_isomorphism"]


def _signature(g: MolGraph, i: int, extra) -> tuple:
    a = g.atoms[i]
    orders = tuple(sorted(g.bond_order(i, j) for j in g.neighbors(i)))
    key = extra[i] if extra is not None else None
    return (a.element, a.charge, a.aromatic, g.degree(i), orders, key)


def is_isomorphic(
    a: MolGraph,
    b: MolGraph,
    *,
    anchor: Mapping[int, int] | None = None,
    a_keys: Sequence | None = None,
    b_keys: Sequence | None = None,
) -> bool:
    """True iff an atom bijection preserves labels and bond orders.

    ``anchor`` pins specific ``a`` atoms to ``b`` atoms.  ``a_keys``/``b_keys``
    attach an extra per-atom invariant that the bijection must also preserve
    (used for attachment-position-aware candidate comparison).
    """
    return find_isomorphism(a, b, anchor=anchor, a_keys=a_keys, b_keys=b_keys) is not None


def find_isomorphism(
    a: MolGraph,
    b: MolGraph,
    *,
    anchor: Mapping[int, int] | None = None,
    a_keys: Sequence | None = None,
    b_keys: Sequence | None = None,
) -> dict[int, int] | None:
    """The bijection as a dict a-index -> b-index, or None."""
    n = len(a)
    if n != len(b) or len(a.bonds) != len(b.bonds):
        return None
    sig_a = [_signature(a, i, a_keys) for i in range(n)]
    sig_b = [_signature(b, i, b_keys) for i in range(n)]
    if sorted(sig_a) != sorted(sig_b):
        return None

    mapping: dict[int, int] = {}
    used: set[int] = set()
    if anchor:
        for u, v in anchor.items():
            if sig_a[u] != sig_b[v] or v in used:
                return None
            mapping[u] = v
            used.add(v)
        for u, v in anchor.items():
            if not _consistent(a, b, mapping, u, v):
                return None

    # Order free atoms: rarest signature first, then prefer atoms adjacent to
    # already-mapped ones so the bond constraints bite early.
    from collections import Counter

    freq = Counter(sig_a)
    free = [i for i in range(n) if i not in mapping]
    free.sort(key=lambda i: (freq[sig_a[i]], sig_a[i], i))
    ordered: list[int] = []
    placed = set(mapping)
    pool = free.copy()
    while pool:
        nxt = next((i for i in pool if any(j in placed for j in a.neighbors(i))), pool[0])
        pool.remove(nxt)
        ordered.append(nxt)
        placed.add(nxt)

    def extend(k: int) -> bool:
        if k == len(ordered):
            return True
        u = ordered[k]
        for v in range(n):
            if v in used or sig_b[v] != sig_a[u]:
                continue
            if _consistent(a, b, mapping, u, v):
                mapping[u] = v
                used.add(v)
                if extend(k + 1):
                    return True
                del mapping[u]
                used.discard(v)
        return False

    if extend(0):
        return dict(mapping)
    return None


def _consistent(a: MolGraph, b: MolGraph, mapping: dict[int, int], u: int, v: int) -> bool:
    # Every already-mapped pair must agree on the presence and order of the
    # bond to (u, v); equal bond counts then force full adjacency agreement.
    for m, mv in mapping.items():
        if m == u:
            continue
        if a.bond_order(u, m) != b.bond_order(v, mv):
            return False
    return True
