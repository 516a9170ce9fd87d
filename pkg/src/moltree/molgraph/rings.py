"""Ring perception via a minimum cycle basis.

Uses Horton's construction: candidate cycles are built from shortest paths
rooted at every vertex, then a basis is selected greedily by cycle length
with GF(2) independence over edge-incidence bitmasks.  For a connected graph
this yields exactly ``|E| - |V| + 1`` rings, and every edge that lies on any
cycle is covered by at least one basis ring.
"""

from __future__ import annotations

from .model import MolGraph

__all__ = ["find_sssr", "ring_bond_set", "ring_atom_set"]


def _shortest_path_tree(g: MolGraph, root: int) -> tuple[list[int], list[int]]:
    n = len(g)
    dist = [-1] * n
    parent = [-1] * n
    dist[root] = 0
    queue = [root]
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        for v in g.neighbors(u):
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                parent[v] = u
                queue.append(v)
    return dist, parent


def _path_to_root(parent: list[int], v: int) -> list[int]:
    path = [v]
    while parent[path[-1]] >= 0:
        path.append(parent[path[-1]])
    return path


def _candidate_cycles(g: MolGraph) -> list[tuple[int, ...]]:
    """Horton candidates: SP(r,u) + (u,v) + SP(v,r) for every root r, edge (u,v)."""
    seen: set[frozenset[tuple[int, int]]] = set()
    out: list[tuple[int, ...]] = []
    for root in range(len(g)):
        dist, parent = _shortest_path_tree(g, root)
        for b in g.bonds:
            u, v = b.u, b.v
            if dist[u] < 0 or dist[v] < 0:
                continue
            pu = _path_to_root(parent, u)
            pv = _path_to_root(parent, v)
            # Paths must meet only at the root for a simple cycle.
            if set(pu) & set(pv) != {root}:
                continue
            cycle = pu[::-1] + pv[:-1]  # root..u, v..(root excluded)
            if len(cycle) < 3:
                continue
            edge_key = frozenset(
                (min(a, c), max(a, c))
                for a, c in zip(cycle, cycle[1:] + cycle[:1])
            )
            if len(edge_key) != len(cycle):
                continue
            if edge_key in seen:
                continue
            seen.add(edge_key)
            out.append(_normalize_cycle(cycle))
    return out


def _normalize_cycle(cycle: list[int]) -> tuple[int, ...]:
    """Rotate/reflect so the cycle starts at its smallest atom, smaller side first."""
    k = cycle.index(min(cycle))
    rot = cycle[k:] + cycle[:k]
    fwd = tuple(rot)
    rev = tuple([rot[0]] + rot[1:][::-1])
    return min(fwd, rev)


def find_sssr(g: MolGraph) -> list[tuple[int, ...]]:
    """Smallest set of smallest rings as ordered atom-index cycles.

    Returns ``|E| - |V| + 1`` rings for a connected graph, sorted by smallest
    contained atom index, then by size, then lexicographically.  Acyclic
    graphs yield an empty list.
    """
    if g._ring_cache is not None:
        return list(g._ring_cache)
    rank_needed = len(g.bonds) - len(g) + _component_count(g)
    if rank_needed <= 0:
        g._ring_cache = ()
        return []
    edge_index = {(b.u, b.v): i for i, b in enumerate(g.bonds)}
    candidates = _candidate_cycles(g)
    candidates.sort(key=lambda c: (len(c), c))

    basis: list[tuple[int, ...]] = []
    reduced: list[int] = []  # row-echelon bitmasks over edge indices
    for cycle in candidates:
        mask = 0
        for a, c in zip(cycle, cycle[1:] + cycle[:1]):
            mask |= 1 << edge_index[(min(a, c), max(a, c))]
        cur = mask
        for row in reduced:
            cur = min(cur, cur ^ row)
        if cur:
            reduced.append(cur)
            reduced.sort(reverse=True)
            basis.append(cycle)
            if len(basis) == rank_needed:
                break
    rings = sorted(basis, key=lambda c: (min(c), len(c), c))
    g._ring_cache = tuple(rings)
    return rings


def _component_count(g: MolGraph) -> int:
    n = len(g)
    seen = [False] * n
    count = 0
    for s in range(n):
        if seen[s]:
            continue
        count += 1
        seen[s] = True
        stack = [s]
        while stack:
            for j in g.neighbors(stack.pop()):
                if not seen[j]:
                    seen[j] = True
                    stack.append(j)
    return count


def ring_bond_set(g: MolGraph) -> set[tuple[int, int]]:
    """Bonds lying on at least one SSSR ring, as sorted endpoint pairs."""
    out: set[tuple[int, int]] = set()
    for cycle in find_sssr(g):
        for a, c in zip(cycle, cycle[1:] + cycle[:1]):
            out.add((min(a, c), max(a, c)))
    return out


def ring_atom_set(g: MolGraph) -> set[int]:
    """Atoms lying on at least one SSSR ring."""
    out: set[int] = set()
    for cycle in find_sssr(g):
        out.update(cycle)
    return out


def cyclic_edge_set(g: MolGraph) -> set[tuple[int, int]]:
    """Edges lying on at least one cycle (the non-bridges).

    Equals :func:`ring_bond_set` because every cyclic edge appears in some
    basis ring, but runs in linear time (iterative bridge finding).
    """
    n = len(g)
    disc = [-1] * n
    low = [0] * n
    bridges: set[tuple[int, int]] = set()
    timer = 0
    for start in range(n):
        if disc[start] >= 0:
            continue
        stack: list[tuple[int, int, int]] = [(start, -1, 0)]
        while stack:
            u, parent, ni = stack.pop()
            if ni == 0:
                disc[u] = low[u] = timer
                timer += 1
            nbrs = g.neighbors(u)
            if ni < len(nbrs):
                stack.append((u, parent, ni + 1))
                v = nbrs[ni]
                if v == parent:
                    continue
                if disc[v] >= 0:
                    low[u] = min(low[u], disc[v])
                else:
                    stack.append((v, u, 0))
            elif parent >= 0:
                low[parent] = min(low[parent], low[u])
                if low[u] > disc[parent]:
                    bridges.add((min(u, parent), max(u, parent)))
    return {b.endpoints for b in g.bonds} - bridges
