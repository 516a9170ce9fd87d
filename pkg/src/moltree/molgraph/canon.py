"""Canonical SMILES emission.

Canonical form = the lexicographically smallest SMILES over an
isomorphism-invariant set of depth-first traversals:

1. Atoms are partitioned by iterative neighborhood refinement starting from
   (element, charge, aromatic, degree, bond-order multiset).
2. Every atom in the minimal partition class is tried as DFS root; the root
   is individualized and the partition re-refined.
3. During traversal, neighbors are processed in ascending class order;
   remaining ties branch into all permutations.  The smallest rendered
   string wins.

Because roots and neighbor orders are restricted only by invariant class
ranks (with ties fully explored), two graphs emit identical strings exactly
when they are isomorphic.
"""

from __future__ import annotations

from .model import BOND_AROMATIC, BOND_SINGLE, MolGraph

__all__ = ["write_canonical", "rooted_string", "refinement_classes"]

_BOND_CHAR = {1: "-", 2: "=", 3: "#", 4: ":"}

# Guards against pathological symmetry blowing up tie exploration.
_MAX_TRAVERSALS = 200_000


def refinement_classes(g: MolGraph, root: int | None = None) -> list[int]:
    """Isomorphism-invariant partition classes (0 = smallest key).

    With ``root`` given, that atom is individualized first, which sharpens
    the partition for rooted traversals.
    """
    keys: list[tuple] = []
    for i, a in enumerate(g.atoms):
        orders = tuple(sorted(g.bond_order(i, j) for j in g.neighbors(i)))
        keys.append(
            (0 if i == root else 1, a.element, a.charge, a.aromatic, g.degree(i), orders)
        )
    classes = _rank(keys)
    while True:
        new_keys = [
            (
                classes[i],
                tuple(sorted((g.bond_order(i, j), classes[j]) for j in g.neighbors(i))),
            )
            for i in range(len(g))
        ]
        new_classes = _rank(new_keys)
        if new_classes == classes:
            return classes
        classes = new_classes


def _rank(keys: list[tuple]) -> list[int]:
    ordered = {k: r for r, k in enumerate(sorted(set(keys)))}
    return [ordered[k] for k in keys]


def write_canonical(g: MolGraph) -> str:
    """Deterministic canonical SMILES; equal strings iff isomorphic graphs."""
    base = refinement_classes(g)
    lo = min(base)
    best: str | None = None
    for root in [i for i, c in enumerate(base) if c == lo]:
        s = rooted_string(g, root)
        if best is None or s < best:
            best = s
    assert best is not None
    return best


def rooted_string(g: MolGraph, root: int) -> str:
    """Smallest SMILES over invariant traversals starting at ``root``.

    The emitted string begins at the root atom, so it identifies the rooted
    graph: equal strings iff an isomorphism maps root to root.
    """
    classes = refinement_classes(g, root=root)
    state = _Search(g, classes)
    state.run(root)
    if state.best is None:
        raise RuntimeError("traversal search produced no string")
    return state.best


class _Search:
    """Enumerates class-sorted DFS traversals and keeps the minimal render."""

    def __init__(self, g: MolGraph, classes: list[int]) -> None:
        self.g = g
        self.classes = classes
        self.best: str | None = None
        self.count = 0

    def run(self, root: int) -> None:
        n = len(self.g)
        visited = [False] * n
        events: list[list[tuple[str, int]]] = [[] for _ in range(n)]
        consumed: set[tuple[int, int]] = set()
        agenda: list[tuple] = [("enter", root, -1)]
        self._step(agenda, visited, [], events, consumed, root)

    def _step(self, agenda, visited, order, events, consumed, root) -> None:
        g, classes = self.g, self.classes
        while agenda:
            item = agenda.pop()
            kind = item[0]
            if kind == "enter":
                _, u, parent = item
                visited[u] = True
                order.append(u)
                rem = tuple(v for v in g.neighbors(u) if v != parent)
                if rem:
                    agenda.append(("scan", u, rem))
            elif kind == "pick":
                _, u, c = item
                consumed.add((min(u, c), max(u, c)))
                if visited[c]:
                    events[u].append(("ring", c))
                else:
                    events[u].append(("child", c))
                    agenda.append(("enter", c, u))
            else:  # scan
                _, u, rem = item
                rem = tuple(
                    v for v in rem if (min(u, v), max(u, v)) not in consumed
                )
                if not rem:
                    continue
                lo = min(classes[v] for v in rem)
                cands = [v for v in rem if classes[v] == lo]
                rest = lambda c: tuple(x for x in rem if x != c)  # noqa: E731
                if len(cands) == 1:
                    agenda.append(("scan", u, rest(cands[0])))
                    agenda.append(("pick", u, cands[0]))
                    continue
                # Tie: branch on which candidate is processed next.
                for c in cands:
                    self._step(
                        agenda + [("scan", u, rest(c)), ("pick", u, c)],
                        visited.copy(),
                        order.copy(),
                        [ev.copy() for ev in events],
                        set(consumed),
                        root,
                    )
                return
        self.count += 1
        if self.count > _MAX_TRAVERSALS:
            raise RuntimeError("canonicalization tie search exceeded its cap")
        s = _render(self.g, root, order, events)
        if self.best is None or s < self.best:
            self.best = s


def _render(g: MolGraph, root: int, order: list[int], events) -> str:
    visit_pos = {a: k for k, a in enumerate(order)}
    # Ring closures: recorded at the later-visited endpoint; the digit must
    # also appear at the earlier endpoint ("open" site).
    opens: dict[int, list[tuple[int, int]]] = {}  # open atom -> [(close pos, close atom)]
    for u in order:
        for kind, v in events[u]:
            if kind == "ring":
                opens.setdefault(v, []).append((visit_pos[u], u))
    digit_at: dict[tuple[int, int], int] = {}
    in_use: set[int] = set()
    pending_close: dict[int, list[int]] = {}
    for u in order:
        for _, closer in sorted(opens.get(u, [])):
            d = _next_digit(in_use)
            in_use.add(d)
            digit_at[(u, closer)] = d
            pending_close.setdefault(closer, []).append(d)
        for d in pending_close.pop(u, []):
            in_use.discard(d)

    def bond_prefix(u: int, v: int) -> str:
        o = g.bond_order(u, v)
        default = (
            BOND_AROMATIC
            if g.atoms[u].aromatic and g.atoms[v].aromatic
            else BOND_SINGLE
        )
        return "" if o == default else _BOND_CHAR[o]

    def digit_token(d: int) -> str:
        return str(d) if d < 10 else f"%{d:02d}"

    def emit(u: int) -> str:
        parts = [_atom_token(g, u)]
        for _, closer in sorted(opens.get(u, [])):
            parts.append(bond_prefix(u, closer))
            parts.append(digit_token(digit_at[(u, closer)]))
        rings = [v for kind, v in events[u] if kind == "ring"]
        for v in rings:
            parts.append(digit_token(digit_at[(v, u)]))
        children = [v for kind, v in events[u] if kind == "child"]
        for k, v in enumerate(children):
            sub = bond_prefix(u, v) + emit(v)
            parts.append(sub if k == len(children) - 1 else f"({sub})")
        return "".join(parts)

    return emit(root)


def _next_digit(in_use: set[int]) -> int:
    d = 1
    while d in in_use:
        d += 1
    return d


def _atom_token(g: MolGraph, i: int) -> str:
    a = g.atoms[i]
    sym = a.element.lower() if a.aromatic else a.element
    if a.charge == 0:
        return sym
    if a.charge in (1, -1):
        q = "+" if a.charge == 1 else "-"
    else:
        q = f"{a.charge:+d}"
    return f"[{sym}{q}]"
