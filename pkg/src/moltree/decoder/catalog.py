"""Label fragments, chemical compatibility, and neighborhood feasibility.

The decoder works with cluster labels rather than concrete molecules, so
every chemistry question ("can this label attach here?") is answered on
*local* merge graphs: the fragment of a node's label with the fragments of
its tree neighbors merged on, one shared atom or one shared bond each.

Aromatic atoms add a wrinkle: a bond cluster like the toluene methyl bond
contains an aromatic atom whose ring lives in a neighboring cluster.  Such
atoms are tracked as *coverage obligations*: the decoder may create them
only while an aromatic ring label can still merge at that atom (capacity is
reserved), and it must keep expanding a node until its obligations are
covered.  This keeps sampled molecules valid by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

from ..juncture import Vocabulary
from ..molgraph import Atom, MolGraph, parse_fragment
from ..molgraph.model import BOND_AROMATIC, BOND_CONTRIBUTION, max_valence

__all__ = [
    "LabelCatalog",
    "LocalMerge",
    "aromatic_satisfied",
    "joint_merges",
    "compatible_labels",
]

_EPS = 1e-9


def aromatic_satisfied(atoms: Sequence[Atom], bonds: dict[tuple[int, int], int]) -> set[int]:
    """Atoms lying on a cycle made entirely of aromatic bonds."""
    arom = [(u, v) for (u, v), o in bonds.items() if o == BOND_AROMATIC]
    satisfied: set[int] = set()
    for u, v in arom:
        adj: dict[int, list[int]] = {}
        for a, b in arom:
            if (a, b) == (u, v):
                continue
            adj.setdefault(a, []).append(b)
            adj.setdefault(b, []).append(a)
        seen = {u}
        stack = [u]
        on_cycle = False
        while stack and not on_cycle:
            for j in adj.get(stack.pop(), ()):
                if j == v:
                    on_cycle = True
                    break
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        if on_cycle:
            satisfied.add(u)
            satisfied.add(v)
    return satisfied


@dataclass
class LocalMerge:
    """One simultaneous merge of child fragments onto a base graph.

    ``maps[k]`` sends fragment-atom indices of child k to local indices;
    local indices below ``n_base`` are base atoms.  ``alpha`` tags each
    local atom with the child (by position) that introduced it, -1 for base
    atoms.
    """

    atoms: list[Atom]
    bonds: dict[tuple[int, int], int]
    totals: list[float]
    maps: list[dict[int, int]]
    n_base: int
    alpha: list[int]

    def as_fragment(self) -> MolGraph:
        from ..molgraph import Bond

        if not hasattr(self, "_frag"):
            self._frag = MolGraph.fragment(
                self.atoms,
                [Bond(u, v, o) for (u, v), o in sorted(self.bonds.items())],
            )
        return self._frag


def _bond_key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a < b else (b, a)


def _atoms_match(a: Atom, b: Atom) -> bool:
    return a.element == b.element and a.charge == b.charge and a.aromatic == b.aromatic


def _fragment_totals(g: MolGraph) -> list[float]:
    return [g.valence_total(i) for i in range(len(g))]


def joint_merges(
    base_atoms: Sequence[Atom],
    base_bonds: dict[tuple[int, int], int],
    base_totals: Sequence[float],
    anchor: Sequence[int],
    frags: Sequence[MolGraph],
    pinned: Sequence[int] = (),
    limit: int | None = None,
) -> list[LocalMerge]:
    """Enumerate the distinct simultaneous valence-valid merges of ``frags``.

    Each fragment attaches to the base through one shared atom or one shared
    bond; only ``anchor`` positions (and base bonds between them) may be
    shared.  ``base_totals`` carries valence already consumed outside the
    local graph, so capacity checks hold against the accumulated molecule.

    Partial merges are deduplicated level by level under isomorphisms that
    fix ``pinned`` base positions pointwise and keep atoms with their
    introducing fragment, which keeps symmetric attachment products from
    exploding.  Fragments are processed in order and options in a fixed
    order, so the output is deterministic.  ``limit`` caps the states kept
    per level (decode-time safety valve; leave None for exhaustive sets).
    """
    anchor = list(anchor)
    anchor_bonds = [
        (p, q) for (p, q) in sorted(base_bonds) if p in anchor and q in anchor
    ]
    states = [
        LocalMerge(
            list(base_atoms), dict(base_bonds), list(base_totals), [],
            len(base_atoms), [-1] * len(base_atoms),
        )
    ]
    for k, frag in enumerate(frags):
        f_totals = _fragment_totals(frag)
        nxt: list[LocalMerge] = []
        buckets: dict[tuple, list[LocalMerge]] = {}
        for state in states:
            if limit is not None and len(nxt) >= limit:
                break
            for opt in _options(state, frag, f_totals, anchor, anchor_bonds,
                                base_bonds):
                applied = _apply(state, frag, opt, k)
                if applied is None:
                    continue
                key = _merge_key(applied, pinned)
                bucket = buckets.setdefault(key, [])
                if any(_merge_equal(applied, other, pinned) for other in bucket):
                    continue
                bucket.append(applied)
                nxt.append(applied)
                if limit is not None and len(nxt) >= limit:
                    break
        states = nxt
        if not states:
            break
    return states


def _options(
    state: LocalMerge,
    frag: MolGraph,
    f_totals: list[float],
    anchor: list[int],
    anchor_bonds: list[tuple[int, int]],
    base_bonds: dict[tuple[int, int], int],
) -> list[tuple]:
    options: list[tuple] = []
    for fa in range(len(frag)):
        for pos in anchor:
            if not _atoms_match(frag.atoms[fa], state.atoms[pos]):
                continue
            cap = max_valence(state.atoms[pos].element, state.atoms[pos].charge)
            if state.totals[pos] + f_totals[fa] <= cap + _EPS:
                options.append(("atom", fa, pos))
    if len(frag) == 2:
        # A two-atom fragment sharing a whole bond would be fully contained
        # in its neighbor; decompositions never produce such clusters.
        return options
    for fb in frag.bonds:
        for p, q in anchor_bonds:
            if base_bonds[(p, q)] != fb.order:
                continue
            shared = BOND_CONTRIBUTION[fb.order]
            for fu, fv in ((fb.u, fb.v), (fb.v, fb.u)):
                if not (
                    _atoms_match(frag.atoms[fu], state.atoms[p])
                    and _atoms_match(frag.atoms[fv], state.atoms[q])
                ):
                    continue
                cap_p = max_valence(state.atoms[p].element, state.atoms[p].charge)
                cap_q = max_valence(state.atoms[q].element, state.atoms[q].charge)
                if (
                    state.totals[p] + f_totals[fu] - shared <= cap_p + _EPS
                    and state.totals[q] + f_totals[fv] - shared <= cap_q + _EPS
                ):
                    options.append(("bond", (fu, fv), (p, q)))
    return options


def _apply(state: LocalMerge, frag: MolGraph, opt: tuple, child: int) -> LocalMerge | None:
    atoms = list(state.atoms)
    bonds = dict(state.bonds)
    totals = list(state.totals)
    alpha = list(state.alpha)
    mapping: dict[int, int] = {}
    if opt[0] == "atom":
        mapping[opt[1]] = opt[2]
    else:
        (fu, fv), (p, q) = opt[1], opt[2]
        mapping[fu], mapping[fv] = p, q
    for fa in range(len(frag)):
        if fa not in mapping:
            mapping[fa] = len(atoms)
            atoms.append(frag.atoms[fa])
            totals.append(0.0)
            alpha.append(child)
    for b in frag.bonds:
        la, lb = mapping[b.u], mapping[b.v]
        key = _bond_key(la, lb)
        if key in bonds:
            # Only the explicitly merged bond may coincide with a base bond.
            if bonds[key] != b.order:
                return None
            continue
        bonds[key] = b.order
        contrib = BOND_CONTRIBUTION[b.order]
        totals[la] += contrib
        totals[lb] += contrib
        for loc in (la, lb):
            cap = max_valence(atoms[loc].element, atoms[loc].charge)
            if totals[loc] > cap + _EPS:
                return None
    return LocalMerge(atoms, bonds, totals, state.maps + [mapping],
                      state.n_base, alpha)


def _merge_key(m: LocalMerge, pinned: Sequence[int]) -> tuple:
    """Refinement-based invariant of the anchored isomorphism class."""
    pinset = set(pinned)
    n = len(m.atoms)
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for (u, v), o in m.bonds.items():
        adj[u].append((o, v))
        adj[v].append((o, u))
    labels: list = [
        (a.element, a.charge, a.aromatic, m.alpha[i], i if i in pinset else -1)
        for i, a in enumerate(m.atoms)
    ]
    for _ in range(2):
        labels = [
            hash((labels[i], tuple(sorted((o, labels[j]) for o, j in adj[i]))))
            for i in range(n)
        ]
    return tuple(sorted(labels))


def _merge_equal(a: LocalMerge, b: LocalMerge, pinned: Sequence[int]) -> bool:
    from ..molgraph import find_isomorphism

    if len(a.atoms) != len(b.atoms) or len(a.bonds) != len(b.bonds):
        return False
    return find_isomorphism(
        a.as_fragment(),
        b.as_fragment(),
        anchor={p: p for p in pinned},
        a_keys=a.alpha,
        b_keys=b.alpha,
    ) is not None


class LabelCatalog:
    """Vocabulary-wide chemistry tables used by decoding and assembly."""

    def __init__(self, vocab: Vocabulary) -> None:
        self.vocab = vocab
        self.fragments: list[MolGraph] = [parse_fragment(s) for s in vocab.labels]
        self.kinds: list[str] = []
        self.unsat: list[tuple[int, ...]] = []
        for frag in self.fragments:
            if len(frag) == 1:
                self.kinds.append("atom")
            elif len(frag) == 2:
                self.kinds.append("bond")
            else:
                self.kinds.append("ring")
            sat = aromatic_satisfied(
                frag.atoms, {b.endpoints: b.order for b in frag.bonds}
            )
            self.unsat.append(
                tuple(
                    i for i, a in enumerate(frag.atoms)
                    if a.aromatic and i not in sat
                )
            )
        # Cheapest aromatic-ring coverage per (element, charge): the valence
        # a covering ring consumes at the atom it merges onto.
        self._cover: dict[tuple[str, int], float] = {}
        for frag in self.fragments:
            bonds = {b.endpoints: b.order for b in frag.bonds}
            sat = aromatic_satisfied(frag.atoms, bonds)
            for i in sat:
                a = frag.atoms[i]
                key = (a.element, a.charge)
                cost = frag.valence_total(i)
                if key not in self._cover or cost < self._cover[key]:
                    self._cover[key] = cost
        self._hood_cache: dict[tuple, tuple[bool, int]] = {}

    def __len__(self) -> int:
        return len(self.fragments)

    def fragment(self, label_id: int) -> MolGraph:
        return self.fragments[label_id]

    def cover_cost(self, atom: Atom) -> float | None:
        return self._cover.get((atom.element, atom.charge))

    def evaluate_neighborhood(
        self, label_id: int, neighbor_ids: Sequence[int]
    ) -> tuple[bool, int]:
        """Feasibility of a node's label against its neighbor labels.

        Returns ``(feasible, pending)``: feasible means some simultaneous
        merge of all neighbors exists in which every aromatic atom lacking a
        ring is still coverable (capacity for a future ring merge remains);
        ``pending`` is the smallest achievable count of such atoms belonging
        to the node's own fragment.
        """
        key = (label_id, tuple(sorted(neighbor_ids)))
        hit = self._hood_cache.get(key)
        if hit is not None:
            return hit
        base = self.fragments[label_id]
        base_bonds = {b.endpoints: b.order for b in base.bonds}
        result: tuple[bool, int] = (False, 0)
        best: int | None = None
        for merge in joint_merges(
            base.atoms,
            base_bonds,
            _fragment_totals(base),
            range(len(base)),
            [self.fragments[j] for j in neighbor_ids],
        ):
            sat = aromatic_satisfied(merge.atoms, merge.bonds)
            ok = True
            own_pending = 0
            for loc, atom in enumerate(merge.atoms):
                if not atom.aromatic or loc in sat:
                    continue
                cost = self.cover_cost(atom)
                cap = max_valence(atom.element, atom.charge)
                if cost is None or merge.totals[loc] + cost > cap + _EPS:
                    ok = False
                    break
                if loc < merge.n_base:
                    own_pending += 1
            if ok and (best is None or own_pending < best):
                best = own_pending
                if best == 0:
                    break
        if best is not None:
            result = (True, best)
        self._hood_cache[key] = result
        return result


def compatible_labels(
    catalog: LabelCatalog, node_label: int, neighbor_labels: Sequence[int]
) -> list[int]:
    """Label ids that can still attach to a node, given committed neighbors.

    A label qualifies when at least one simultaneous valence-valid merge of
    the committed neighbors plus the candidate exists (aromatic coverage
    capacity included).
    """
    out = []
    for cand in range(len(catalog)):
        feasible, _ = catalog.evaluate_neighborhood(
            node_label, list(neighbor_labels) + [cand]
        )
        if feasible:
            out.append(cand)
    return out
