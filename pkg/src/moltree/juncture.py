"""Cluster-tree decomposition of molecules and cluster vocabularies.

A molecule is covered by overlapping clusters: its non-ring bonds, its rings
(bridged ring systems merged), and hub atoms shared by three or more of
those clusters.  The cluster graph connects every intersecting pair; a
maximum spanning tree over it, with hub-atom edges weighted above all
others, is the decomposition.  Any two clusters in the result share at most
two atoms.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .molgraph import MolGraph, write_canonical
from .molgraph.rings import find_sssr, ring_bond_set

__all__ = [
    "Cluster",
    "JunctionTree",
    "Vocabulary",
    "DecompositionError",
    "OovCluster",
    "decompose",
    "verify",
    "build_vocabulary",
    "assign_labels",
    "cluster_fragment",
    "tree_sexpr",
    "save_vocabulary",
    "load_vocabulary",
]


class DecompositionError(ValueError):
    """The molecule cannot be decomposed (e.g. disconnected input)."""


class OovCluster(KeyError):
    """A cluster label is absent from the vocabulary."""

    def __init__(self, label: str) -> None:
        super().__init__(label)
        self.label = label


@dataclass(frozen=True, slots=True)
class Cluster:
    """An induced subgraph of the parent molecule."""

    atoms: tuple[int, ...]  # sorted parent-graph indices
    kind: str  # "bond", "ring", or "atom"
    label: str  # canonical string of the induced subgraph


class JunctionTree:
    """Labeled tree of clusters with per-node atom maps into the molecule."""

    __slots__ = ("nodes", "edges", "root", "_adj")

    def __init__(
        self,
        nodes: Sequence[Cluster],
        edges: Iterable[tuple[int, int]],
        root: int,
    ) -> None:
        self.nodes: tuple[Cluster, ...] = tuple(nodes)
        self.edges: tuple[tuple[int, int], ...] = tuple(
            (min(a, b), max(a, b)) for a, b in edges
        )
        self.root = root
        adj: list[list[int]] = [[] for _ in self.nodes]
        for a, b in self.edges:
            adj[a].append(b)
            adj[b].append(a)
        self._adj = tuple(tuple(sorted(x)) for x in adj)

    def neighbors(self, i: int) -> tuple[int, ...]:
        return self._adj[i]

    def __len__(self) -> int:
        return len(self.nodes)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, JunctionTree):
            return NotImplemented
        return (
            self.nodes == other.nodes
            and self.edges == other.edges
            and self.root == other.root
        )

    def __repr__(self) -> str:
        return f"JunctionTree(nodes={len(self.nodes)}, root={self.root})"


def cluster_fragment(g: MolGraph, atoms: Sequence[int]) -> MolGraph:
    """Induced fragment of ``g`` on the given atom indices."""
    sub, _ = g.induced_subgraph(sorted(atoms))
    return sub


def _label(g: MolGraph, atoms: Sequence[int]) -> str:
    return write_canonical(cluster_fragment(g, atoms))


def decompose(g: MolGraph) -> JunctionTree:
    """Decompose a connected molecule into its cluster tree.

    Raises:
        DecompositionError: the input graph is disconnected.
    """
    if not g.is_connected():
        raise DecompositionError("cannot decompose a disconnected graph")
    if len(g) == 1:
        c = Cluster((0,), "atom", _label(g, [0]))
        return JunctionTree([c], [], 0)

    ring_bonds = ring_bond_set(g)
    bond_clusters = [
        b.endpoints for b in g.bonds if b.endpoints not in ring_bonds
    ]
    ring_sets = _merge_bridged([frozenset(r) for r in find_sssr(g)])

    membership: dict[int, int] = {}
    for cl in bond_clusters:
        for a in cl:
            membership[a] = membership.get(a, 0) + 1
    for rs in ring_sets:
        for a in rs:
            membership[a] = membership.get(a, 0) + 1
    hub_atoms = sorted(a for a, k in membership.items() if k >= 3)

    clusters: list[tuple[tuple[int, ...], str]] = []
    clusters.extend((cl, "bond") for cl in sorted(bond_clusters))
    clusters.extend(
        (tuple(sorted(rs)), "ring") for rs in sorted(ring_sets, key=sorted)
    )
    hub_start = len(clusters)
    clusters.extend(((a,), "atom") for a in hub_atoms)

    atom_sets = [frozenset(c[0]) for c in clusters]
    weighted: list[tuple[int, int, int]] = []  # (tier, i, j); tier 0 outranks 1
    for i in range(len(clusters)):
        for j in range(i + 1, len(clusters)):
            if atom_sets[i] & atom_sets[j]:
                tier = 0 if (i >= hub_start or j >= hub_start) else 1
                weighted.append((tier, i, j))
    weighted.sort()

    parent = list(range(len(clusters)))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    edges: list[tuple[int, int]] = []
    for _, i, j in weighted:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            edges.append((i, j))

    nodes = [Cluster(atoms, kind, _label(g, atoms)) for atoms, kind in clusters]
    lowest = min(min(c.atoms) for c in nodes)
    root = min(i for i, c in enumerate(nodes) if lowest in c.atoms)
    return JunctionTree(nodes, edges, root)


def _merge_bridged(ring_sets: list[frozenset[int]]) -> list[frozenset[int]]:
    """Merge rings sharing more than two atoms, transitively to a fixpoint."""
    sets = sorted(set(ring_sets), key=sorted)
    changed = True
    while changed:
        changed = False
        for i in range(len(sets)):
            for j in range(i + 1, len(sets)):
                if len(sets[i] & sets[j]) > 2:
                    merged = sets[i] | sets[j]
                    sets = [s for k, s in enumerate(sets) if k not in (i, j)]
                    sets.append(merged)
                    sets.sort(key=sorted)
                    changed = True
                    break
            if changed:
                break
    return sets


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

def verify(t: JunctionTree, g: MolGraph) -> list[str]:
    """Check every tree invariant against the molecule.

    Returns an empty list when all invariants hold; otherwise one message per
    violation, naming the constraint and the offending clusters.
    """
    out: list[str] = []
    n = len(t.nodes)
    if n == 0:
        return ["tree structure: empty tree"]

    if len(t.edges) != n - 1 or not _tree_connected(t):
        out.append(
            f"tree structure: {len(t.edges)} edges over {n} nodes is not a tree"
        )

    for i, c in enumerate(t.nodes):
        size = len(c.atoms)
        if c.kind == "bond" and size != 2:
            out.append(f"cluster kind: bond cluster {i} has {size} atoms")
        elif c.kind == "atom" and size != 1:
            out.append(f"cluster kind: atom cluster {i} has {size} atoms")
        elif c.kind == "ring":
            frag = cluster_fragment(g, c.atoms)
            if size < 3 or len(frag.bonds) < len(frag.atoms):
                out.append(f"cluster kind: ring cluster {i} is not cyclic")
        if any(a < 0 or a >= len(g) for a in c.atoms):
            out.append(f"cluster bounds: cluster {i} indexes outside molecule")
            continue
        if c.label != _label(g, c.atoms):
            out.append(f"cluster label: cluster {i} label mismatch")

    covered_atoms = {a for c in t.nodes for a in c.atoms}
    if covered_atoms != set(range(len(g))):
        missing = sorted(set(range(len(g))) - covered_atoms)
        out.append(f"union coverage: atoms {missing} not in any cluster")
    sets = [frozenset(c.atoms) for c in t.nodes]
    for b in g.bonds:
        if not any(b.u in s and b.v in s for s in sets):
            out.append(f"union coverage: bond {b.endpoints} not in any cluster")

    for i in range(n):
        for j in range(i + 1, n):
            if len(sets[i] & sets[j]) > 2:
                out.append(
                    f"pairwise overlap: clusters {i} and {j} share"
                    f" {len(sets[i] & sets[j])} atoms"
                )

    if len(t.edges) == n - 1 and _tree_connected(t):
        for i in range(n):
            for j in range(i + 1, n):
                shared = sets[i] & sets[j]
                if not shared:
                    continue
                for k in _tree_path(t, i, j)[1:-1]:
                    if not shared <= sets[k]:
                        out.append(
                            "running intersection: atoms"
                            f" {sorted(shared - sets[k])} of clusters {i},{j}"
                            f" missing from path cluster {k}"
                        )
    return out


def _tree_connected(t: JunctionTree) -> bool:
    seen = {0}
    stack = [0]
    while stack:
        for j in t.neighbors(stack.pop()):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return len(seen) == len(t.nodes)


def _tree_path(t: JunctionTree, a: int, b: int) -> list[int]:
    prev = {a: -1}
    queue = [a]
    head = 0
    while head < len(queue):
        u = queue[head]
        head += 1
        if u == b:
            break
        for v in t.neighbors(u):
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


# ---------------------------------------------------------------------------
# Vocabulary
# ---------------------------------------------------------------------------

class Vocabulary:
    """Cluster-label set: canonical subgraph strings with dense integer ids."""

    __slots__ = ("labels", "index")

    def __init__(self, labels: Iterable[str]) -> None:
        self.labels: tuple[str, ...] = tuple(sorted(set(labels)))
        self.index: dict[str, int] = {s: i for i, s in enumerate(self.labels)}

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.index

    def id_of(self, label: str) -> int:
        try:
            return self.index[label]
        except KeyError:
            raise OovCluster(label) from None

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self.labels == other.labels


def build_vocabulary(corpus: Sequence[MolGraph]) -> Vocabulary:
    """Union of cluster labels over the corpus, deduplicated and sorted."""
    if not corpus:
        raise ValueError("corpus is empty")
    labels: set[str] = set()
    for lineno, g in enumerate(corpus, start=1):
        try:
            tree = decompose(g)
        except DecompositionError as e:
            raise DecompositionError(f"molecule {lineno}: {e}") from e
        labels.update(c.label for c in tree.nodes)
    return Vocabulary(labels)


def assign_labels(t: JunctionTree, v: Vocabulary) -> list[int]:
    """Vocabulary id per tree node; raises OovCluster on unknown labels."""
    return [v.id_of(c.label) for c in t.nodes]


def save_vocabulary(v: Vocabulary, path) -> None:
    """One canonical label per line; the 0-based line number is the id."""
    with open(path, "w", encoding="utf-8") as fh:
        for label in v.labels:
            fh.write(label + "\n")


def load_vocabulary(path) -> Vocabulary:
    with open(path, encoding="utf-8") as fh:
        labels = [line.rstrip("\n") for line in fh if line.strip()]
    v = Vocabulary(labels)
    if list(v.labels) != labels:
        raise ValueError(f"vocabulary file {path} is not sorted/deduplicated")
    return v


def tree_sexpr(t: JunctionTree) -> str:
    """One-line S-expression of (label children...) rooted at ``t.root``."""

    def rec(i: int, parent: int) -> str:
        kids = [rec(j, i) for j in t.neighbors(i) if j != parent]
        inner = " ".join([f'"{t.nodes[i].label}"'] + kids)
        return f"({inner})"

    return rec(t.root, -1)
