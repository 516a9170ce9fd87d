"""Neighborhood-wise graph assembly from a label tree.

Every tree node is realized by merging its cluster fragment with the
fragments of its not-yet-committed neighbors; candidates are scored by a
message-passing network whose cross-cluster edges receive tree-context
messages, and the molecule is assembled one neighborhood at a time in
decode order with bounded backtracking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import tensorcore as tc
from ..encoder import edge_message_pass, graph_tensors
from ..juncture import Cluster, JunctionTree
from ..molgraph import Atom, Bond, MolGraph, MoleculeError, find_isomorphism
from ..molgraph.model import BOND_CONTRIBUTION
from ..tensorcore import ParamStore, Tape, Tensor
from .catalog import LabelCatalog, aromatic_satisfied, joint_merges

__all__ = [
    "EmptyCandidates",
    "AssemblyFailed",
    "GroundTruthNotInCandidates",
    "CandidateSubgraph",
    "AssemblyResult",
    "AssemblyState",
    "GraphLossStats",
    "enumerate_candidates",
    "score_candidate",
    "assemble",
    "graph_loss",
    "preorder",
]

DEFAULT_RETRY_BUDGET = 20


class EmptyCandidates(RuntimeError):
    """No valence-valid merge exists at a tree node: assembly dead-end."""


class AssemblyFailed(RuntimeError):
    """Backtracking budget exhausted without a valid molecule."""


class GroundTruthNotInCandidates(RuntimeError):
    """Candidate enumeration missed the true local subgraph (internal bug)."""


@dataclass
class CandidateSubgraph:
    """One merged neighborhood: local fragment plus its tree-position map."""

    graph: MolGraph
    alpha: tuple[int, ...]  # per local atom: owning tree node
    assembly_ids: tuple[int, ...]  # per local atom: assembly atom id, -1 if new
    child_maps: dict[int, dict[int, int]]  # child node -> fragment atom -> local
    pinned: tuple[int, ...] = ()  # local atoms fixed by the wider assembly


@dataclass
class AssemblyResult:
    graph: MolGraph
    chosen: list[int]  # candidate index per node, in assembly order
    sizes: list[int]  # |candidate set| per node, in assembly order
    node_atoms: dict[int, tuple[int, ...]]
    tree: JunctionTree  # input tree with atom maps filled in


class AssemblyState:
    """Growing molecule: atoms, bonds, accumulated valence, cluster placements."""

    def __init__(self) -> None:
        self.atoms: list[Atom] = []
        self.bonds: dict[tuple[int, int], int] = {}
        self.totals: list[float] = []
        self.node_atoms: dict[int, tuple[int, ...]] = {}

    def clone(self) -> "AssemblyState":
        s = AssemblyState()
        s.atoms = list(self.atoms)
        s.bonds = dict(self.bonds)
        s.totals = list(self.totals)
        s.node_atoms = dict(self.node_atoms)
        return s

    def place_atom(self, atom: Atom) -> int:
        self.atoms.append(atom)
        self.totals.append(0.0)
        return len(self.atoms) - 1

    def add_bond(self, u: int, v: int, order: int) -> None:
        key = (u, v) if u < v else (v, u)
        if key in self.bonds:
            if self.bonds[key] != order:
                raise MoleculeError(f"conflicting bond orders at {key}")
            return
        self.bonds[key] = order
        self.totals[u] += BOND_CONTRIBUTION[order]
        self.totals[v] += BOND_CONTRIBUTION[order]

    def place_root(self, node: int, frag: MolGraph) -> None:
        ids = [self.place_atom(a) for a in frag.atoms]
        for b in frag.bonds:
            self.add_bond(ids[b.u], ids[b.v], b.order)
        self.node_atoms[node] = tuple(ids)

    def attach(self, node: int, frag: MolGraph, mapping: dict[int, int]) -> None:
        """Place a fragment whose ``mapping`` atoms merge with existing ones."""
        full = dict(mapping)
        for fa in range(len(frag)):
            if fa not in full:
                full[fa] = self.place_atom(frag.atoms[fa])
        for b in frag.bonds:
            self.add_bond(full[b.u], full[b.v], b.order)
        self.node_atoms[node] = tuple(full[fa] for fa in range(len(frag)))

    def molecule(self) -> MolGraph:
        bonds = [Bond(u, v, o) for (u, v), o in sorted(self.bonds.items())]
        return MolGraph.molecule(self.atoms, bonds)


def _tree_children(tree: JunctionTree) -> tuple[dict[int, list[int]], dict[int, int]]:
    """Children (ascending id) and parent maps oriented from the tree root."""
    children: dict[int, list[int]] = {}
    parent: dict[int, int] = {tree.root: -1}
    stack = [tree.root]
    while stack:
        i = stack.pop()
        kids = sorted(j for j in tree.neighbors(i) if j not in parent)
        children[i] = kids
        for j in kids:
            parent[j] = i
            stack.append(j)
    return children, parent


def preorder(tree: JunctionTree, children: dict[int, list[int]]) -> list[int]:
    out: list[int] = []
    stack = [tree.root]
    while stack:
        i = stack.pop()
        out.append(i)
        for j in reversed(children[i]):
            stack.append(j)
    return out


def _base_context(
    state: AssemblyState, node: int, parent: int
) -> tuple[list[int], list[Atom], dict[tuple[int, int], int], list[float], list[int]]:
    """Committed local context: the node's cluster plus its parent's atoms."""
    own = state.node_atoms[node]
    base_assembly = list(own)
    for a in state.node_atoms.get(parent, ()):
        if a not in base_assembly:
            base_assembly.append(a)
    local_of = {a: k for k, a in enumerate(base_assembly)}
    base_atoms = [state.atoms[a] for a in base_assembly]
    base_bonds = {
        (min(local_of[u], local_of[v]), max(local_of[u], local_of[v])): o
        for (u, v), o in state.bonds.items()
        if u in local_of and v in local_of
    }
    base_totals = [state.totals[a] for a in base_assembly]
    anchor = list(range(len(own)))
    return base_assembly, base_atoms, base_bonds, base_totals, anchor


def enumerate_candidates(
    catalog: LabelCatalog,
    ids: list[int],
    state: AssemblyState,
    node: int,
    parent: int,
    child_nodes: list[int],
    *,
    require_aromatic_closure: bool = False,
    limit: int | None = None,
) -> list[CandidateSubgraph]:
    """All distinct merges of a node's cluster with its pending neighbors.

    The node's cluster anchors the merge (its committed parent cluster sits
    in the local graph as fixed context); each pending child attaches
    through one shared atom or one shared bond.  Candidates are
    deduplicated under isomorphisms that preserve tree-position maps and
    fix the parent-cluster atoms pointwise; atoms private to the node's own
    cluster may permute, which collapses its internal symmetries.

    ``require_aromatic_closure`` demands every aromatic atom of the node's
    own cluster lie on an aromatic ring inside the candidate; decoding turns
    this on, ground-truth scoring leaves it off.

    Raises:
        EmptyCandidates: no valence-valid merge exists.
    """
    base_assembly, base_atoms, base_bonds, base_totals, anchor = _base_context(
        state, node, parent
    )
    own_set = set(anchor)
    parent_atoms = set(state.node_atoms.get(parent, ()))
    pinned = tuple(
        pos for pos, aid in enumerate(base_assembly) if aid in parent_atoms
    )
    frags = [catalog.fragment(ids[c]) for c in child_nodes]
    out: list[CandidateSubgraph] = []
    for merge in joint_merges(base_atoms, base_bonds, base_totals, anchor, frags,
                              pinned=pinned, limit=limit):
        alpha = [
            (node if pos in own_set else parent)
            for pos in range(len(base_assembly))
        ] + [-1] * (len(merge.atoms) - len(base_assembly))
        for child, mapping in zip(child_nodes, merge.maps):
            for pos in mapping.values():
                if pos >= len(base_assembly):
                    alpha[pos] = child
        if require_aromatic_closure:
            sat = aromatic_satisfied(merge.atoms, merge.bonds)
            if any(
                merge.atoms[pos].aromatic and pos not in sat for pos in anchor
            ):
                continue
        graph = MolGraph.fragment(
            merge.atoms,
            [Bond(u, v, o) for (u, v), o in sorted(merge.bonds.items())],
        )
        assembly_ids = tuple(
            base_assembly[pos] if pos < len(base_assembly) else -1
            for pos in range(len(merge.atoms))
        )
        out.append(
            CandidateSubgraph(
                graph,
                tuple(alpha),
                assembly_ids,
                {c: dict(m) for c, m in zip(child_nodes, merge.maps)},
                pinned,
            )
        )
    if not out:
        raise EmptyCandidates(f"no valid merge at tree node {node}")
    return out


def _same_candidate(a: CandidateSubgraph, b: CandidateSubgraph) -> bool:
    if len(a.graph) != len(b.graph):
        return False
    anchor = {p: p for p in a.pinned}
    return find_isomorphism(
        a.graph, b.graph, anchor=anchor, a_keys=a.alpha, b_keys=b.alpha
    ) is not None


def score_candidate(
    tape: Tape | None,
    params: ParamStore,
    candidate: CandidateSubgraph,
    tree_messages: dict[tuple[int, int], Tensor],
    z_graph: Tensor,
    iterations: int,
) -> Tensor:
    """Dot product of the candidate's pooled state with the graph latent.

    Message passing inside the candidate adds the tree-context message on
    every edge that crosses between clusters, so symmetric merges that play
    different tree roles score differently.
    """
    gt = graph_tensors(candidate.graph)
    hidden = params["Wa3"].data.shape[0]
    zero = tc.constant(np.zeros((1, hidden)))
    inject_rows: list[Tensor] = []
    inject_any = False
    for e in range(gt.src.shape[0]):
        au, av = candidate.alpha[gt.src[e]], candidate.alpha[gt.dst[e]]
        if au != av:
            inject_rows.append(tree_messages[(au, av)])
            inject_any = True
        else:
            inject_rows.append(zero)
    inject = tc.vstack(tape, inject_rows) if inject_any else None
    nu = edge_message_pass(
        tape, gt, params["Wa1"], params["Wa2"], params["Wa3"], iterations, inject
    )
    atom_x = tc.constant(gt.atom_x)
    incoming = tc.segment_sum(
        tape, tc.matmul(tape, nu, params["Ua2"]), gt.dst, gt.n_atoms
    )
    h_atoms = tc.relu(
        tape, tc.add(tape, tc.matmul(tape, atom_x, params["Ua1"]), incoming)
    )
    pooled = tc.mean_rows(tape, h_atoms)
    return tc.dot(tape, pooled, z_graph)


def score_candidates(
    params: ParamStore,
    cands: list[CandidateSubgraph],
    tree_messages: dict[tuple[int, int], Tensor],
    z_graph: np.ndarray,
    iterations: int,
) -> np.ndarray:
    """Inference-mode scores for a whole candidate set in one pass.

    Builds the disjoint union of the candidate graphs and runs the scorer's
    message passing once; agrees with :func:`score_candidate` per element.
    """
    from ..kernels import segment_sum_rows

    gts = [graph_tensors(c.graph) for c in cands]
    atom_x = np.concatenate([gt.atom_x for gt in gts], axis=0)
    edge_x = np.concatenate([gt.edge_x for gt in gts], axis=0)
    n_atoms = atom_x.shape[0]
    src = np.concatenate(
        [gt.src + off for gt, off in zip(gts, _offsets(gts, "atoms"))]
    ) if gts else np.zeros(0, dtype=np.int64)
    dst = np.concatenate(
        [gt.dst + off for gt, off in zip(gts, _offsets(gts, "atoms"))]
    )
    rev = np.concatenate(
        [gt.rev + off for gt, off in zip(gts, _offsets(gts, "edges"))]
    )
    owner = np.concatenate(
        [np.full(gt.n_atoms, k, dtype=np.int64) for k, gt in enumerate(gts)]
    )
    hidden = params["Wa3"].data.shape[0]
    inject = np.zeros((edge_x.shape[0], hidden))
    pos = 0
    any_inject = False
    for c, gt in zip(cands, gts):
        for e in range(gt.src.shape[0]):
            au, av = c.alpha[gt.src[e]], c.alpha[gt.dst[e]]
            if au != av:
                inject[pos + e] = tree_messages[(au, av)].data[0]
                any_inject = True
        pos += gt.src.shape[0]
    w1, w2, w3 = params["Wa1"].data, params["Wa2"].data, params["Wa3"].data
    base = atom_x[src] @ w1 + edge_x @ w2
    nu = np.zeros((edge_x.shape[0], hidden))
    for _ in range(iterations):
        total = segment_sum_rows(nu, dst, n_atoms)
        incoming = total[src] - nu[rev]
        if any_inject:
            incoming = incoming + inject
        nu = np.maximum(base + incoming @ w3, 0.0)
    inc = segment_sum_rows(nu @ params["Ua2"].data, dst, n_atoms)
    h = np.maximum(atom_x @ params["Ua1"].data + inc, 0.0)
    sums = segment_sum_rows(h, owner, len(cands))
    counts = np.array([gt.n_atoms for gt in gts], dtype=np.float64)
    pooled = sums / counts[:, None]
    return pooled @ np.asarray(z_graph, dtype=np.float64).reshape(-1)


def _offsets(gts, kind: str) -> list[int]:
    out = []
    acc = 0
    for gt in gts:
        out.append(acc)
        acc += gt.n_atoms if kind == "atoms" else gt.src.shape[0]
    return out


def _commit(state: AssemblyState, candidate: CandidateSubgraph) -> AssemblyState:
    """Apply a candidate: place new atoms and bonds, register child clusters."""
    new = state.clone()
    local_to_assembly: dict[int, int] = {}
    for pos, aid in enumerate(candidate.assembly_ids):
        if aid >= 0:
            local_to_assembly[pos] = aid
    for pos in range(len(candidate.graph)):
        if pos not in local_to_assembly:
            local_to_assembly[pos] = new.place_atom(candidate.graph.atoms[pos])
    for b in candidate.graph.bonds:
        new.add_bond(local_to_assembly[b.u], local_to_assembly[b.v], b.order)
    for child, mapping in candidate.child_maps.items():
        new.node_atoms[child] = tuple(
            local_to_assembly[mapping[fa]] for fa in range(len(mapping))
        )
    return new


def assemble(
    params: ParamStore,
    catalog: LabelCatalog,
    tree: JunctionTree,
    ids: list[int],
    z_graph: np.ndarray,
    tree_messages: dict[tuple[int, int], Tensor],
    *,
    iterations: int = 3,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    retry_budget: int = DEFAULT_RETRY_BUDGET,
    candidate_limit: int | None = 512,
    trace: list | None = None,
) -> AssemblyResult:
    """Realize a molecule from a label tree, one neighborhood at a time.

    Nodes are processed in decode order; at each one the highest-scoring
    candidate is taken first (``mode="sample"`` draws the order by softmax
    via Gumbel keys).  Dead-ends backtrack to the previous node's next-best
    candidate, up to ``retry_budget`` alternatives in total; the finished
    molecule must pass full validation.

    Raises:
        AssemblyFailed: no valid molecule within the backtracking budget.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode requires an rng")
    zg = np.asarray(z_graph, dtype=np.float64).reshape(-1)
    children, parent = _tree_children(tree)
    order = preorder(tree, children)
    state0 = AssemblyState()
    state0.place_root(tree.root, catalog.fragment(ids[tree.root]))

    chosen: list[int] = [-1] * len(order)
    sizes: list[int] = [0] * len(order)
    retries = 0
    memo: dict[tuple, tuple[list[CandidateSubgraph], np.ndarray] | None] = {}

    def node_candidates(k: int, state: AssemblyState):
        # The same local context recurs when backtracking elsewhere.
        node = order[k]
        base = list(state.node_atoms[node])
        for a in state.node_atoms.get(parent[node], ()):
            if a not in base:
                base.append(a)
        key = (
            node,
            tuple(base),
            tuple(state.totals[a] for a in base),
            tuple(sorted(
                (u, v, o) for (u, v), o in state.bonds.items()
                if u in set(base) and v in set(base)
            )),
        )
        if key in memo:
            return memo[key]
        try:
            cands = enumerate_candidates(
                catalog, ids, state, node, parent[node], children[node],
                require_aromatic_closure=True, limit=candidate_limit,
            )
        except EmptyCandidates:
            memo[key] = None
            return None
        scores = score_candidates(params, cands, tree_messages, zg, iterations)
        memo[key] = (cands, scores)
        return memo[key]

    def descend(k: int, state: AssemblyState) -> AssemblyState | None:
        nonlocal retries
        if k == len(order):
            try:
                state.molecule()
            except MoleculeError:
                return None
            return state
        found = node_candidates(k, state)
        if found is None:
            return None
        cands, scores = found
        keys = scores + rng.gumbel(size=scores.shape) if mode == "sample" else scores
        ranked = list(np.argsort(-keys, kind="stable"))
        sizes[k] = len(cands)
        for attempt, idx in enumerate(ranked):
            if attempt > 0:
                retries += 1
                if retries > retry_budget:
                    raise AssemblyFailed(
                        f"backtracking budget ({retry_budget}) exhausted"
                    )
            chosen[k] = int(idx)
            if trace is not None:
                trace.append(
                    {"event": "assemble", "node": order[k],
                     "candidates": len(cands), "pick": int(idx)}
                )
            result = descend(k + 1, _commit(state, cands[idx]))
            if result is not None:
                return result
        return None

    final = descend(0, state0)
    if final is None:
        raise AssemblyFailed("no consistent assembly found")
    graph = final.molecule()
    realized = JunctionTree(
        [
            Cluster(tuple(sorted(final.node_atoms[i])), tree.nodes[i].kind,
                    tree.nodes[i].label)
            for i in range(len(tree))
        ],
        tree.edges,
        tree.root,
    )
    return AssemblyResult(graph, chosen, sizes, dict(final.node_atoms), realized)


# ---------------------------------------------------------------------------
# Teacher-forced assembly loss
# ---------------------------------------------------------------------------

@dataclass
class GraphLossStats:
    sizes: list[int]
    true_index: list[int]
    true_ranked_first: list[bool]


@dataclass
class AssemblyPlan:
    """Per-node candidate sets of a ground-truth tree (parameter-free)."""

    nodes: list[int]
    candidates: list[list[CandidateSubgraph]]
    true_index: list[int]


def assembly_plan(
    catalog: LabelCatalog,
    g: MolGraph,
    tree: JunctionTree,
    ids: list[int],
    sibling_order: dict[int, list[int]] | None = None,
) -> AssemblyPlan:
    """Enumerate every node's candidates along the teacher-forced walk.

    Candidate sets depend only on the molecule and its tree, so training
    precomputes this once per molecule.

    Raises:
        GroundTruthNotInCandidates: enumeration missed the real subgraph.
    """
    children, parent = _tree_children(tree)
    if sibling_order is not None:
        children = {i: list(sibling_order[i]) for i in children}
    order = preorder(tree, children)

    state = AssemblyState()
    for atom in g.atoms:
        state.place_atom(atom)
    state.node_atoms[tree.root] = tuple(sorted(tree.nodes[tree.root].atoms))
    _commit_cluster_bonds(state, g, tree.nodes[tree.root].atoms)

    plan = AssemblyPlan([], [], [])
    for node in order:
        kids = children[node]
        cands = enumerate_candidates(
            catalog, ids, state, node, parent[node], kids
        )
        true_idx = _find_true_candidate(
            cands, state, g, tree, node, parent[node], kids
        )
        if true_idx is None:
            raise GroundTruthNotInCandidates(
                f"true subgraph missing at tree node {node}"
            )
        plan.nodes.append(node)
        plan.candidates.append(cands)
        plan.true_index.append(true_idx)
        for child in kids:
            state.node_atoms[child] = tuple(sorted(tree.nodes[child].atoms))
            _commit_cluster_bonds(state, g, tree.nodes[child].atoms)
    return plan


def graph_loss(
    tape: Tape | None,
    params: ParamStore,
    catalog: LabelCatalog,
    g: MolGraph,
    tree: JunctionTree,
    ids: list[int],
    z_graph: Tensor,
    tree_messages: dict[tuple[int, int], Tensor],
    *,
    iterations: int = 3,
    sibling_order: dict[int, list[int]] | None = None,
    plan: AssemblyPlan | None = None,
) -> tuple[Tensor, GraphLossStats]:
    """Log-loss of the true neighborhood merge against all candidates.

    Walks the ground-truth tree in assembly order with true atom placements
    (teacher forcing); every node contributes log-sum-exp(scores) minus the
    true candidate's score, which is zero wherever the candidate set is a
    singleton.

    Raises:
        GroundTruthNotInCandidates: enumeration missed the real subgraph.
    """
    if plan is None:
        plan = assembly_plan(catalog, g, tree, ids, sibling_order)
    stats = GraphLossStats([], [], [])
    terms: list[Tensor] = []
    for cands, true_idx in zip(plan.candidates, plan.true_index):
        stats.sizes.append(len(cands))
        stats.true_index.append(true_idx)
        if len(cands) > 1:
            scores = [
                score_candidate(tape, params, c, tree_messages, z_graph, iterations)
                for c in cands
            ]
            packed = tc.pack(tape, scores)
            terms.append(
                tc.sub(tape, tc.logsumexp(tape, packed), scores[true_idx])
            )
            best = int(np.argmax(packed.data))
            stats.true_ranked_first.append(best == true_idx)
        else:
            stats.true_ranked_first.append(True)
    if terms:
        loss = terms[0]
        for t in terms[1:]:
            loss = tc.add(tape, loss, t)
    else:
        loss = tc.constant(np.array(0.0))
    return loss, stats


def _commit_cluster_bonds(state: AssemblyState, g: MolGraph, atoms) -> None:
    atom_set = set(atoms)
    for b in g.bonds:
        if b.u in atom_set and b.v in atom_set:
            state.add_bond(b.u, b.v, b.order)


def _find_true_candidate(
    cands: list[CandidateSubgraph],
    state: AssemblyState,
    g: MolGraph,
    tree: JunctionTree,
    node: int,
    parent: int,
    kids: list[int],
) -> int | None:
    """Index of the candidate anchored-isomorphic to the true local graph."""
    base_assembly, base_atoms, base_bonds, _, anchor = _base_context(
        state, node, parent
    )
    own_set = set(anchor)
    parent_atoms = set(state.node_atoms.get(parent, ()))
    pinned = [
        pos for pos, aid in enumerate(base_assembly) if aid in parent_atoms
    ]
    local_of = {a: k for k, a in enumerate(base_assembly)}
    atoms = list(base_atoms)
    bonds = dict(base_bonds)
    alpha = [
        (node if pos in own_set else parent) for pos in range(len(base_assembly))
    ]
    for child in kids:
        for a in sorted(tree.nodes[child].atoms):
            if a not in local_of:
                local_of[a] = len(atoms)
                atoms.append(g.atoms[a])
                alpha.append(child)
        child_set = set(tree.nodes[child].atoms)
        for b in g.bonds:
            if b.u in child_set and b.v in child_set:
                lu, lv = local_of[b.u], local_of[b.v]
                bonds.setdefault((min(lu, lv), max(lu, lv)), b.order)
    truth = MolGraph.fragment(
        atoms, [Bond(u, v, o) for (u, v), o in sorted(bonds.items())]
    )
    anchor_map = {p: p for p in pinned}
    for idx, cand in enumerate(cands):
        if len(cand.graph) != len(truth):
            continue
        if find_isomorphism(
            cand.graph, truth, anchor=anchor_map, a_keys=cand.alpha, b_keys=alpha
        ):
            return idx
    return None
