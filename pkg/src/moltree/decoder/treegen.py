"""Autoregressive tree generation and its teacher-forced loss.

Trees grow depth-first from the root.  Each visit makes a binary expansion
decision from the node label, the tree latent, and the messages received so
far; each new child's label comes from a softmax over the vocabulary,
masked at sampling time to chemically compatible labels.  Messages travel
along every traversed directed edge through the same gated recurrent unit
as the tree encoder.

Sampling-time feasibility is checked against a *witness assembly*: one
concrete partial molecule grown alongside the tree.  A label is admissible
only if its fragment verifiably attaches to the witness, with enough
valence left for the aromatic rings any uncovered aromatic atoms will still
need.  Nodes with uncovered aromatic atoms are forced to keep expanding
(the node budget always reserves room), so a finished tree always owns at
least one fully valid realization: the witness itself.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import tensorcore as tc
from ..encoder import gru_message
from ..juncture import Cluster, JunctionTree
from ..molgraph import Bond, MolGraph
from ..molgraph.model import BOND_CONTRIBUTION, max_valence
from ..tensorcore import ParamStore, Tape, Tensor
from .assembly import AssemblyResult, AssemblyState
from .catalog import LabelCatalog, aromatic_satisfied

__all__ = [
    "DecodeState",
    "TreeLossStats",
    "decode_tree",
    "tree_loss",
    "ordered_children",
    "decoded_to_tree",
    "topo_logit",
    "label_logits",
]

MAX_NODES_DEFAULT = 60
_EPS = 1e-9


def topo_logit(
    tape: Tape | None,
    params: ParamStore,
    z: Tensor,
    label_id: int,
    inward: list[Tensor],
) -> Tensor:
    """Score for "this node expands another child" (pre-sigmoid)."""
    inner = tc.add(
        tape,
        tc.row(tape, params["Wd1"], label_id),
        tc.matmul(tape, z, params["Wd2"]),
    )
    if inward:
        total = tc.sum_rows(tape, tc.vstack(tape, inward))
        inner = tc.add(tape, inner, tc.matmul(tape, total, params["Wd3"]))
    return tc.dot(tape, tc.relu(tape, inner), params["ud"])


def label_logits(
    tape: Tape | None,
    params: ParamStore,
    z: Tensor,
    h_edge: Tensor | None,
) -> Tensor:
    """Vocabulary logits for a child created along an edge (root: h_edge=None)."""
    inner = tc.matmul(tape, z, params["Wl1"])
    if h_edge is not None:
        inner = tc.add(tape, inner, tc.matmul(tape, h_edge, params["Wl2"]))
    return tc.matmul(tape, tc.relu(tape, inner), params["Ul"])


@dataclass
class _Attachment:
    """One admissible placement of a label at a node of the witness."""

    label: int
    mapping: dict[int, int]  # fragment atom -> witness atom (merged only)
    unsat_after: frozenset[int]


@dataclass
class DecodeState:
    """Partial tree being generated plus traversal bookkeeping."""

    labels: list[int] = field(default_factory=list)
    parent: list[int] = field(default_factory=list)
    children: list[list[int]] = field(default_factory=list)
    messages: dict[tuple[int, int], Tensor] = field(default_factory=dict)
    traversal: list[tuple[int, int]] = field(default_factory=list)
    witness: AssemblyState = field(default_factory=AssemblyState)
    unsat: frozenset[int] = frozenset()  # witness atoms missing their ring
    steps: int = 0

    def add_node(self, label: int, parent: int) -> int:
        idx = len(self.labels)
        self.labels.append(label)
        self.parent.append(parent)
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(idx)
        return idx


class _WitnessMask:
    """Anchored feasibility checks against the growing witness assembly."""

    def __init__(self, catalog: LabelCatalog, state: DecodeState, max_nodes: int):
        self.catalog = catalog
        self.state = state
        self.max_nodes = max_nodes

    def root_options(self) -> dict[int, _Attachment]:
        out: dict[int, _Attachment] = {}
        for cand in range(len(self.catalog)):
            frag = self.catalog.fragment(cand)
            unsat = self._fresh_unsat(frag, offset=0)
            if unsat is None:
                continue
            if 1 + len(unsat) > self.max_nodes:
                continue
            out[cand] = _Attachment(cand, {}, frozenset(unsat))
        return out

    def child_options(self, node: int, forced: bool) -> dict[int, _Attachment]:
        """Admissible labels at ``node``; forced mode keeps only coverers."""
        out: dict[int, _Attachment] = {}
        n = len(self.state.labels)
        for cand in range(len(self.catalog)):
            att = self._best_attachment(node, cand, forced)
            if att is None:
                continue
            if not forced and n + 1 + len(att.unsat_after) > self.max_nodes:
                continue
            out[cand] = att
        return out

    def commit(self, node: int, att: _Attachment) -> None:
        frag = self.catalog.fragment(att.label)
        self.state.witness.attach(node, frag, att.mapping)
        self.state.unsat = att.unsat_after

    # -- internals ----------------------------------------------------------

    def _best_attachment(self, node: int, cand: int, forced: bool) -> _Attachment | None:
        w = self.state.witness
        frag = self.catalog.fragment(cand)
        if (
            self.catalog.kinds[cand] == "atom"
            and self.catalog.kinds[self.state.labels[node]] == "atom"
        ):
            # A single-atom cluster under another single-atom cluster merges
            # to nothing; decompositions never produce it.
            return None
        host = w.node_atoms[node]
        best: _Attachment | None = None
        for mapping in _attachment_mappings(w, host, frag):
            unsat_after = self._unsat_after(frag, mapping)
            if unsat_after is None:
                continue
            if forced and len(unsat_after) >= len(self.state.unsat):
                continue
            att = _Attachment(cand, mapping, frozenset(unsat_after))
            if best is None or len(att.unsat_after) < len(best.unsat_after):
                best = att
        return best

    def _unsat_after(self, frag: MolGraph, mapping: dict[int, int]) -> set[int] | None:
        """Witness unsat set after a hypothetical attachment, or None if the
        attachment strands an aromatic atom beyond coverage."""
        w = self.state.witness
        if not any(a.aromatic for a in frag.atoms):
            # Satisfaction cannot change; only merged atoms gain valence.
            f_totals = [frag.valence_total(i) for i in range(len(frag))]
            for fa, wa in mapping.items():
                if wa in self.state.unsat:
                    atom = w.atoms[wa]
                    cost = self.catalog.cover_cost(atom)
                    new_total = w.totals[wa] + f_totals[fa]
                    if len(mapping) == 2:
                        order = frag.bond_order(*mapping)
                        if order is not None:
                            new_total -= BOND_CONTRIBUTION[order]
                    if cost is None or new_total + cost > max_valence(
                        atom.element, atom.charge
                    ) + _EPS:
                        return None
            return set(self.state.unsat)
        full = dict(mapping)
        atoms = list(w.atoms)
        totals = list(w.totals)
        for fa in range(len(frag)):
            if fa not in full:
                full[fa] = len(atoms)
                atoms.append(frag.atoms[fa])
                totals.append(0.0)
        bonds = dict(w.bonds)
        for b in frag.bonds:
            u, v = full[b.u], full[b.v]
            key = (u, v) if u < v else (v, u)
            if key in bonds:
                continue
            bonds[key] = b.order
            totals[u] += BOND_CONTRIBUTION[b.order]
            totals[v] += BOND_CONTRIBUTION[b.order]
        sat = aromatic_satisfied(atoms, bonds)
        unsat = {
            i for i, a in enumerate(atoms) if a.aromatic and i not in sat
        }
        for i in unsat:
            cost = self.catalog.cover_cost(atoms[i])
            cap = max_valence(atoms[i].element, atoms[i].charge)
            if cost is None or totals[i] + cost > cap + _EPS:
                return None
        return unsat

    def _fresh_unsat(self, frag: MolGraph, offset: int) -> set[int] | None:
        bonds = {b.endpoints: b.order for b in frag.bonds}
        sat = aromatic_satisfied(frag.atoms, bonds)
        unsat = {
            i + offset
            for i, a in enumerate(frag.atoms)
            if a.aromatic and i not in sat
        }
        for i, a in enumerate(frag.atoms):
            if i + offset not in unsat:
                continue
            cost = self.catalog.cover_cost(a)
            if cost is None or frag.valence_total(i) + cost > max_valence(
                a.element, a.charge
            ) + _EPS:
                return None
        return unsat


def _attachment_mappings(
    w: AssemblyState, host: tuple[int, ...], frag: MolGraph
) -> list[dict[int, int]]:
    """Single-fragment anchored attachments: one shared atom or one bond."""
    out: list[dict[int, int]] = []
    f_totals = [frag.valence_total(i) for i in range(len(frag))]
    for fa in range(len(frag)):
        for a in host:
            atom = w.atoms[a]
            fatom = frag.atoms[fa]
            if (
                atom.element == fatom.element
                and atom.charge == fatom.charge
                and atom.aromatic == fatom.aromatic
            ):
                cap = max_valence(atom.element, atom.charge)
                if w.totals[a] + f_totals[fa] <= cap + _EPS:
                    out.append({fa: a})
    if len(frag) == 2:
        # Full containment: a two-atom fragment bond-merging adds nothing.
        return out
    host_set = set(host)
    host_bonds = [
        (u, v, o) for (u, v), o in sorted(w.bonds.items())
        if u in host_set and v in host_set
    ]
    for b in frag.bonds:
        shared = BOND_CONTRIBUTION[b.order]
        for u, v, o in host_bonds:
            if o != b.order:
                continue
            for fu, fv in ((b.u, b.v), (b.v, b.u)):
                au, av = frag.atoms[fu], frag.atoms[fv]
                wu, wv = w.atoms[u], w.atoms[v]
                if (au.element, au.charge, au.aromatic) != (
                    wu.element, wu.charge, wu.aromatic
                ):
                    continue
                if (av.element, av.charge, av.aromatic) != (
                    wv.element, wv.charge, wv.aromatic
                ):
                    continue
                if (
                    w.totals[u] + f_totals[fu] - shared
                    <= max_valence(wu.element, wu.charge) + _EPS
                    and w.totals[v] + f_totals[fv] - shared
                    <= max_valence(wv.element, wv.charge) + _EPS
                ):
                    out.append({fu: u, fv: v})
    return out


def decode_tree(
    params: ParamStore,
    catalog: LabelCatalog,
    z_tree: np.ndarray,
    mode: str = "greedy",
    max_nodes: int = MAX_NODES_DEFAULT,
    rng: np.random.Generator | None = None,
    trace: list | None = None,
    return_witness: bool = False,
):
    """Generate a label tree from the tree latent.

    ``mode="sample"`` draws the expansion decisions and labels (requires
    ``rng``); ``mode="greedy"`` thresholds and argmaxes.  Always returns a
    tree (its atom maps are filled in later by assembly); with
    ``return_witness`` also returns the witness realization built during
    generation, a valid molecule for this tree by construction.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode requires an rng")
    z = tc.constant(np.asarray(z_tree, dtype=np.float64).reshape(1, -1))
    state = DecodeState()
    mask = _WitnessMask(catalog, state, max_nodes)

    root_opts = mask.root_options()
    if not root_opts:
        raise ValueError("vocabulary admits no root label")
    logits = label_logits(None, params, z, None)
    root_label = _pick_label(logits.data, sorted(root_opts), mode, rng)
    root = state.add_node(root_label, -1)
    state.witness.place_root(root, catalog.fragment(root_label))
    state.unsat = root_opts[root_label].unsat_after
    if trace is not None:
        trace.append({"event": "root", "label": root_label})

    _grow(params, catalog, z, state, mask, root, mode, rng, trace)
    tree = decoded_to_tree(state, catalog)
    if not return_witness:
        return tree
    witness = AssemblyResult(
        state.witness.molecule(),
        [],
        [],
        dict(state.witness.node_atoms),
        JunctionTree(
            [
                Cluster(tuple(sorted(state.witness.node_atoms[i])),
                        catalog.kinds[state.labels[i]],
                        catalog.vocab.labels[state.labels[i]])
                for i in range(len(state.labels))
            ],
            tree.edges,
            tree.root,
        ),
    )
    return tree, witness


def _grow(params, catalog, z, state, mask, i, mode, rng, trace) -> None:
    label_i = state.labels[i]
    while True:
        state.steps += 1
        inward = _inward(state, i, exclude=None)
        p = float(_sigmoid(topo_logit(None, params, z, label_i, inward).data))
        forced = bool(state.unsat & set(state.witness.node_atoms[i]))
        options = mask.child_options(i, forced)
        if forced:
            expand = bool(options)
        elif mode == "sample":
            expand = bool(options) and bool(rng.random() < p)
        else:
            expand = bool(options) and p >= 0.5
        if not expand:
            if trace is not None:
                trace.append({"event": "stop", "node": i, "p": p, "forced": forced})
            break
        h_edge = gru_message(None, params, label_i, inward)
        logits = label_logits(None, params, z, h_edge)
        child_label = _pick_label(logits.data, sorted(options), mode, rng)
        child = state.add_node(child_label, i)
        mask.commit(child, options[child_label])
        state.messages[(i, child)] = h_edge
        state.traversal.append((i, child))
        if trace is not None:
            trace.append(
                {"event": "expand", "node": i, "p": p, "forced": forced,
                 "child": child, "label": child_label}
            )
        _grow(params, catalog, z, state, mask, child, mode, rng, trace)
    parent = state.parent[i]
    if parent >= 0:
        back = gru_message(None, params, label_i, _inward(state, i, exclude=parent))
        state.messages[(i, parent)] = back
        state.traversal.append((i, parent))


def _inward(state: DecodeState, i: int, exclude: int | None) -> list[Tensor]:
    out = []
    if state.parent[i] >= 0 and state.parent[i] != exclude:
        msg = state.messages.get((state.parent[i], i))
        if msg is not None:
            out.append(msg)
    for c in state.children[i]:
        if c != exclude and (c, i) in state.messages:
            out.append(state.messages[(c, i)])
    return out


def _pick_label(logits: np.ndarray, choices: list[int], mode: str,
                rng: np.random.Generator | None) -> int:
    flat = logits.reshape(-1)
    sub = flat[choices]
    if mode == "greedy" or rng is None:
        return choices[int(np.argmax(sub))]
    shifted = np.exp(sub - sub.max())
    probs = shifted / shifted.sum()
    return choices[int(rng.choice(len(choices), p=probs))]


def _sigmoid(x) -> float:
    return 1.0 / (1.0 + np.exp(-float(x)))


# ---------------------------------------------------------------------------
# Teacher forcing
# ---------------------------------------------------------------------------

def ordered_children(tree: JunctionTree, ids: list[int]) -> dict[int, list[int]]:
    """Deterministic sibling order for the ground-truth traversal.

    Children sort by (label id, smallest atom shared with the parent, their
    atom tuple); the tree's own root orients the parent relation.
    """
    order: dict[int, list[int]] = {}
    seen = {tree.root}
    stack = [tree.root]
    while stack:
        i = stack.pop()
        kids = [j for j in tree.neighbors(i) if j not in seen]

        def key(j: int) -> tuple:
            shared = set(tree.nodes[j].atoms) & set(tree.nodes[i].atoms)
            return (ids[j], min(shared) if shared else -1, tree.nodes[j].atoms)

        kids.sort(key=key)
        order[i] = kids
        for j in kids:
            seen.add(j)
            stack.append(j)
    return order


@dataclass
class TreeLossStats:
    topo_targets: list[int]
    topo_probs: list[float]
    label_targets: list[int]
    label_hits: list[bool]

    @property
    def topo_terms(self) -> int:
        return len(self.topo_targets)

    @property
    def label_terms(self) -> int:
        return len(self.label_targets)


def tree_loss(
    tape: Tape | None,
    params: ParamStore,
    tree: JunctionTree,
    ids: list[int],
    z_tree: Tensor,
) -> tuple[Tensor, TreeLossStats]:
    """Cross-entropy of the ground-truth traversal under teacher forcing.

    One binary term per node visit (expand vs stop) plus one label term per
    node, the root's label predicted with a zero edge message.
    """
    order = ordered_children(tree, ids)
    stats = TreeLossStats([], [], [], [])
    messages: dict[tuple[int, int], Tensor] = {}
    terms: list[Tensor] = []

    root_logits = label_logits(tape, params, z_tree, None)
    terms.append(_ce(tape, root_logits, ids[tree.root]))
    stats.label_targets.append(ids[tree.root])
    stats.label_hits.append(int(np.argmax(root_logits.data)) == ids[tree.root])

    def visit(i: int, parent: int) -> None:
        inward: list[Tensor] = []
        if parent >= 0:
            inward.append(messages[(parent, i)])
        for c in order[i]:
            logit = topo_logit(tape, params, z_tree, ids[i], inward)
            terms.append(_bce(tape, logit, 1.0))
            stats.topo_targets.append(1)
            stats.topo_probs.append(_sigmoid(logit.data))
            h_edge = gru_message(tape, params, ids[i], inward)
            messages[(i, c)] = h_edge
            logits = label_logits(tape, params, z_tree, h_edge)
            terms.append(_ce(tape, logits, ids[c]))
            stats.label_targets.append(ids[c])
            stats.label_hits.append(int(np.argmax(logits.data)) == ids[c])
            visit(c, i)
            inward.append(messages[(c, i)])
        logit = topo_logit(tape, params, z_tree, ids[i], inward)
        terms.append(_bce(tape, logit, 0.0))
        stats.topo_targets.append(0)
        stats.topo_probs.append(_sigmoid(logit.data))
        if parent >= 0:
            back = gru_message(
                tape, params, ids[i], [messages[(c, i)] for c in order[i]]
            )
            messages[(i, parent)] = back

    visit(tree.root, -1)
    loss = terms[0]
    for t in terms[1:]:
        loss = tc.add(tape, loss, t)
    return loss, stats


def _bce(tape, logit: Tensor, target: float) -> Tensor:
    # softplus(s) - target * s is the stable binary cross entropy on logits.
    loss = tc.softplus(tape, logit)
    if target != 0.0:
        loss = tc.sub(tape, loss, tc.scale(tape, logit, target))
    return loss


def _ce(tape, logits: Tensor, target: int) -> Tensor:
    return tc.sub(
        tape, tc.logsumexp(tape, logits), tc.take(tape, logits, target)
    )


def decoded_to_tree(state: DecodeState, catalog: LabelCatalog) -> JunctionTree:
    """Wrap a decode state as a tree; atom maps stay empty until assembly."""
    nodes = [
        Cluster((), catalog.kinds[lab], catalog.vocab.labels[lab])
        for lab in state.labels
    ]
    edges = [(state.parent[i], i) for i in range(1, len(state.labels))]
    return JunctionTree(nodes, edges, 0)
