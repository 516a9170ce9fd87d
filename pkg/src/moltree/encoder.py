"""Message-passing encoders and variational heads.

The graph side runs synchronous edge-message updates over directed bond
edges (double-buffered, messages start at zero) and mean-pools atom states.
The tree side runs a gated-recurrent message unit over directed tree edges
in two phases: leaf-to-root only (enough for the tree latent) or both
directions (needed as context for assembly scoring).  A directed tree
message depends only on its precursors, so message values are independent
of the schedule that produced them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .juncture import JunctionTree
from .molgraph import BOND_AROMATIC, BOND_DOUBLE, BOND_SINGLE, BOND_TRIPLE, MolGraph
from .molgraph.rings import cyclic_edge_set
from .params import ATOM_FDIM, BOND_FDIM
from .tensorcore import ParamStore, Tape, Tensor

__all__ = [
    "GraphTensors",
    "TreeEncoding",
    "graph_tensors",
    "encode_graph",
    "encode_tree",
    "gru_message",
    "message_schedule",
    "encoding_root",
    "variational_head",
    "kl_divergence",
    "edge_message_pass",
    "LOGVAR_MIN",
    "LOGVAR_MAX",
]

LOGVAR_MIN = -10.0
LOGVAR_MAX = 10.0

_ELEMENT_POS = {e: i for i, e in enumerate(("C", "N", "O", "S", "P", "F", "Cl", "Br", "I"))}
_ORDER_POS = {BOND_SINGLE: 0, BOND_DOUBLE: 1, BOND_TRIPLE: 2, BOND_AROMATIC: 3}


@dataclass(frozen=True)
class GraphTensors:
    """Array view of a molecular graph for message passing.

    Directed edges are stored bond-major: edge 2k is bonds[k] forward,
    edge 2k+1 is its reverse, so ``rev`` is index xor 1.
    """

    atom_x: np.ndarray  # (n_atoms, ATOM_FDIM)
    edge_x: np.ndarray  # (n_edges, BOND_FDIM)
    src: np.ndarray  # (n_edges,) tail atom of each directed edge
    dst: np.ndarray  # (n_edges,) head atom
    rev: np.ndarray  # (n_edges,) index of the reversed edge
    n_atoms: int


def graph_tensors(g: MolGraph) -> GraphTensors:
    """Featurize a molecule (or fragment) for message passing."""
    n = len(g)
    atom_x = np.zeros((n, ATOM_FDIM), dtype=np.float64)
    for i, a in enumerate(g.atoms):
        atom_x[i, _ELEMENT_POS[a.element]] = 1.0
        atom_x[i, 9 + min(g.degree(i), 4)] = 1.0
        atom_x[i, 14 + (a.charge + 2)] = 1.0
        if a.aromatic:
            atom_x[i, 19] = 1.0
    in_ring = cyclic_edge_set(g)
    m = 2 * len(g.bonds)
    edge_x = np.zeros((m, BOND_FDIM), dtype=np.float64)
    src = np.zeros(m, dtype=np.int64)
    dst = np.zeros(m, dtype=np.int64)
    rev = np.zeros(m, dtype=np.int64)
    for k, b in enumerate(g.bonds):
        for e, (u, v) in ((2 * k, (b.u, b.v)), (2 * k + 1, (b.v, b.u))):
            edge_x[e, _ORDER_POS[b.order]] = 1.0
            if b.endpoints in in_ring:
                edge_x[e, 4] = 1.0
            src[e], dst[e], rev[e] = u, v, e ^ 1
    return GraphTensors(atom_x, edge_x, src, dst, rev, n)


def edge_message_pass(
    tape: Tape | None,
    gt: GraphTensors,
    w_atom: Tensor,
    w_bond: Tensor,
    w_msg: Tensor,
    iterations: int,
    inject: Tensor | None = None,
) -> Tensor:
    """Run synchronous directed-edge message updates; returns (n_edges, h).

    ``inject``, when given, is an (n_edges, h) tensor added into every
    round's incoming-message sum (the tree-context term of the assembly
    scorer).
    """
    atom_x = tc.constant(gt.atom_x)
    edge_x = tc.constant(gt.edge_x)
    base = tc.add(
        tape,
        tc.matmul(tape, tc.gather_rows(tape, atom_x, gt.src), w_atom),
        tc.matmul(tape, edge_x, w_bond),
    )
    hidden = w_msg.data.shape[0]
    nu = tc.zeros((gt.edge_x.shape[0], hidden))
    for _ in range(iterations):
        total = tc.segment_sum(tape, nu, gt.dst, gt.n_atoms)
        incoming = tc.sub(
            tape,
            tc.gather_rows(tape, total, gt.src),
            tc.gather_rows(tape, nu, gt.rev),
        )
        if inject is not None:
            incoming = tc.add(tape, incoming, inject)
        nu = tc.relu(tape, tc.add(tape, base, tc.matmul(tape, incoming, w_msg)))
    return nu


def encode_graph(
    tape: Tape | None,
    params: ParamStore,
    gt: GraphTensors,
    iterations: int,
) -> tuple[Tensor, Tensor]:
    """Per-atom states and the mean-pooled graph state (h_atoms, h_graph)."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    nu = edge_message_pass(
        tape, gt, params["W1g"], params["W2g"], params["W3g"], iterations
    )
    atom_x = tc.constant(gt.atom_x)
    incoming = tc.segment_sum(
        tape, tc.matmul(tape, nu, params["U2g"]), gt.dst, gt.n_atoms
    )
    h_atoms = tc.relu(
        tape, tc.add(tape, tc.matmul(tape, atom_x, params["U1g"]), incoming)
    )
    return h_atoms, tc.mean_rows(tape, h_atoms)


# ---------------------------------------------------------------------------
# Tree side
# ---------------------------------------------------------------------------

def gru_message(
    tape: Tape | None,
    params: ParamStore,
    label_id: int,
    precursors: list[Tensor],
) -> Tensor:
    """Gated message update from a node's label and its precursor messages."""
    wz = tc.row(tape, params["Wz"], label_id)
    wr = tc.row(tape, params["Wr"], label_id)
    w = tc.row(tape, params["W"], label_id)
    bz = params["bz"]
    br = params["br"]
    if precursors:
        stack = tc.vstack(tape, precursors)
        s = tc.sum_rows(tape, stack)
        z = tc.sigmoid(tape, tc.add(tape, wz, tc.affine(tape, s, params["Uz"], bz)))
        r = tc.sigmoid(tape, tc.add_row(tape, tc.affine(tape, stack, params["Ur"], br), wr))
        gated = tc.sum_rows(tape, tc.mul(tape, r, stack))
        m_tilde = tc.tanh(tape, tc.add(tape, w, tc.matmul(tape, gated, params["U"])))
        ones = tc.constant(np.ones_like(z.data))
        return tc.add(
            tape,
            tc.mul(tape, tc.sub(tape, ones, z), s),
            tc.mul(tape, z, m_tilde),
        )
    # No precursors: s = 0, the candidate reduces to tanh of the label row.
    z = tc.sigmoid(tape, tc.add_bias(tape, wz, bz))
    m_tilde = tc.tanh(tape, w)
    return tc.mul(tape, z, m_tilde)


@dataclass
class TreeEncoding:
    """Directed tree messages plus the rooted tree representation."""

    root: int
    messages: dict[tuple[int, int], Tensor]
    h_root: Tensor
    h_nodes: list[Tensor | None]
    schedule: list[tuple[int, int]]


def encoding_root(tree: JunctionTree) -> int:
    """The leaf whose cluster holds the smallest atom index (ties: lowest id).

    Decoded trees have no atom maps yet; their leaves fall back to node-id
    order, which follows generation order.
    """
    leaves = [i for i in range(len(tree)) if len(tree.neighbors(i)) <= 1]
    return min(
        leaves,
        key=lambda i: (min(tree.nodes[i].atoms, default=len(tree)), i),
    )


def message_schedule(tree: JunctionTree, root: int, phase: str) -> list[tuple[int, int]]:
    """Directed edges in computable order: each after all its precursors."""
    order: list[int] = []
    parent: dict[int, int] = {root: -1}
    stack = [root]
    while stack:
        u = stack.pop()
        order.append(u)
        for v in sorted(tree.neighbors(u), reverse=True):
            if v not in parent:
                parent[v] = u
                stack.append(v)
    upward = [(u, parent[u]) for u in reversed(order) if parent[u] >= 0]
    if phase == "bottom_up":
        return upward
    if phase == "both":
        downward = [(parent[u], u) for u in order if parent[u] >= 0]
        return upward + downward
    raise ValueError(f"unknown phase {phase!r}")


def encode_tree(
    tape: Tape | None,
    params: ParamStore,
    tree: JunctionTree,
    ids: list[int],
    phase: str = "bottom_up",
) -> TreeEncoding:
    """Run tree message passing and aggregate node states.

    ``phase="bottom_up"`` computes the leaf-to-root messages and the root
    state only; ``phase="both"`` additionally computes root-to-leaf messages
    and every node state.
    """
    root = encoding_root(tree)
    schedule = message_schedule(tree, root, phase)
    messages: dict[tuple[int, int], Tensor] = {}
    for i, j in schedule:
        pre = [
            messages[(k, i)]
            for k in tree.neighbors(i)
            if k != j and (k, i) in messages
        ]
        expected = [k for k in tree.neighbors(i) if k != j]
        if len(pre) != len(expected):
            raise RuntimeError("schedule violated precursor ordering")
        messages[(i, j)] = gru_message(tape, params, ids[i], pre)

    def node_state(i: int) -> Tensor:
        wo = tc.row(tape, params["Wo"], ids[i])
        inward = [messages[(k, i)] for k in tree.neighbors(i)]
        if inward:
            total = tc.sum_rows(tape, tc.vstack(tape, inward))
            return tc.relu(
                tape, tc.add(tape, wo, tc.matmul(tape, total, params["Uo"]))
            )
        return tc.relu(tape, wo)

    h_nodes: list[Tensor | None] = [None] * len(tree)
    h_nodes[root] = node_state(root)
    if phase == "both":
        for i in range(len(tree)):
            if h_nodes[i] is None:
                h_nodes[i] = node_state(i)
    return TreeEncoding(root, messages, h_nodes[root], h_nodes, schedule)


# ---------------------------------------------------------------------------
# Variational heads
# ---------------------------------------------------------------------------

def variational_head(
    tape: Tape | None,
    params: ParamStore,
    h: Tensor,
    which: str,
    rng: np.random.Generator | None = None,
) -> tuple[Tensor, Tensor, Tensor]:
    """Posterior mean/log-variance and a (re-parameterized) sample.

    With ``rng=None`` the sample is deterministic: z = mu.
    """
    if which not in ("tree", "graph"):
        raise ValueError(f"unknown head {which!r}")
    tag = "t" if which == "tree" else "g"
    mu = tc.affine(tape, h, params[f"Wmu_{tag}"], params[f"bmu_{tag}"])
    logvar = tc.clamp(
        tape,
        tc.affine(tape, h, params[f"Wlv_{tag}"], params[f"blv_{tag}"]),
        LOGVAR_MIN,
        LOGVAR_MAX,
    )
    if rng is None:
        return mu, logvar, mu
    eps = tc.constant(rng.standard_normal(mu.data.shape))
    std = tc.exp(tape, tc.scale(tape, logvar, 0.5))
    z = tc.add(tape, mu, tc.mul(tape, std, eps))
    return mu, logvar, z


def kl_divergence(tape: Tape | None, mu: Tensor, logvar: Tensor) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)) for diagonal Gaussians."""
    if mu.data.shape != logvar.data.shape:
        raise tc.ShapeMismatch(f"kl shapes {mu.shape} vs {logvar.shape}")
    dim = mu.data.size
    total = tc.sub(
        tape,
        tc.add(
            tape,
            tc.sum_all(tape, tc.exp(tape, logvar)),
            tc.sum_all(tape, tc.mul(tape, mu, mu)),
        ),
        tc.sum_all(tape, logvar),
    )
    return tc.scale(tape, tc.shift(tape, total, -float(dim)), 0.5)
