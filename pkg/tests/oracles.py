"""Independent reference implementations used as test oracles.

These deliberately avoid the production code paths: isomorphism by
exhaustive permutation, candidate enumeration by unpruned cartesian
attachment products, gradients by central finite differences.
"""

from __future__ import annotations

import itertools

import numpy as np

from moltree.molgraph import Atom, Bond, MolGraph, find_isomorphism
from moltree.molgraph.model import BOND_CONTRIBUTION, MoleculeError, ValenceError, max_valence


def brute_force_isomorphic(a: MolGraph, b: MolGraph) -> bool:
    """Exhaustive-permutation isomorphism for graphs of up to ~9 atoms."""
    n = len(a)
    if n != len(b) or len(a.bonds) != len(b.bonds):
        return False
    idx = list(range(n))
    for perm in itertools.permutations(idx):
        if any(a.atoms[i] != b.atoms[perm[i]] for i in idx):
            continue
        if all(
            a.bond_order(i, j) == b.bond_order(perm[i], perm[j])
            for i in idx for j in idx if i < j
        ):
            return True
    return False


def random_valid_molecule(rng, max_atoms: int = 8) -> MolGraph | None:
    """Random connected valence-valid molecule (no aromatic atoms)."""
    elements = ["C", "C", "C", "N", "O", "S", "P", "F"]
    orders = [1, 1, 1, 2, 3]
    for _ in range(300):
        n = rng.randrange(2, max_atoms + 1)
        atoms = []
        for _ in range(n):
            el = rng.choice(elements)
            charge = rng.choice([0] * 8 + [1, -1])
            if (el, charge) in (("C", 1), ("C", -1), ("F", 1), ("F", -1), ("P", -1)):
                charge = 0
            atoms.append(Atom(el, charge=charge))
        bonds = {}
        for i in range(1, n):
            bonds[(rng.randrange(i), i)] = rng.choice(orders)
        for _ in range(rng.randrange(0, 3)):
            u, v = rng.randrange(n), rng.randrange(n)
            if u != v and (min(u, v), max(u, v)) not in bonds:
                bonds[(min(u, v), max(u, v))] = rng.choice(orders)
        try:
            return MolGraph.molecule(
                atoms, [Bond(u, v, o) for (u, v), o in bonds.items()]
            )
        except (ValenceError, MoleculeError):
            continue
    return None


def relabel(g: MolGraph, perm: list[int]) -> MolGraph:
    atoms: list[Atom | None] = [None] * len(g)
    for i, a in enumerate(g.atoms):
        atoms[perm[i]] = a
    bonds = [Bond(perm[b.u], perm[b.v], b.order) for b in g.bonds]
    return MolGraph.molecule(atoms, bonds)


# ---------------------------------------------------------------------------
# Brute-force candidate enumeration
# ---------------------------------------------------------------------------

def _single_attachments(base_atoms, base_bonds, anchor, frag):
    """Every injective shared-atom or shared-bond map, no valence pruning.

    Bond merges apply only to fragments of three or more atoms: a two-atom
    fragment sharing a whole bond would be fully contained in its neighbor.
    """
    out = []
    for fa in range(len(frag)):
        for pos in anchor:
            out.append({fa: pos})
    if len(frag) == 2:
        return out
    anchor_set = set(anchor)
    for fb in frag.bonds:
        for (p, q), order in base_bonds.items():
            if p not in anchor_set or q not in anchor_set or order != fb.order:
                continue
            out.append({fb.u: p, fb.v: q})
            out.append({fb.u: q, fb.v: p})
    return out


def brute_force_candidates(catalog, ids, state, node, parent, kids):
    """All distinct neighborhoods by raw cartesian attachment products.

    Returns candidates as (MolGraph fragment, alpha tuple) with the same
    local layout convention as the production enumerator: base atoms first
    (node cluster then parent extras), then fresh atoms per child.
    """
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
    parent_atoms = set(state.node_atoms.get(parent, ()))
    pinned = [k for k, a in enumerate(base_assembly) if a in parent_atoms]

    frags = [catalog.fragment(ids[c]) for c in kids]
    option_lists = [
        _single_attachments(base_atoms, base_bonds, anchor, f) for f in frags
    ]
    results = []
    for combo in itertools.product(*option_lists):
        atoms = list(base_atoms)
        totals = list(base_totals)
        bonds = dict(base_bonds)
        alpha = [
            (node if k in set(anchor) else parent)
            for k in range(len(base_assembly))
        ]
        ok = True
        for child, frag, mapping in zip(kids, frags, combo):
            full = dict(mapping)
            mismatch = any(
                atoms[pos].element != frag.atoms[fa].element
                or atoms[pos].charge != frag.atoms[fa].charge
                or atoms[pos].aromatic != frag.atoms[fa].aromatic
                for fa, pos in mapping.items()
            )
            if mismatch:
                ok = False
                break
            for fa in range(len(frag)):
                if fa not in full:
                    full[fa] = len(atoms)
                    atoms.append(frag.atoms[fa])
                    totals.append(0.0)
                    alpha.append(child)
            for b in frag.bonds:
                u, v = full[b.u], full[b.v]
                key = (min(u, v), max(u, v))
                if key in bonds:
                    if bonds[key] != b.order:
                        ok = False
                        break
                    continue
                bonds[key] = b.order
                totals[u] += BOND_CONTRIBUTION[b.order]
                totals[v] += BOND_CONTRIBUTION[b.order]
            if not ok:
                break
        if not ok:
            continue
        if any(
            totals[i] > max_valence(atoms[i].element, atoms[i].charge) + 1e-9
            for i in range(len(atoms))
        ):
            continue
        try:
            frag_graph = MolGraph.fragment(
                atoms, [Bond(u, v, o) for (u, v), o in sorted(bonds.items())]
            )
        except (ValenceError, MoleculeError):
            continue
        results.append((frag_graph, tuple(alpha)))

    deduped = []
    for g, alpha in results:
        if not any(
            len(g) == len(h)
            and find_isomorphism(g, h, anchor={p: p for p in pinned},
                                 a_keys=alpha, b_keys=beta)
            for h, beta in deduped
        ):
            deduped.append((g, alpha))
    return deduped, pinned


def finite_difference_check(params, names, forward, eps=1e-5, rtol=1e-4):
    """Central-difference gradient verification for every entry of ``names``.

    ``forward(tape_or_None)`` must rebuild the loss from current parameter
    values.  Returns the worst relative error seen.
    """
    import moltree.tensorcore as tc

    params.zero_grad()
    tape = tc.Tape()
    loss = forward(tape)
    tc.backward(tape, loss)
    worst = 0.0
    for name in names:
        p = params[name]
        analytic = p.grad.copy()
        it = np.nditer(p.data, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            orig = p.data[i]
            p.data[i] = orig + eps
            up = float(forward(None).data)
            p.data[i] = orig - eps
            down = float(forward(None).data)
            p.data[i] = orig
            numeric = (up - down) / (2 * eps)
            err = abs(analytic[i] - numeric) / max(abs(analytic[i]), abs(numeric), 1e-6)
            worst = max(worst, err)
            assert err <= rtol, (
                f"{name}{i}: analytic {analytic[i]:.3e} vs numeric {numeric:.3e}"
            )
    params.zero_grad()
    return worst
