#!/usr/bin/env python3
"""Generate the bundled desk-scale corpus.

Deterministically composes valence-valid SMILES from scaffold/substituent
templates plus a seeded random-graph sweep, keeps only molecules whose
decomposition passes every tree invariant, deduplicates by canonical form,
and writes data/corpus.smi.  Rerunning reproduces the same file.
"""

from __future__ import annotations

import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from moltree.juncture import decompose, verify  # noqa: E402
from moltree.molgraph import MoleculeError, parse_smiles, write_canonical  # noqa: E402
from moltree.molgraph.model import Atom, Bond, MolGraph, ValenceError  # noqa: E402

TARGET = 560

CHAINS = [
    "C", "CC", "CCC", "CCCC", "CCCCC", "CCO", "CCCO", "OCCO", "CCN", "CCCN",
    "NCCN", "CCS", "CCCS", "CSC", "CCOC", "CCOCC", "COC", "CCNC", "CNC",
    "CC=C", "CC#C", "CC=O", "CCC=O", "CC(=O)C", "CC(=O)CC", "OC=O", "CC(=O)O",
    "CCC(=O)O", "CC#N", "CCC#N", "N#CCC#N", "CC=NC", "CCCl", "CCBr", "CCF",
    "CCI", "ClCCCl", "FCCF", "BrCCBr", "FC(F)F", "ClC(Cl)Cl", "CC(F)(F)F",
    "CP", "CCP", "CPC", "CS(=O)C", "CCS(=O)CC", "OS(=O)(=O)O", "CS(=O)(=O)C",
    "C=C", "C=CC=C", "C=CC=CC=C", "CC(C)=CC", "C#C", "C#CC#C", "CC(C)C",
    "CC(C)(C)C", "CC(C)CC", "CC(C)(C)CC", "CC(C)C(C)C", "CC(C)(C)C(C)(C)C",
    "CC(N)C(=O)O", "NCC(=O)O", "OCC(N)C(=O)O", "CC(O)C", "CC(O)(C)C",
    "OCC(O)CO", "CC(Cl)C", "CC(Br)CC", "CN(C)C", "CCN(CC)CC", "CN(C)CC",
    "COCC(=O)O", "CSCC(N)C(=O)O", "CC(C)CC(=O)O", "CC(CC)CO", "CCC(C)(C)O",
    "NC(=O)C", "NC(=O)CC", "CNC(=O)C", "OCC=O", "OCCC=O", "CC(=O)NC",
    "P(C)(C)C", "CCCCCC", "CCCCCCC", "CCCCCCCC", "OCCCCO", "NCCCCN",
]

CHARGED = [
    "CC(=O)[O-]", "CCC(=O)[O-]", "[O-]C=O", "C[N+](C)(C)C", "CC[N+](C)(C)C",
    "C[N+](C)(C)CC(=O)[O-]", "[N+](C)(C)(C)C", "C[O-]", "CC[O-]", "[N+]CC",
    "C[N+](C)C", "CC(N)C(=O)[O-]", "[O-]CC[N+](C)(C)C",
    "[S-]C", "CC[S-]", "[O-]S(=O)(=O)C", "C[P+](C)(C)C",
]

RING_CORES = {
    "cyclopropane": "C1CC1",
    "cyclobutane": "C1CCC1",
    "cyclopentane": "C1CCCC1",
    "cyclohexane": "C1CCCCC1",
    "cycloheptane": "C1CCCCCC1",
    "cyclooctane": "C1CCCCCCC1",
    "oxolane": "C1CCOC1",
    "oxane": "C1CCOCC1",
    "thiolane": "C1CCSC1",
    "piperidine": "C1CCNCC1",
    "pyrrolidine": "C1CCNC1",
    "dioxane": "C1COCCO1",
    "cyclohexene": "C1=CCCCC1",
    "cyclopentene": "C1=CCCC1",
}

AROMATIC_CORES = {
    "benzene": ("c1ccccc1", 6),
    "pyridine": ("c1ccncc1", 5),
    "thiophene": ("c1ccsc1", 4),
    "pyrrole": ("c1cc[nH]c1".replace("[nH]", "n"), 4),
    "pyrimidine": ("c1cncnc1", 4),
    "thiazole-like": ("c1cscn1", 3),
}

SUBSTITUENTS = ["C", "CC", "O", "N", "F", "Cl", "Br", "C(=O)O", "C(=O)[O-]",
                "C#N", "C=O", "OC", "CO", "S", "SC", "C(C)C", "CCC"]

BRIDGED = [
    "C1CC2CCC1C2",          # bicyclo[2.2.1]
    "C1CC2CCC1CC2",         # bicyclo[2.2.2]
    "C1CC2CC1CC2",          # bicyclo[2.1.1]-like
    "C1CC2CCCC1CC2",        # larger bridge
    "C1C2CC3CC1CC(C2)C3",   # adamantane
    "C1CC2(CCC1)CCC2",      # spiro-fused companion
    "OC1CC2CCC1C2",
    "CC1CC2CCC1C2",
    "CC1CC2CCC1CC2",
    "OC1CC2CCC1CC2",
    "NC1CC2CCC1C2",
    "CC12CC3CC(C1)CC(C2)C3",
]

SPIRO = [
    "C1CCC2(C1)CCCC2", "C1CCC2(C1)CCC2", "C1CC2(C1)CCC2",
    "C1CCC2(CC1)CCCC2", "OC1CCC2(C1)CCCC2", "CC1CCC2(C1)CCC2",
]

HUBS = [
    "CC(C)C", "CC(C)(C)C", "CC(C)CC(C)C", "CC(C)(C)CC", "CC(C)(CC)CC",
    "OC(C)(C)C", "NC(C)(C)C", "CC(C)(C)O", "CC(C)(C)N", "FC(C)(C)C",
    "CC1(C)CCCC1", "CC1(C)CCCCC1", "CC1(O)CCCC1", "CC1(C)CCC1",
    "CC1(CC)CCCC1", "OCC(C)(C)CO", "CC(C)(C)C(=O)O", "CC(C)(C)CC(=O)[O-]",
]


def ring_variants() -> list[str]:
    out = []
    for core in RING_CORES.values():
        out.append(core)
        for sub in SUBSTITUENTS:
            out.append(f"{sub}{core[0]}{core[1:]}" if core[0] != "C" else sub + core)
    return out


def aromatic_variants() -> list[str]:
    out = []
    for smiles, _positions in AROMATIC_CORES.values():
        out.append(smiles)
        for sub in SUBSTITUENTS:
            out.append(sub + smiles)
    # disubstituted benzenes: para, meta, ortho
    for a in ("C", "O", "N", "Cl", "CC"):
        for b in ("C", "O", "F", "C(=O)O"):
            out.append(f"{a}c1ccc({b})cc1")
            out.append(f"{a}c1cccc({b})c1")
            out.append(f"{a}c1c({b})cccc1")
    out += ["Cc1ccccc1C", "Cc1ccc(C)cc1", "Cc1cccc(C)c1", "c1ccc(-c2ccccc2)cc1",
            "c1ccc(Cc2ccccc2)cc1", "Oc1ccc(CC(N)C(=O)O)cc1", "Cc1ccncc1",
            "CCc1cccnc1", "Clc1ccccc1", "Fc1ccccc1",
            "[O-]C(=O)c1ccccc1", "C[N+](C)(C)Cc1ccccc1", "Nc1ccncc1",
            "Cc1ccsc1", "CCc1ccsc1", "Oc1ccsc1"]
    return out


def random_molecules(rng: random.Random, count: int) -> list[str]:
    elems = ["C"] * 8 + ["N", "O", "S", "P", "F", "Cl"]
    orders = [1] * 7 + [2, 2, 3]
    out = []
    attempts = 0
    while len(out) < count and attempts < count * 400:
        attempts += 1
        n = rng.randrange(3, 13)
        atoms = []
        for _ in range(n):
            el = rng.choice(elems)
            charge = rng.choice([0] * 14 + [1, -1])
            if (el, charge) in (("C", 1), ("C", -1), ("F", 1), ("F", -1),
                                ("Cl", 1), ("Cl", -1), ("P", -1)):
                charge = 0
            try:
                atoms.append(Atom(el, charge=charge))
            except MoleculeError:
                atoms.append(Atom("C"))
        bonds = {}
        for i in range(1, n):
            bonds[(rng.randrange(i), i)] = rng.choice(orders)
        for _ in range(rng.randrange(0, 3)):
            u, v = rng.randrange(n), rng.randrange(n)
            if u != v and (min(u, v), max(u, v)) not in bonds:
                bonds[(min(u, v), max(u, v))] = 1
        try:
            g = MolGraph.molecule(
                atoms, [Bond(u, v, o) for (u, v), o in bonds.items()]
            )
        except (ValenceError, MoleculeError):
            continue
        out.append(write_canonical(g))
    return out


def main() -> None:
    rng = random.Random(20240817)
    raw: list[str] = []
    raw += CHAINS
    raw += CHARGED
    raw += ring_variants()
    raw += aromatic_variants()
    raw += BRIDGED
    raw += SPIRO
    raw += HUBS
    raw += random_molecules(rng, 220)

    kept: dict[str, str] = {}
    rejected = 0
    for smi in raw:
        try:
            g = parse_smiles(smi)
            canon = write_canonical(g)
            if canon in kept:
                continue
            tree = decompose(g)
            problems = verify(tree, g)
            if problems:
                rejected += 1
                continue
            # canonical form must round-trip
            if write_canonical(parse_smiles(canon)) != canon:
                rejected += 1
                continue
            kept[canon] = canon
        except MoleculeError:
            rejected += 1
            continue
    mols = sorted(kept)
    if len(mols) < 500:
        raise SystemExit(f"only {len(mols)} molecules generated; need >= 500")
    out_path = Path(__file__).resolve().parents[1] / "data" / "corpus.smi"
    out_path.parent.mkdir(exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write("# bundled desk-scale corpus: generated by tools/make_corpus.py\n")
        for smi in mols[:TARGET]:
            fh.write(smi + "\n")
    print(f"wrote {min(len(mols), TARGET)} molecules ({rejected} rejected)")


if __name__ == "__main__":
    main()
