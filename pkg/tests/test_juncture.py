import pytest

from moltree.juncture import (
    DecompositionError,
    JunctionTree,
    OovCluster,
    Vocabulary,
    assign_labels,
    build_vocabulary,
    decompose,
    load_vocabulary,
    save_vocabulary,
    tree_sexpr,
    verify,
)
from moltree.molgraph import parse_smiles
from moltree.molgraph.model import Atom, Bond, MolGraph


def kinds(tree):
    return sorted(c.kind for c in tree.nodes)


def test_single_atom_degenerate():
    t = decompose(parse_smiles("C"))
    assert len(t) == 1 and t.nodes[0].kind == "atom" and t.edges == ()


def test_two_bond_chain():
    t = decompose(parse_smiles("CCO"))
    assert kinds(t) == ["bond", "bond"] and len(t.edges) == 1


def test_toluene_ring_plus_bond():
    t = decompose(parse_smiles("Cc1ccccc1"))
    assert kinds(t) == ["bond", "ring"] and len(t.edges) == 1


def test_isobutane_star_with_hub():
    t = decompose(parse_smiles("CC(C)C"))
    assert kinds(t) == ["atom", "bond", "bond", "bond"]
    hub = next(i for i, c in enumerate(t.nodes) if c.kind == "atom")
    assert len(t.neighbors(hub)) == 3  # every bond hangs off the hub
    assert len(t.edges) == 3


def test_norbornane_merges_to_single_cluster():
    t = decompose(parse_smiles("C1CC2CCC1C2"))
    assert len(t) == 1 and t.nodes[0].kind == "ring"
    assert len(t.nodes[0].atoms) == 7


def test_root_contains_smallest_atom():
    t = decompose(parse_smiles("Cc1ccccc1"))
    assert 0 in t.nodes[t.root].atoms


def test_disconnected_rejected():
    g = MolGraph.fragment([Atom("C"), Atom("C")], [])
    with pytest.raises(DecompositionError):
        decompose(g)


def test_decompositions_self_verify_on_examples():
    for smi in ["C", "CCO", "Cc1ccccc1", "CC(C)C", "C1CC2CCC1C2",
                "CC1(C)CCCC1", "C1CCC2(C1)CCCC2", "CC(C)(C)CC(=O)[O-]"]:
        g = parse_smiles(smi)
        assert verify(decompose(g), g) == []


def test_verify_flags_missing_cluster():
    g = parse_smiles("Cc1ccccc1")
    t = decompose(g)
    broken = JunctionTree(t.nodes[:1], [], 0)
    problems = verify(broken, g)
    assert any("union coverage" in p for p in problems)


def test_verify_flags_running_intersection_break():
    # pentane chain of bond clusters: hanging the first bond off the third
    # routes adjacent clusters through one that misses their shared atom
    g = parse_smiles("CCCCC")
    t = decompose(g)
    assert [c.atoms for c in t.nodes] == [(0, 1), (1, 2), (2, 3), (3, 4)]
    rewired = JunctionTree(t.nodes, [(0, 2), (1, 2), (2, 3)], t.root)
    problems = verify(rewired, g)
    assert any("running intersection" in p for p in problems)


def test_verify_flags_label_mismatch():
    from moltree.juncture import Cluster

    g = parse_smiles("CCO")
    t = decompose(g)
    nodes = list(t.nodes)
    nodes[0] = Cluster(nodes[0].atoms, nodes[0].kind, "CC")
    if nodes[0].label == t.nodes[0].label:
        nodes[0] = Cluster(nodes[0].atoms, nodes[0].kind, "CO")
    bad = JunctionTree(nodes, t.edges, t.root)
    assert any("label" in p for p in verify(bad, g))


def test_vocabulary_build_and_lookup():
    vocab = build_vocabulary([parse_smiles("C1CCCCC1"), parse_smiles("CCO")])
    assert len(vocab) == 3
    assert list(vocab.labels) == sorted(vocab.labels)
    dup = build_vocabulary(
        [parse_smiles("C1CCCCC1"), parse_smiles("CCO"), parse_smiles("CCO")]
    )
    assert dup == vocab


def test_assign_labels_and_oov():
    g = parse_smiles("Cc1ccccc1")
    t = decompose(g)
    vocab = build_vocabulary([g])
    assert len(assign_labels(t, vocab)) == 2
    small = build_vocabulary([parse_smiles("CCO")])
    with pytest.raises(OovCluster):
        assign_labels(decompose(parse_smiles("c1ccccc1")), small)


def test_vocabulary_file_roundtrip(tmp_path):
    vocab = build_vocabulary([parse_smiles("Cc1ccccc1"), parse_smiles("CCO")])
    path = tmp_path / "vocab.txt"
    save_vocabulary(vocab, path)
    again = load_vocabulary(path)
    assert again == vocab
    lines = path.read_text().splitlines()
    assert lines == list(vocab.labels)


def test_sexpr_shape():
    t = decompose(parse_smiles("CC(C)C"))
    s = tree_sexpr(t)
    assert s.count("(") == s.count(")") == 4
    assert s.startswith('("')


def test_build_vocabulary_reports_line_number():
    g = MolGraph.fragment([Atom("C"), Atom("C")], [])
    with pytest.raises(DecompositionError, match="molecule 2"):
        build_vocabulary([parse_smiles("CC"), g])
