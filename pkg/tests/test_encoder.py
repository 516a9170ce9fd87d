import numpy as np
import pytest

import moltree.tensorcore as tc
from moltree.encoder import (
    LOGVAR_MAX,
    LOGVAR_MIN,
    encode_graph,
    encode_tree,
    encoding_root,
    graph_tensors,
    gru_message,
    kl_divergence,
    message_schedule,
    variational_head,
)
from moltree.juncture import assign_labels, build_vocabulary, decompose
from moltree.molgraph import parse_smiles
from moltree.params import build_params

from .oracles import finite_difference_check


@pytest.fixture(scope="module")
def setup():
    smis = ["CCO", "CC(C)C", "Cc1ccccc1", "C1CCCCC1", "CCC"]
    corpus = [parse_smiles(s) for s in smis]
    vocab = build_vocabulary(corpus)
    rng = np.random.default_rng(7)
    params = build_params(hidden=8, latent=4, vocab_size=len(vocab), rng=rng)
    return corpus, vocab, params


def test_single_atom_graph(setup):
    _, _, params = setup
    gt = graph_tensors(parse_smiles("C"))
    h_atoms, h_graph = encode_graph(None, params, gt, 3)
    expected = np.maximum(gt.atom_x @ params["U1g"].data, 0)
    assert np.allclose(h_atoms.data, expected)
    assert np.allclose(h_graph.data, expected)


def test_zero_weights_zero_state(setup):
    corpus, vocab, _ = setup
    params = build_params(8, 4, len(vocab), np.random.default_rng(0))
    for name in params.names():
        params[name].data[:] = 0.0
    _, h_graph = encode_graph(None, params, graph_tensors(corpus[0]), 3)
    assert np.all(h_graph.data == 0)


def test_two_step_message_oracle(setup):
    # unrolled two-iteration reference on the three-atom path graph
    _, _, params = setup
    g = parse_smiles("CCO")
    gt = graph_tensors(g)
    h_atoms, h_graph = encode_graph(None, params, gt, 2)
    W1, W2, W3 = (params[k].data for k in ("W1g", "W2g", "W3g"))
    U1, U2 = params["U1g"].data, params["U2g"].data
    m = gt.src.shape[0]
    nu = np.zeros((m, 8))
    for _ in range(2):
        new = np.zeros_like(nu)
        for e in range(m):
            s = np.zeros(8)
            for e2 in range(m):
                if gt.dst[e2] == gt.src[e] and gt.src[e2] != gt.dst[e]:
                    s += nu[e2]
            new[e] = np.maximum(
                gt.atom_x[gt.src[e]] @ W1 + gt.edge_x[e] @ W2 + s @ W3, 0
            )
        nu = new
    ref = np.zeros((3, 8))
    for u in range(3):
        s = np.zeros(8)
        for e in range(m):
            if gt.dst[e] == u:
                s += nu[e] @ U2
        ref[u] = np.maximum(gt.atom_x[u] @ U1 + s, 0)
    assert np.allclose(h_atoms.data, ref)
    assert np.allclose(h_graph.data, ref.mean(axis=0))


def test_permutation_invariance(setup):
    _, _, params = setup
    _, a = encode_graph(None, params, graph_tensors(parse_smiles("CCO")), 3)
    _, b = encode_graph(None, params, graph_tensors(parse_smiles("OCC")), 3)
    assert np.abs(a.data - b.data).max() < 1e-9


def test_tree_schedule_counts_and_order(setup):
    corpus, vocab, params = setup
    tree = decompose(parse_smiles("CC(C)C"))
    root = encoding_root(tree)
    up = message_schedule(tree, root, "bottom_up")
    both = message_schedule(tree, root, "both")
    assert len(up) == len(tree) - 1
    assert len(both) == 2 * (len(tree) - 1)
    done = set()
    for i, j in both:
        precursors = {(k, i) for k in tree.neighbors(i) if k != j}
        assert precursors <= done
        done.add((i, j))
    assert len(done) == len(both)  # each directed edge exactly once


def test_single_node_tree_state(setup):
    corpus, vocab, params = setup
    tree = decompose(parse_smiles("C1CCCCC1"))
    ids = assign_labels(tree, vocab)
    enc = encode_tree(None, params, tree, ids, "bottom_up")
    expected = np.maximum(params["Wo"].data[ids[0]], 0)
    assert np.allclose(enc.h_root.data[0], expected)
    assert enc.messages == {}


def test_zero_params_messages_vanish(setup):
    corpus, vocab, _ = setup
    params = build_params(8, 4, len(vocab), np.random.default_rng(1))
    for name in params.names():
        params[name].data[:] = 0.0
    tree = decompose(parse_smiles("CC(C)C"))
    ids = assign_labels(tree, vocab)
    enc = encode_tree(None, params, tree, ids, "both")
    assert all(np.all(m.data == 0) for m in enc.messages.values())


def test_messages_independent_of_phase(setup):
    corpus, vocab, params = setup
    tree = decompose(parse_smiles("CC(C)C"))
    ids = assign_labels(tree, vocab)
    up = encode_tree(None, params, tree, ids, "bottom_up")
    both = encode_tree(None, params, tree, ids, "both")
    for key, msg in up.messages.items():
        assert np.allclose(msg.data, both.messages[key].data)
    assert np.allclose(up.h_root.data, both.h_root.data)


def test_variational_head_modes(setup):
    _, _, params = setup
    h = tc.constant(np.random.default_rng(2).normal(size=(1, 8)))
    mu, logvar, z = variational_head(None, params, h, "graph")
    assert np.array_equal(z.data, mu.data)
    assert np.all(logvar.data >= LOGVAR_MIN) and np.all(logvar.data <= LOGVAR_MAX)
    rng = np.random.default_rng(3)
    _, _, z1 = variational_head(None, params, h, "graph", np.random.default_rng(5))
    _, _, z2 = variational_head(None, params, h, "graph", np.random.default_rng(5))
    assert np.array_equal(z1.data, z2.data)  # seeded reproducibility


def test_reparameterized_noise_is_centered(setup):
    _, _, params = setup
    h = tc.constant(np.random.default_rng(4).normal(size=(1, 8)))
    mu, logvar, _ = variational_head(None, params, h, "tree")
    rng = np.random.default_rng(6)
    n = 10_000
    draws = np.stack([
        variational_head(None, params, h, "tree", rng)[2].data[0] - mu.data[0]
        for _ in range(n)
    ])
    sigma = np.exp(0.5 * logvar.data[0])
    bound = 3 * sigma / np.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0)) < bound)


def test_kl_closed_form_values():
    zero = tc.constant(np.zeros((1, 3)))
    assert float(kl_divergence(None, zero, zero).data) == 0.0
    one = tc.constant(np.ones((1, 1)))
    z1 = tc.constant(np.zeros((1, 1)))
    assert float(kl_divergence(None, one, z1).data) == pytest.approx(0.5)


def test_kl_matches_quadrature_oracle():
    # one-dimensional numeric integral of q log(q/p)
    rng = np.random.default_rng(8)
    for _ in range(5):
        mu = float(rng.normal())
        logvar = float(rng.normal() * 0.5)
        var = np.exp(logvar)
        xs = np.linspace(-12, 12, 200_001)
        q = np.exp(-((xs - mu) ** 2) / (2 * var)) / np.sqrt(2 * np.pi * var)
        p = np.exp(-(xs**2) / 2) / np.sqrt(2 * np.pi)
        integrand = q * (np.log(q + 1e-300) - np.log(p + 1e-300))
        trapezoid = getattr(np, "trapezoid", np.trapz)
        numeric = trapezoid(integrand, xs)
        closed = float(
            kl_divergence(
                None, tc.constant([[mu]]), tc.constant([[logvar]])
            ).data
        )
        assert abs(closed - numeric) < 1e-3


def test_graph_encoder_gradients(setup):
    corpus, vocab, _ = setup
    params = build_params(6, 4, len(vocab), np.random.default_rng(11))
    gt = graph_tensors(parse_smiles("CC(C)C"))
    target = tc.constant(np.random.default_rng(12).normal(size=(1, 6)))

    def forward(tape):
        _, h_graph = encode_graph(tape, params, gt, 2)
        return tc.dot(tape, h_graph, target)

    finite_difference_check(
        params, ["W1g", "W2g", "W3g", "U1g", "U2g"], forward
    )


def test_tree_gru_gradients(setup):
    corpus, vocab, _ = setup
    params = build_params(6, 4, len(vocab), np.random.default_rng(13))
    tree = decompose(parse_smiles("CC(C)C"))
    ids = assign_labels(tree, vocab)
    target = tc.constant(np.random.default_rng(14).normal(size=(1, 6)))

    def forward(tape):
        enc = encode_tree(tape, params, tree, ids, "both")
        return tc.dot(tape, enc.h_root, target)

    finite_difference_check(
        params, ["Wz", "Uz", "bz", "Wr", "Ur", "br", "W", "U", "Wo", "Uo"],
        forward,
    )
