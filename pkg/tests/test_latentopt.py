import numpy as np
import pytest

import moltree.tensorcore as tc
from moltree.latentopt import (
    EmptyBatch,
    OptResult,
    ascend,
    optimize,
    report,
    train_joint,
)
from moltree.molgraph import desk_property, parse_smiles, write_canonical
from moltree.train import TrainConfig

from .oracles import finite_difference_check


def test_report_arithmetic():
    ok1 = OptResult("A", "B", 1.0, 0.5, True)
    ok2 = OptResult("C", "D", 3.0, 0.7, True)
    bad = OptResult("E", None, None, None, False)
    s = report([ok1, ok2, bad])
    assert s.count == 3
    assert s.success_rate == pytest.approx(2 / 3)
    assert s.mean_improvement == pytest.approx(2.0)
    assert s.mean_similarity == pytest.approx(0.6)


def test_report_all_failures_has_absent_means():
    s = report([OptResult("E", None, None, None, False)])
    assert s.success_rate == 0.0
    assert s.mean_improvement is None and s.mean_similarity is None


def test_report_empty_batch_raises():
    with pytest.raises(EmptyBatch):
        report([])


def test_property_head_gradient(joint_model):
    params = joint_model.params
    z = tc.Tensor(
        np.random.default_rng(0).normal(size=(1, joint_model.config.latent_dim)),
        param=True,
    )

    def forward(tape):
        return joint_model.predict_property_tensor(tape, z)

    finite_difference_check(params, ["Wp1", "bp1", "Wp2", "bp2"], forward)
    # and the input-side gradient drives the ascent
    z.grad[:] = 0.0
    tape = tc.Tape()
    tc.backward(tape, forward(tape))
    eps = 1e-5
    flat = z.data.reshape(-1)
    up = z.data.copy()
    up.reshape(-1)[0] += eps
    down = z.data.copy()
    down.reshape(-1)[0] -= eps
    f_up = joint_model.predict_property(up)
    f_down = joint_model.predict_property(down)
    numeric = (f_up - f_down) / (2 * eps)
    assert abs(z.grad.reshape(-1)[0] - numeric) <= 1e-4 * max(1.0, abs(numeric))


def test_zero_step_size_keeps_trajectory_constant(joint_model):
    z0 = np.random.default_rng(1).normal(size=joint_model.config.latent_dim)
    traj = ascend(joint_model, z0, steps=5, step_size=0.0)
    for z in traj:
        assert np.array_equal(z, z0)


def test_alpha_zero_success_iff_reconstruction_differs(joint_model, train20):
    m = train20[0]
    result = optimize(m, joint_model, delta=0.0, steps=3, step_size=0.0)
    mu = joint_model.mean_latent(m)
    decoded = joint_model.decode_latent(mu, mode="greedy")
    differs = write_canonical(decoded) != write_canonical(m)
    assert result.success == differs


def test_delta_one_requires_identical_fingerprints(joint_model, train20):
    for m in train20[:6]:
        r = optimize(m, joint_model, delta=1.0, steps=10)
        if r.success:
            assert r.similarity >= 1.0
            assert r.modified != r.original


def test_success_implies_constraint(joint_model, train20):
    for m in train20[:8]:
        r = optimize(m, joint_model, delta=0.3, steps=20)
        if r.success:
            assert r.similarity >= 0.3
            assert r.modified != r.original
            assert r.improvement == pytest.approx(
                desk_property(parse_smiles(r.modified))
                - desk_property(parse_smiles(r.original))
            )


def test_delta_monotonicity(joint_model, train20):
    deltas = [0.0, 0.2, 0.4, 0.6]
    batches = {
        d: [optimize(m, joint_model, delta=d, steps=20) for m in train20]
        for d in deltas
    }
    rates = [report(batches[d]).success_rate for d in deltas]
    assert all(a >= b for a, b in zip(rates, rates[1:]))
    sims = [report(batches[d]).mean_similarity for d in deltas]
    defined = [s for s in sims if s is not None]
    assert all(a <= b + 1e-12 for a, b in zip(defined, defined[1:]))


def test_unconstrained_success_rate_on_overfit_model(joint_model, train20):
    worst = sorted(train20, key=desk_property)[:20]
    results = [optimize(m, joint_model, delta=0.0, steps=80) for m in worst]
    assert report(results).success_rate >= 0.5


def test_ascent_tends_to_increase_prediction(joint_model, train20):
    ups = 0
    for m in train20:
        z0 = joint_model.mean_latent(m)
        traj = ascend(joint_model, z0, steps=80, step_size=2.0)
        if joint_model.predict_property(traj[-1]) >= joint_model.predict_property(z0):
            ups += 1
    assert ups >= int(0.8 * len(train20))


def test_constant_property_converges_to_constant():
    corpus = [parse_smiles(s) for s in ["CCO", "CCC", "CCN", "CC(C)C", "CCCO"]]
    cfg = TrainConfig(hidden_dim=12, latent_dim=6, message_iterations=2,
                      learning_rate=5e-3, batch_size=5, epochs=150,
                      kl_weight_max=0.0, property_weight=4.0, seed=2)
    model = train_joint(corpus, cfg, property_fn=lambda g: 0.7)
    for g in corpus:
        pred = model.predict_property(model.mean_latent(g))
        assert abs(pred - 0.7) < 1e-2


def test_optimize_requires_property_head(overfit_model, train20):
    with pytest.raises(ValueError):
        ascend(overfit_model, np.zeros(overfit_model.config.latent_dim))
