"""Property-guided latent-space optimization.

A feed-forward property head is trained jointly with the autoencoder on
mean encodings.  To improve a molecule, gradient ascent on the predicted
property moves its latent code for a fixed number of steps; every point on
the trajectory is decoded greedily, and the best decoded molecule that
stays within a fingerprint-similarity threshold of the original is
reported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorcore as tc
from .molgraph import MolGraph, morgan_fingerprint, tanimoto, write_canonical
from .train import Model, TrainConfig, train

__all__ = [
    "OptResult",
    "OptSummary",
    "EmptyBatch",
    "train_joint",
    "ascend",
    "optimize",
    "report",
    "DEFAULT_STEPS",
    "DEFAULT_STEP_SIZE",
    "FINGERPRINT_RADIUS",
]

DEFAULT_STEPS = 80
DEFAULT_STEP_SIZE = 2.0
FINGERPRINT_RADIUS = 2


class EmptyBatch(ValueError):
    """report() needs at least one optimization result."""


@dataclass
class OptResult:
    """Outcome of one constrained optimization run."""

    original: str  # canonical input
    modified: str | None  # canonical improved molecule, when found
    improvement: float | None  # y(modified) - y(original)
    similarity: float | None
    success: bool


@dataclass
class OptSummary:
    count: int
    success_rate: float
    mean_improvement: float | None  # over successes; None when none succeeded
    mean_similarity: float | None


def train_joint(corpus: list[MolGraph], config: TrainConfig, *,
                property_fn, metrics_out=None) -> Model:
    """Train the autoencoder together with the property predictor."""
    return train(corpus, config, property_fn=property_fn, metrics_out=metrics_out)


def ascend(model: Model, z0: np.ndarray, steps: int = DEFAULT_STEPS,
           step_size: float = DEFAULT_STEP_SIZE) -> list[np.ndarray]:
    """Gradient-ascent trajectory of the predicted property, ``steps`` points.

    Each step moves the latent along d(prediction)/dz with the fixed step
    size; the returned list holds the visited points z_1 .. z_steps.
    """
    if not model.with_property:
        raise ValueError("model has no property head")
    z = np.asarray(z0, dtype=np.float64).reshape(1, -1).copy()
    out: list[np.ndarray] = []
    for _ in range(steps):
        z_tensor = tc.Tensor(z, param=True)
        tape = tc.Tape()
        pred = model.predict_property_tensor(tape, z_tensor)
        tc.backward(tape, pred)
        z = z + step_size * z_tensor.grad
        out.append(z.reshape(-1).copy())
    return out


def optimize(
    m: MolGraph,
    model: Model,
    delta: float,
    steps: int = DEFAULT_STEPS,
    step_size: float = DEFAULT_STEP_SIZE,
    property_fn=None,
    max_nodes: int = 60,
) -> OptResult:
    """Constrained improvement of one molecule.

    Starts from the molecule's mean encoding, ascends the predicted
    property, decodes every trajectory point greedily, and returns the
    decoded molecule with the highest predicted property among those that
    are distinct from the input and at least ``delta``-similar to it
    (circular fingerprints, radius 2).  Decode failures at individual
    trajectory points are skipped.
    """
    from .molgraph import get_property

    if property_fn is None:
        property_fn = get_property(model.config.property_name)
    origin_canon = write_canonical(m)
    origin_fp = morgan_fingerprint(m, FINGERPRINT_RADIUS)
    z0 = model.mean_latent(m)
    trajectory = ascend(model, z0, steps=steps, step_size=step_size)

    best: tuple[float, MolGraph, float] | None = None  # (pred, mol, sim)
    seen: dict[str, None] = {}
    for z in trajectory:
        try:
            cand = model.decode_latent(z, mode="greedy", max_nodes=max_nodes)
        except Exception:
            continue
        canon = write_canonical(cand)
        if canon == origin_canon or canon in seen:
            continue
        seen[canon] = None
        sim = tanimoto(origin_fp, morgan_fingerprint(cand, FINGERPRINT_RADIUS))
        if sim < delta:
            continue
        pred = model.predict_property(z)
        if best is None or pred > best[0]:
            best = (pred, cand, sim)
    if best is None:
        return OptResult(origin_canon, None, None, None, False)
    _, winner, sim = best
    improvement = property_fn(winner) - property_fn(m)
    return OptResult(origin_canon, write_canonical(winner), improvement, sim, True)


def report(batch: list[OptResult]) -> OptSummary:
    """Aggregate a batch: success rate plus means over the successes."""
    if not batch:
        raise EmptyBatch("no optimization results to report")
    successes = [r for r in batch if r.success]
    rate = len(successes) / len(batch)
    if successes:
        mean_imp = float(np.mean([r.improvement for r in successes]))
        mean_sim = float(np.mean([r.similarity for r in successes]))
    else:
        mean_imp = None
        mean_sim = None
    return OptSummary(len(batch), rate, mean_imp, mean_sim)
