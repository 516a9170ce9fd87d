"""End-to-end training loop, evaluation protocols, and model persistence.

Training minimizes, per molecule, the sum of the tree reconstruction loss,
the assembly loss, the (annealed) divergence of both latent posteriors from
the prior, and optionally a squared-error property term on the mean
encoding.  Batches accumulate per-molecule gradients (no padding) and
average them before the optimizer step; everything is driven by seeded
generators, so identical configurations reproduce identical checkpoints.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import tensorcore as tc
from .checkpoint import load_checkpoint, save_checkpoint
from .decoder import (
    AssemblyFailed,
    AssemblyPlan,
    LabelCatalog,
    assemble,
    assembly_plan,
    decode_tree,
    graph_loss,
    ordered_children,
    tree_loss,
)
from .encoder import (
    GraphTensors,
    encode_graph,
    encode_tree,
    graph_tensors,
    kl_divergence,
    variational_head,
)
from .juncture import JunctionTree, Vocabulary, assign_labels, build_vocabulary, decompose
from .molgraph import MolGraph, write_canonical
from .params import build_params
from .tensorcore import ParamStore, Tape, Tensor

__all__ = [
    "TrainConfig",
    "EvalReport",
    "MoleculeRecord",
    "Model",
    "prepare_records",
    "train",
    "evaluate_reconstruction",
    "evaluate_prior_validity",
]


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; field names double as config-file keys."""

    hidden_dim: int = 450
    latent_dim: int = 56
    message_iterations: int = 3
    learning_rate: float = 1e-3
    lr_decay: float = 1.0  # per-epoch multiplier
    batch_size: int = 4
    epochs: int = 10
    kl_weight_max: float = 1.0
    kl_warm_frac: float = 0.2  # fraction of steps for the 0 -> max ramp
    property_weight: float = 1.0  # used only when a property head exists
    property_name: str = "desk"
    optimizer: str = "adam"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.latent_dim % 2 != 0 or self.latent_dim <= 0:
            raise ValueError("latent_dim must be positive and even")
        for name in ("hidden_dim", "message_iterations", "batch_size", "epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def override(self, **kwargs) -> "TrainConfig":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


@dataclass
class EvalReport:
    reconstruction_accuracy: float | None = None
    prior_validity: float | None = None
    uniqueness: float | None = None


@dataclass
class MoleculeRecord:
    """Per-molecule precomputation shared across epochs."""

    graph: MolGraph
    canonical: str
    tree: JunctionTree
    ids: list[int]
    gtensors: GraphTensors
    sibling_order: dict[int, list[int]]
    plan: AssemblyPlan
    y: float | None = None


def prepare_records(
    corpus: list[MolGraph],
    vocab: Vocabulary,
    catalog: LabelCatalog,
    property_fn=None,
) -> list[MoleculeRecord]:
    records = []
    for g in corpus:
        tree = decompose(g)
        ids = assign_labels(tree, vocab)
        order = ordered_children(tree, ids)
        records.append(
            MoleculeRecord(
                graph=g,
                canonical=write_canonical(g),
                tree=tree,
                ids=ids,
                gtensors=graph_tensors(g),
                sibling_order=order,
                plan=assembly_plan(catalog, g, tree, ids, order),
                y=property_fn(g) if property_fn is not None else None,
            )
        )
    return records


class Model:
    """Parameters plus vocabulary: everything needed to encode and decode."""

    def __init__(self, config: TrainConfig, vocab: Vocabulary,
                 params: ParamStore | None = None, *,
                 with_property: bool = False,
                 train_canonical: list[str] | None = None) -> None:
        self.config = config
        self.vocab = vocab
        self.catalog = LabelCatalog(vocab)
        self.with_property = with_property
        self.train_canonical = list(train_canonical or [])
        if params is None:
            rng = np.random.default_rng(
                np.random.SeedSequence([config.seed, 0xC0FFEE])
            )
            params = build_params(
                config.hidden_dim, config.latent_dim, len(vocab), rng,
                with_property=with_property,
            )
        self.params = params

    # -- persistence --------------------------------------------------------

    def save(self, path) -> None:
        save_checkpoint(
            path,
            self.params.as_arrays(),
            self.config.to_dict(),
            list(self.vocab.labels),
            sorted(set(self.train_canonical)),
        )

    @classmethod
    def load(cls, path) -> "Model":
        arrays, config_dict, labels, canon, _ = load_checkpoint(path)
        config = TrainConfig.from_dict(config_dict)
        vocab = Vocabulary(labels)
        with_property = "Wp1" in arrays
        model = cls(config, vocab, with_property=with_property,
                    train_canonical=canon)
        model.params.load_arrays(arrays)
        return model

    # -- encoding -----------------------------------------------------------

    def encode(self, tape: Tape | None, rec: MoleculeRecord,
               rng: np.random.Generator | None):
        """Posterior heads for one molecule: ((mu, lv, z) tree, graph, msgs)."""
        T = self.config.message_iterations
        _, h_graph = encode_graph(tape, self.params, rec.gtensors, T)
        tree_enc = encode_tree(tape, self.params, rec.tree, rec.ids, "both")
        head_t = variational_head(tape, self.params, tree_enc.h_root, "tree", rng)
        head_g = variational_head(tape, self.params, h_graph, "graph", rng)
        return head_t, head_g, tree_enc

    def mean_latent(self, g: MolGraph) -> np.ndarray:
        """Deterministic [z_tree, z_graph] mean encoding of a molecule."""
        tree = decompose(g)
        ids = assign_labels(tree, self.vocab)
        T = self.config.message_iterations
        _, h_graph = encode_graph(None, self.params, graph_tensors(g), T)
        tree_enc = encode_tree(None, self.params, tree, ids, "bottom_up")
        mu_t, _, _ = variational_head(None, self.params, tree_enc.h_root, "tree")
        mu_g, _, _ = variational_head(None, self.params, h_graph, "graph")
        return np.concatenate([mu_t.data[0], mu_g.data[0]])

    # -- decoding -----------------------------------------------------------

    def decode_latent(
        self,
        z: np.ndarray,
        mode: str = "greedy",
        rng: np.random.Generator | None = None,
        max_nodes: int = 60,
        trace: list | None = None,
    ) -> MolGraph:
        """Decode a full latent [z_tree, z_graph] into a valid molecule.

        The scored assembly runs first; if its backtracking budget runs out
        the witness realization built during tree generation is used, so
        decoding always yields a molecule that passes validation.
        """
        half = self.config.latent_dim // 2
        z = np.asarray(z, dtype=np.float64).reshape(-1)
        z_tree, z_graph = z[:half], z[half:]
        tree, witness = decode_tree(
            self.params, self.catalog, z_tree, mode=mode, max_nodes=max_nodes,
            rng=rng, trace=trace, return_witness=True,
        )
        ids = [self.vocab.index[c.label] for c in tree.nodes]
        enc = encode_tree(None, self.params, tree, ids, "both")
        try:
            result = assemble(
                self.params, self.catalog, tree, ids, z_graph, enc.messages,
                iterations=self.config.message_iterations, mode=mode, rng=rng,
                trace=trace,
            )
            return result.graph
        except AssemblyFailed:
            if trace is not None:
                trace.append({"event": "witness_fallback"})
            return witness.graph

    # -- loss ----------------------------------------------------------------

    def molecule_loss(
        self,
        tape: Tape | None,
        rec: MoleculeRecord,
        rng: np.random.Generator | None,
        kl_weight: float,
    ) -> tuple[Tensor, dict[str, float]]:
        cfg = self.config
        (mu_t, lv_t, z_t), (mu_g, lv_g, z_g), tree_enc = self.encode(tape, rec, rng)
        l_tree, _ = tree_loss(tape, self.params, rec.tree, rec.ids, z_t)
        l_graph, _ = graph_loss(
            tape, self.params, self.catalog, rec.graph, rec.tree, rec.ids,
            z_g, tree_enc.messages, iterations=cfg.message_iterations,
            plan=rec.plan,
        )
        kl = tc.add(
            tape, kl_divergence(tape, mu_t, lv_t), kl_divergence(tape, mu_g, lv_g)
        )
        loss = tc.add(tape, tc.add(tape, l_tree, l_graph),
                      tc.scale(tape, kl, kl_weight))
        parts = {
            "tree": float(l_tree.data),
            "graph": float(l_graph.data),
            "kl": float(kl.data),
        }
        if self.with_property and cfg.property_weight > 0.0 and rec.y is not None:
            pred = self.predict_property_tensor(
                tape, tc.concat(tape, [mu_t, mu_g])
            )
            err = tc.shift(tape, pred, -rec.y)
            sq = tc.mul(tape, err, err)
            loss = tc.add(tape, loss, tc.scale(tape, sq, cfg.property_weight))
            parts["property"] = float(sq.data)
        return loss, parts

    def predict_property_tensor(self, tape: Tape | None, z: Tensor) -> Tensor:
        hidden = tc.tanh(
            tape, tc.affine(tape, z, self.params["Wp1"], self.params["bp1"])
        )
        out = tc.affine(tape, hidden, self.params["Wp2"], self.params["bp2"])
        return tc.take(tape, out, 0)

    def predict_property(self, z: np.ndarray) -> float:
        zt = tc.constant(np.asarray(z, dtype=np.float64).reshape(1, -1))
        return float(self.predict_property_tensor(None, zt).data)


def _kl_weight(step: int, total_steps: int, cfg: TrainConfig) -> float:
    warm = max(1, int(round(cfg.kl_warm_frac * total_steps)))
    return cfg.kl_weight_max * min(1.0, step / warm)


def train(
    corpus: list[MolGraph],
    config: TrainConfig,
    *,
    property_fn=None,
    vocab: Vocabulary | None = None,
    metrics_out=None,
) -> Model:
    """Train a model on a corpus; returns the trained model.

    ``property_fn`` switches on the joint property predictor.  Metrics are
    written to ``metrics_out`` (a writable file object) as line-delimited
    ``key=value`` text, one line per optimizer step.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    if vocab is None:
        vocab = build_vocabulary(corpus)
    model = Model(config, vocab, with_property=property_fn is not None)
    model.catalog = LabelCatalog(vocab)
    records = prepare_records(corpus, vocab, model.catalog, property_fn)
    model.train_canonical = sorted({r.canonical for r in records})

    shuffle_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0x51]))
    eps_rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0xE5]))

    n = len(records)
    batches_per_epoch = (n + config.batch_size - 1) // config.batch_size
    total_steps = config.epochs * batches_per_epoch
    step = 0
    lr = config.learning_rate
    t0 = time.time()
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        for b in range(batches_per_epoch):
            batch = order[b * config.batch_size : (b + 1) * config.batch_size]
            kl_w = _kl_weight(step, total_steps, config)
            parts_sum: dict[str, float] = {}
            for idx in batch:
                tape = Tape()
                loss, parts = model.molecule_loss(tape, records[idx], eps_rng, kl_w)
                tc.backward(tape, loss)
                parts["loss"] = float(loss.data)
                for k, v in parts.items():
                    parts_sum[k] = parts_sum.get(k, 0.0) + v
            model.params.scale_grad(1.0 / len(batch))
            if config.optimizer == "adam":
                tc.adam_step(model.params, lr)
            else:
                tc.sgd_step(model.params, lr)
            step += 1
            if metrics_out is not None:
                mean_parts = " ".join(
                    f"{k}={parts_sum[k] / len(batch):.6f}"
                    for k in sorted(parts_sum)
                )
                metrics_out.write(
                    f"step={step} epoch={epoch} kl_weight={kl_w:.6f} "
                    f"{mean_parts} elapsed={time.time() - t0:.2f}\n"
                )
        lr *= config.lr_decay
    return model


def evaluate_reconstruction(
    corpus: list[MolGraph],
    model: Model,
    n_enc: int = 10,
    n_dec: int = 10,
    seed: int = 0,
    max_nodes: int = 60,
) -> float:
    """Monte Carlo reconstruction rate.

    Each molecule is stochastically encoded ``n_enc`` times and every
    encoding is decoded ``n_dec`` times (greedy decode of the sampled
    latent); a trial counts when the decoded canonical string equals the
    input's.
    """
    if not corpus:
        raise ValueError("corpus is empty")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x3E]))
    hits = 0
    trials = 0
    for g in corpus:
        target = write_canonical(g)
        tree = decompose(g)
        ids = assign_labels(tree, model.vocab)
        T = model.config.message_iterations
        _, h_graph = encode_graph(None, model.params, graph_tensors(g), T)
        tree_enc = encode_tree(None, model.params, tree, ids, "bottom_up")
        for _ in range(n_enc):
            _, _, z_t = variational_head(
                None, model.params, tree_enc.h_root, "tree", rng
            )
            _, _, z_g = variational_head(None, model.params, h_graph, "graph", rng)
            z = np.concatenate([z_t.data[0], z_g.data[0]])
            for _ in range(n_dec):
                decoded = model.decode_latent(z, mode="greedy", max_nodes=max_nodes)
                hits += int(write_canonical(decoded) == target)
                trials += 1
    return hits / trials


def evaluate_prior_validity(
    model: Model,
    n_z: int = 100,
    n_dec: int = 10,
    seed: int = 0,
    max_nodes: int = 60,
) -> tuple[EvalReport, list[str]]:
    """Validity and uniqueness of molecules decoded from prior samples.

    Draws ``n_z`` standard-normal latents and decodes each ``n_dec`` times
    in sampling mode; validity is the fraction of decodes yielding a
    molecule that passes full validation, uniqueness the fraction of decoded
    canonical strings absent from the training set.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA7]))
    train_set = set(model.train_canonical)
    smiles: list[str] = []
    valid = 0
    total = 0
    for _ in range(n_z):
        z = rng.standard_normal(model.config.latent_dim)
        for _ in range(n_dec):
            total += 1
            mol = model.decode_latent(z, mode="sample", rng=rng, max_nodes=max_nodes)
            try:
                MolGraph.molecule(mol.atoms, mol.bonds)
                valid += 1
            except Exception:
                continue
            smiles.append(write_canonical(mol))
    unique = (
        sum(1 for s in smiles if s not in train_set) / len(smiles) if smiles else 0.0
    )
    report = EvalReport(prior_validity=valid / total, uniqueness=unique)
    return report, smiles
