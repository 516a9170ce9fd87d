"""Command-line interface.

Subcommands cover the whole pipeline: ``decompose``, ``vocab``, ``train``,
``sample``, ``reconstruct-eval``, and ``optimize``.  Every run that writes
an output file also writes ``run_manifest.json`` next to it (command,
config snapshot, input hashes, seed, tool version); reruns with an equal
manifest produce byte-identical outputs.

Exit codes: 0 ok, 1 usage, 2 input parse, 3 invariant violation, 4 unknown
cluster label, 5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields

import numpy as np

from . import __version__
from .juncture import (
    DecompositionError,
    OovCluster,
    build_vocabulary,
    decompose,
    load_vocabulary,
    save_vocabulary,
    tree_sexpr,
    verify,
)
from .latentopt import optimize, report, train_joint
from .molgraph import MolGraph, MoleculeError, get_property, parse_smiles, write_canonical
from .train import Model, TrainConfig, evaluate_reconstruction, train

__all__ = ["main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_VIOLATION = 3
EXIT_OOV = 4
EXIT_INTERNAL = 5


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        raise _UsageError(message)


def read_smiles_file(path) -> list[tuple[int, str]]:
    """SMILES text: one molecule per line, '#'-prefixed comments ignored."""
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            out.append((lineno, text))
    if not out:
        raise MoleculeError(f"{path}: no molecules found")
    return out


def parse_corpus(path) -> list[MolGraph]:
    mols = []
    for lineno, smi in read_smiles_file(path):
        try:
            mols.append(parse_smiles(smi))
        except MoleculeError as e:
            raise MoleculeError(f"{path}:{lineno}: {smi!r}: {e}") from e
    return mols


def _sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path: str, command: str, options: dict,
                   inputs: list[str], seed: int | None,
                   config: dict | None) -> None:
    manifest = {
        "command": command,
        "options": {k: options[k] for k in sorted(options)},
        "inputs": {os.path.basename(p): _sha256_file(p) for p in inputs},
        "seed": seed,
        "config": config,
        "tool_version": __version__,
    }
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "run_manifest.json"), "w",
              encoding="utf-8") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _config_from_args(args) -> TrainConfig:
    cfg = TrainConfig()
    if getattr(args, "config", None):
        cfg = _read_config_file(args.config)
    overrides = {}
    for f in fields(TrainConfig):
        flag = f.name.replace("_", "-")
        val = getattr(args, f.name, None)
        if val is not None:
            overrides[f.name] = val
    if overrides:
        cfg = cfg.override(**overrides)
    return cfg


def _read_config_file(path) -> TrainConfig:
    """Flat key=value text; types follow the TrainConfig field defaults."""
    raw: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            if "=" not in text:
                raise _UsageError(f"{path}:{lineno}: expected key=value")
            key, val = text.split("=", 1)
            raw[key.strip()] = val.strip()
    typed: dict = {}
    defaults = TrainConfig()
    for f in fields(TrainConfig):
        if f.name not in raw:
            continue
        current = getattr(defaults, f.name)
        text = raw.pop(f.name)
        typed[f.name] = type(current)(text) if not isinstance(current, str) else text
    if raw:
        raise _UsageError(f"{path}: unknown config keys {sorted(raw)}")
    return TrainConfig.from_dict({**defaults.to_dict(), **typed})


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat key=value config file")
    for f in fields(TrainConfig):
        flag = "--" + f.name.replace("_", "-")
        kind = type(getattr(TrainConfig(), f.name))
        p.add_argument(flag, type=kind, default=None, dest=f.name)


def build_parser() -> _Parser:
    parser = _Parser(prog="moltree", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("decompose", help="cluster trees for a SMILES file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--verify", action="store_true",
                   help="check every tree invariant; nonzero exit on violations")
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("vocab", help="cluster-label vocabulary for a corpus")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--vocab", help="vocabulary file (default: built from input)")
    p.add_argument("--out", required=True)
    p.add_argument("--property", action="store_true",
                   help="jointly train the property predictor")
    p.add_argument("--metrics", help="write per-step metrics to this file")
    _add_config_flags(p)

    p = sub.add_parser("sample", help="decode prior samples")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--max-nodes", type=int, default=60)
    p.add_argument("--trace", help="write per-decode trace records to this file")

    p = sub.add_parser("reconstruct-eval", help="Monte Carlo reconstruction rate")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--n-enc", type=int, default=10)
    p.add_argument("--n-dec", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("optimize", help="constrained latent-space optimization")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--steps", type=int, default=80)
    p.add_argument("--alpha", type=float, default=2.0)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=1)
    return parser


# -- worker functions for --jobs (must be module level for pickling) ---------

_WORKER_MODEL: Model | None = None


def _load_worker_model(path: str) -> None:
    global _WORKER_MODEL
    _WORKER_MODEL = Model.load(path)


def _decompose_one(smi: str) -> tuple[str, list[str]]:
    g = parse_smiles(smi)
    tree = decompose(g)
    return tree_sexpr(tree), verify(tree, g)


def _optimize_one(task: tuple[str, float, int, float]) -> tuple:
    smi, delta, steps, alpha = task
    r = optimize(parse_smiles(smi), _WORKER_MODEL, delta, steps=steps,
                 step_size=alpha)
    return (r.original, r.modified, r.improvement, r.similarity, r.success)


def _pmap(fn, items, jobs: int, initializer=None, initargs=()):
    if jobs <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs, initializer=initializer,
                             initargs=initargs) as pool:
        return list(pool.map(fn, items))


# -- subcommand implementations ----------------------------------------------

def _cmd_decompose(args) -> int:
    rows = read_smiles_file(args.infile)
    results = _pmap(_decompose_one, [smi for _, smi in rows], args.jobs)
    violations = 0
    with open(args.out, "w", encoding="utf-8") as fh:
        for (lineno, smi), (sexpr, problems) in zip(rows, results):
            fh.write(sexpr + "\n")
            if args.verify and problems:
                violations += len(problems)
                for msg in problems:
                    print(f"{args.infile}:{lineno}: {smi}: {msg}", file=sys.stderr)
    write_manifest(args.out, "decompose",
                   {"verify": args.verify, "jobs": args.jobs},
                   [args.infile], None, None)
    if args.verify:
        print(f"checked {len(rows)} molecules, {violations} violations")
        if violations:
            return EXIT_VIOLATION
    return EXIT_OK


def _cmd_vocab(args) -> int:
    corpus = parse_corpus(args.infile)
    vocab = build_vocabulary(corpus)
    save_vocabulary(vocab, args.out)
    write_manifest(args.out, "vocab", {}, [args.infile], None, None)
    print(f"{len(vocab)} labels")
    return EXIT_OK


def _cmd_train(args) -> int:
    corpus = parse_corpus(args.infile)
    config = _config_from_args(args)
    vocab = load_vocabulary(args.vocab) if args.vocab else None
    metrics = open(args.metrics, "w", encoding="utf-8") if args.metrics else None
    try:
        if args.property:
            model = train_joint(
                corpus, config, property_fn=get_property(config.property_name),
                metrics_out=metrics,
            )
        else:
            model = train(corpus, config, vocab=vocab, metrics_out=metrics)
    finally:
        if metrics:
            metrics.close()
    model.save(args.out)
    inputs = [args.infile] + ([args.vocab] if args.vocab else [])
    write_manifest(args.out, "train",
                   {"property": args.property}, inputs, config.seed,
                   config.to_dict())
    print(f"saved checkpoint to {args.out} (vocab {len(model.vocab)})")
    return EXIT_OK


def _cmd_sample(args) -> int:
    model = Model.load(args.ckpt)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed, 0x5A]))
    trace = [] if args.trace else None
    train_set = set(model.train_canonical)
    smiles: list[str] = []
    valid = 0
    for _ in range(args.n):
        z = rng.standard_normal(model.config.latent_dim)
        mol = model.decode_latent(z, mode="sample", rng=rng,
                                  max_nodes=args.max_nodes, trace=trace)
        try:
            MolGraph.molecule(mol.atoms, mol.bonds)
            valid += 1
        except MoleculeError:
            pass
        smiles.append(write_canonical(mol))
    with open(args.out, "w", encoding="utf-8") as fh:
        for s in smiles:
            fh.write(s + "\n")
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for rec in trace:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
    unique = sum(1 for s in smiles if s not in train_set) / len(smiles)
    write_manifest(args.out, "sample",
                   {"n": args.n, "max_nodes": args.max_nodes},
                   [args.ckpt], args.seed, None)
    print(f"validity {valid}/{args.n}  uniqueness {unique:.3f}")
    return EXIT_OK


def _cmd_reconstruct_eval(args) -> int:
    model = Model.load(args.ckpt)
    corpus = parse_corpus(args.infile)
    frac = evaluate_reconstruction(
        corpus, model, n_enc=args.n_enc, n_dec=args.n_dec, seed=args.seed
    )
    print(f"reconstruction {frac:.4f}")
    return EXIT_OK


def _cmd_optimize(args) -> int:
    model = Model.load(args.ckpt)
    if not model.with_property:
        raise _UsageError("checkpoint was trained without --property")
    rows = read_smiles_file(args.infile)
    for lineno, smi in rows:
        try:
            parse_smiles(smi)
        except MoleculeError as e:
            raise MoleculeError(f"{args.infile}:{lineno}: {e}") from e
    tasks = [(smi, args.delta, args.steps, args.alpha) for _, smi in rows]
    results = _pmap(_optimize_one, tasks, args.jobs,
                    initializer=_load_worker_model, initargs=(args.ckpt,))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["input", "output", "improvement", "similarity", "success"])
        for original, modified, imp, sim, success in results:
            writer.writerow([
                original,
                modified or "",
                "" if imp is None else f"{imp:.6f}",
                "" if sim is None else f"{sim:.6f}",
                int(success),
            ])
    n_success = sum(1 for r in results if r[4])
    rate = n_success / len(results)
    imps = [r[2] for r in results if r[4]]
    sims = [r[3] for r in results if r[4]]
    write_manifest(args.out, "optimize",
                   {"delta": args.delta, "steps": args.steps, "alpha": args.alpha},
                   [args.ckpt, args.infile], None, None)
    if imps:
        print(f"success {rate:.3f}  mean_improvement {np.mean(imps):.4f}  "
              f"mean_similarity {np.mean(sims):.4f}")
    else:
        print(f"success {rate:.3f}  mean_improvement -  mean_similarity -")
    return EXIT_OK


_DISPATCH = {
    "decompose": _cmd_decompose,
    "vocab": _cmd_vocab,
    "train": _cmd_train,
    "sample": _cmd_sample,
    "reconstruct-eval": _cmd_reconstruct_eval,
    "optimize": _cmd_optimize,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _DISPATCH[args.cmd](args)
    except _UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (MoleculeError, DecompositionError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_PARSE
    except OovCluster as e:
        print(f"cluster label not in vocabulary: {e.label}", file=sys.stderr)
        return EXIT_OOV
    except FileNotFoundError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
