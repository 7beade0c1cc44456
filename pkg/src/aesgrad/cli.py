"""Command-line surface.

Subcommands:

- ``embed``        build an aesthetic embedding from images or precomputed
                   embeddings and write it as an AESE file
- ``personalize``  run gradient ascent for one prompt, write conditioning
                   vectors, a per-step trace, and a JSON summary
- ``experiment``   run the paired 25-prompt protocol from a run config
- ``inspect``      dump header/metadata for any AESE/AESC/MCLP file

Exit codes: 0 success, 1 input/config error, 2 format error, 3 numeric
error, 4 unknown file magic.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .aesthetics import (
    OPTIMIZER_ASCENT,
    OPTIMIZER_SGLD,
    build_aesthetic_embedding,
    personalize,
    semantic_drift,
    similarity,
    toy_default_config,
)
from .encoder import (
    MCLP_MAGIC,
    build_vocab,
    encode_image,
    encode_text_plain,
    init_weights,
    load_weights,
    tokenize,
)
from .errors import (
    FormatError,
    InputError,
    NumericError,
    ToolkitError,
    UnknownMagicError,
)
from .formats import (
    AESC_MAGIC,
    AESE_MAGIC,
    load_aesthetic,
    load_embedding_matrix,
    load_image_grid,
    save_aesthetic,
    save_vector,
)
from .harness import PROMPT_CORPUS, emit_report, run_experiment
from .runconfig import (
    builtin_run_config,
    encoder_preset,
    load_run_config,
    resolve_experiment,
)
from .scorer import load_scorer

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_FORMAT = 2
EXIT_NUMERIC = 3
EXIT_UNKNOWN_MAGIC = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aesgrad",
                                     description="aesthetic-gradient personalization toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    embed = sub.add_parser("embed", help="build an aesthetic embedding (AESE)")
    embed.add_argument("inputs", nargs="+", help="embedding matrix files, or images with --images")
    embed.add_argument("--dim", type=int, default=None,
                       help="embedding dimension (required for raw float inputs)")
    embed.add_argument("--name", default="aesthetic", help="embedding name stored in metadata")
    embed.add_argument("--out", required=True, help="output AESE path")
    embed.add_argument("--images", action="store_true",
                       help="treat inputs as grayscale image grids and encode them")
    embed.add_argument("--weights", default=None,
                       help="MCLP weights used to encode images (with --images)")
    embed.add_argument("--created-at", default=None,
                       help="ISO timestamp for metadata (default: now; pass a fixed "
                            "value for reproducible bytes)")

    pers = sub.add_parser("personalize", help="gradient-ascend text weights for one prompt")
    pers.add_argument("--prompt", required=True)
    pers.add_argument("--aesthetic", required=True, help="AESE file")
    pers.add_argument("--weights", default=None,
                      help="MCLP weights (default: synthesize toy preset from --seed)")
    pers.add_argument("--epsilon", type=float, default=None)
    pers.add_argument("--iters", type=int, default=None)
    pers.add_argument("--optimizer", choices=[OPTIMIZER_ASCENT, OPTIMIZER_SGLD], default=None)
    pers.add_argument("--sgld-temperature", type=float, default=None)
    pers.add_argument("--out-dir", required=True)
    pers.add_argument("--seed", type=int, default=0)

    exp = sub.add_parser("experiment", help="run the paired prompt-corpus protocol")
    exp.add_argument("--config", default=None,
                     help="run config JSON (default: built-in toy-default preset)")
    exp.add_argument("--keyword", default=None,
                     help="enable the keyword-append condition with this keyword")
    exp.add_argument("--out-dir", default=None, help="override the config's output directory")
    exp.add_argument("--seed", type=int, default=None, help="override the config's master seed")
    exp.add_argument("--max-workers", type=int, default=None,
                     help="run prompt jobs in a thread pool of this size")

    insp = sub.add_parser("inspect", help="print header and metadata of a toolkit file")
    insp.add_argument("path")
    insp.add_argument("--no-check", action="store_true",
                      help="skip the unit-norm check when reading AESE payloads")
    return parser


def _load_input_embeddings(paths: list[str], dim: int | None) -> list[np.ndarray]:
    rows: list[np.ndarray] = []
    for raw_path in paths:
        matrix = load_embedding_matrix(raw_path, dim)
        rows.extend(np.asarray(matrix[i], dtype=np.float32) for i in range(matrix.shape[0]))
    return rows


def _cmd_embed(args: argparse.Namespace) -> int:
    if args.images:
        if args.weights is None:
            raise InputError("--images requires --weights to encode them")
        weights = load_weights(args.weights)
        side = weights.config.image_side
        vectors = [encode_image(weights, load_image_grid(path, side)).data
                   for path in args.inputs]
    else:
        vectors = _load_input_embeddings(args.inputs, args.dim)
    created_at = args.created_at or datetime.now(timezone.utc).isoformat()
    embedding = build_aesthetic_embedding(vectors, name=args.name, created_at=created_at)
    save_aesthetic(embedding, args.out)
    print(f"K={embedding.source_count} dim={embedding.dim} digest={embedding.source_digest}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _trace_csv(trace) -> str:
    lines = ["step,similarity,grad_norm"]
    for entry in trace.steps:
        grad = "" if entry.grad_norm is None else repr(entry.grad_norm)
        lines.append(f"{entry.step},{entry.similarity!r},{grad}")
    return "\n".join(lines) + "\n"


def _cmd_personalize(args: argparse.Namespace) -> int:
    embedding = load_aesthetic(args.aesthetic)
    if args.weights is not None:
        weights = load_weights(args.weights)
    else:
        weights = init_weights(encoder_preset("toy"), seed=args.seed)
    if embedding.dim != weights.config.d_joint:
        raise InputError(f"aesthetic dim {embedding.dim} does not match "
                         f"weights d_joint {weights.config.d_joint}")

    overrides = {}
    if args.epsilon is not None:
        overrides["epsilon"] = args.epsilon
    if args.iters is not None:
        overrides["iterations"] = args.iters
    if args.optimizer is not None:
        overrides["optimizer"] = args.optimizer
    if args.sgld_temperature is not None:
        overrides["sgld_temperature"] = args.sgld_temperature
    pcfg = toy_default_config(**overrides)

    vocab = build_vocab(list(PROMPT_CORPUS) + [args.prompt], weights.config.vocab_size)
    tokens = tokenize(args.prompt, vocab, weights.config.context_length)
    c = encode_text_plain(weights, tokens)
    personalized, trace = personalize(weights, tokens, embedding, pcfg, seed=args.seed)
    c_prime = encode_text_plain(personalized, tokens)

    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_vector(out / "c.vec", c.data)
    save_vector(out / "c_prime.vec", c_prime.data)
    (out / "trace.csv").write_text(_trace_csv(trace), encoding="utf-8")
    summary = {
        "prompt": args.prompt,
        "epsilon": pcfg.epsilon,
        "iterations": pcfg.iterations,
        "optimizer": pcfg.optimizer,
        "seed": args.seed,
        "similarity_before": trace.steps[0].similarity,
        "similarity_after": trace.steps[-1].similarity,
        "similarity_gain": trace.similarity_gain,
        "semantic_drift": trace.drift,
        "aesthetic_name": embedding.name,
        "aesthetic_digest": embedding.source_digest,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    print(f"similarity {trace.steps[0].similarity!r} -> {trace.steps[-1].similarity!r} "
          f"(gain {trace.similarity_gain!r})")
    print(f"semantic drift {trace.drift!r}")
    print(f"wrote {out / 'c.vec'}, {out / 'c_prime.vec'}, trace.csv, summary.json")
    return EXIT_OK


def _cmd_experiment(args: argparse.Namespace) -> int:
    from dataclasses import replace

    cfg = load_run_config(args.config) if args.config else builtin_run_config("toy-default")
    updates = {}
    if args.keyword is not None:
        updates["keyword"] = args.keyword
    if args.out_dir is not None:
        updates["out_dir"] = args.out_dir
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.max_workers is not None:
        updates["max_workers"] = args.max_workers
    if updates:
        cfg = replace(cfg, **updates)

    resolved = resolve_experiment(cfg)
    report = run_experiment(
        resolved.weights, resolved.corpus, resolved.embedding, resolved.scorer,
        resolved.generator, cfg.personalization,
        seeds_per_prompt=cfg.seeds_per_prompt, keyword=cfg.keyword,
        master_seed=cfg.master_seed, max_workers=cfg.max_workers)
    written = emit_report(report, cfg.out_dir)
    for condition, stats in report.condition_summaries.items():
        print(f"{condition}: mean={stats['mean']!r} std={stats['std']!r} "
              f"median={stats['median']!r}")
    print(f"sign test (personalized > original): "
          f"{report.sign_test_personalized_gt_original}/{len(report.per_prompt)} prompts")
    print("wrote " + ", ".join(str(written[name]) for name in sorted(written)))
    return EXIT_OK


def _cmd_inspect(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if not path.is_file():
        raise InputError(f"no such file: {path}")
    magic = path.open("rb").read(4)
    if magic == AESE_MAGIC:
        embedding = load_aesthetic(path, check_norm=not args.no_check)
        norm = float(np.linalg.norm(np.asarray(embedding.vector, dtype=np.float64)))
        print(f"format=AESE version=1 dim={embedding.dim} norm={norm:.6f}")
        print("metadata=" + json.dumps(embedding.metadata(), sort_keys=True))
    elif magic == AESC_MAGIC:
        scorer = load_scorer(path)
        print(f"format=AESC version=1 dim={scorer.expected_dim} bias={scorer.b!r}")
        print(f"name={scorer.name}")
    elif magic == MCLP_MAGIC:
        weights = load_weights(path)
        cfg = weights.config
        n_params = sum(int(np.prod(t.data.shape)) for t in weights.params.values())
        print(f"format=MCLP version=1 vocab_size={cfg.vocab_size} "
              f"context_length={cfg.context_length} d_model={cfg.d_model} "
              f"n_layers={cfg.n_layers} n_heads={cfg.n_heads} d_joint={cfg.d_joint} "
              f"image_side={cfg.image_side} patch_side={cfg.patch_side}")
        print(f"parameters={n_params} checksum={weights.checksum()}")
    else:
        raise UnknownMagicError(f"unknown magic {magic!r} in {path}")
    return EXIT_OK


_HANDLERS = {
    "embed": _cmd_embed,
    "personalize": _cmd_personalize,
    "experiment": _cmd_experiment,
    "inspect": _cmd_inspect,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UnknownMagicError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNKNOWN_MAGIC
    except FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
