"""Command-line interface: train, generate, evaluate, keyphrases (plus synth for fixtures)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .autodiff import NumericError, ShapeError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, dump_config, load_run_config
from .data import CorpusError, load_corpus, synth_corpus, write_jsonl
from .decode import DecodeConfig
from .keyphrase import extract_keyphrases
from .metrics import (ComparatorError, GenerationFileError, diversity_report, generate_endings,
                      load_comparator, read_generations, win_rate, write_generations)
from .train import format_epoch, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4
EXIT_CHECKPOINT = 5

log = logging.getLogger("storyend")

# flag dest -> config key
_FLAG_KEYS = {
    "seed": "train.seed",
    "variant": "model.variant",
    "itf": "model.use_itf",
    "k": "train.k",
    "hidden": "model.hidden_dim",
    "embedding": "model.embedding_dim",
    "layers": "model.num_layers",
    "epochs": "train.epochs",
    "batch_size": "train.batch_size",
    "lr": "train.lr",
    "coverage_lambda": "loss.coverage_lambda",
    "max_len": "decode.max_len",
    "format": "data.format",
    "min_freq": "data.min_freq",
    "selector": "train.selector",
}


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat 'section.key = value' config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=["baseline", "keyphrase_add", "context_concat", "coverage",
                                         "keyphrase_loss"])
    p.add_argument("--itf", action=argparse.BooleanOptionalAction, default=None,
                   help="ITF-weighted reconstruction loss")
    p.add_argument("--k", type=int, help="keyphrases per story (0 = all)")
    p.add_argument("--hidden", type=int)
    p.add_argument("--embedding", type=int)
    p.add_argument("--layers", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--coverage-lambda", type=float)
    p.add_argument("--max-len", type=int)
    p.add_argument("--format", choices=["jsonl", "rocstories-csv"])
    p.add_argument("--min-freq", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="storyend", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write checkpoints")
    _common(p)
    p.add_argument("--train", dest="train_path", help="training corpus")
    p.add_argument("--dev", dest="dev_path", help="dev corpus for model selection")
    p.add_argument("--out", required=True, help="output directory for final.ckpt / best.ckpt")
    p.add_argument("--log", help="also append per-epoch log lines to this file")
    p.add_argument("--selector", help="module:function dev scorer (lower is better)")

    p = sub.add_parser("generate", help="generate endings with a checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-block-repeat", action="store_true")
    p.add_argument("--no-block-bigrams", action="store_true")

    p = sub.add_parser("evaluate", help="DIST-1/2/3 (and pairwise win rate for two files)")
    p.add_argument("generations", nargs="+")
    p.add_argument("--out", help="write the report here (default: stdout)")
    p.add_argument("--comparator", help="module:function comparator (default: overlap)")

    p = sub.add_parser("keyphrases", help="dump RAKE keyphrases and score vectors")
    p.add_argument("--corpus", required=True)
    p.add_argument("--format", choices=["jsonl", "rocstories-csv"], default="jsonl")
    p.add_argument("--k", type=int, default=5, help="0 = all")
    p.add_argument("--out", help="default: stdout")

    p = sub.add_parser("synth", help="write a synthetic corpus as jsonl")
    p.add_argument("--n", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--generic-fraction", type=float, default=0.5)
    p.add_argument("--out", required=True)
    return parser


def _overrides(args) -> dict:
    out = {}
    for dest, key in _FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            out[key] = value
    return out


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n") if path else sys.stdout


def cmd_train(args) -> int:
    overrides = _overrides(args)
    if args.train_path:
        overrides["data.train"] = args.train_path
    if args.dev_path:
        overrides["data.dev"] = args.dev_path
    cfg = load_run_config(args.config, overrides)
    if not cfg.data.train:
        raise ConfigError("no training corpus (use --train or data.train)")
    train_set = load_corpus(cfg.data.train, cfg.data.format)
    if not train_set:
        raise CorpusError(f"{cfg.data.train}: corpus is empty")
    dev_set = load_corpus(cfg.data.dev, cfg.data.format) if cfg.data.dev else None
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    log_file = open(args.log, "a", encoding="utf-8") if args.log else None

    def on_epoch(entry):
        line = format_epoch(entry)
        print(line, file=sys.stderr)
        if log_file:
            log_file.write(line + "\n")
            log_file.flush()

    try:
        result = train(cfg, train_set, dev_set, on_epoch=on_epoch)
    finally:
        if log_file:
            log_file.close()
    save_checkpoint(out / "final.ckpt", result.params, result.config, result.vocab)
    save_checkpoint(out / "best.ckpt", result.best_params, result.config, result.vocab)
    (out / "config.txt").write_text(dump_config(result.config), encoding="utf-8")
    print(f"best epoch {result.best_epoch}; checkpoints in {out}", file=sys.stderr)
    return EXIT_OK


def cmd_generate(args) -> int:
    params, cfg, vocab = load_checkpoint(args.checkpoint)
    for key, value in _overrides(args).items():
        if key.startswith(("decode.", "train.k", "data.format")):
            cfg.set(key, value)
    if args.no_block_repeat:
        cfg.decode.block_immediate_repeat = False
    if args.no_block_bigrams:
        cfg.decode.block_repeated_bigrams = False
    corpus = load_corpus(args.corpus, cfg.data.format)
    unknown = {w for ex in corpus for w in ex.context_words(cfg.data.max_context_len) + ex.target_words()
               if w not in vocab}
    if unknown:
        log.warning("%d corpus token types are not in the checkpoint vocabulary; mapped to <unk>", len(unknown))
    gens = generate_endings(params, cfg.model, corpus, vocab, cfg.decode, cfg.k, cfg.data.max_context_len)
    write_generations(gens, args.out)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if len(args.generations) > 2:
        raise ConfigError("evaluate takes one or two generation files")
    sets = [read_generations(p) for p in args.generations]
    report = {"files": []}
    for path, gens in zip(args.generations, sets):
        r = diversity_report(gens).to_dict()
        r.pop("win_rate"), r.pop("comparisons")
        report["files"].append({"path": path, "stories": len(gens), **r})
    if len(sets) == 2:
        rate, n = win_rate(sets[0], sets[1], load_comparator(args.comparator))
        report["pairwise"] = {"win_rate_first": rate, "comparisons": n,
                              "comparator": args.comparator or "overlap"}
    f = _open_out(args.out)
    try:
        f.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    finally:
        if f is not sys.stdout:
            f.close()
    return EXIT_OK


def cmd_keyphrases(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    f = _open_out(args.out)
    try:
        for ex in corpus:
            words = ex.context_words()
            phrases, p = extract_keyphrases(words, args.k or None)
            rec = {
                "story_id": ex.story_id,
                "tokens": words,
                "phrases": [{"phrase": c.text, "raw_score": c.raw_score, "score": c.score} for c in phrases],
                "p": p.tolist(),
            }
            f.write(json.dumps(rec) + "\n")
    finally:
        if f is not sys.stdout:
            f.close()
    return EXIT_OK


def cmd_synth(args) -> int:
    write_jsonl(synth_corpus(args.seed, args.n, args.generic_fraction), args.out)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "evaluate": cmd_evaluate,
            "keyphrases": cmd_keyphrases, "synth": cmd_synth}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckpointError as exc:
        print(f"checkpoint error: {exc}", file=sys.stderr)
        return EXIT_CHECKPOINT
    except (NumericError, ShapeError) as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (CorpusError, GenerationFileError, ComparatorError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
