"""``stemlm`` command-line entry point.

Exit codes: 0 success, 2 usage/config error, 3 runtime/data error. Errors
are printed to stderr as one JSON object.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections import Counter
from pathlib import Path
from typing import List, Optional

import numpy as np

from .config import EXPERIMENT_MODELS, RunConfig, load_run_config
from .corpus import CorpusError, build_vocab, corpus_stats, encode, read_lines, write_lines
from .eval import (EmptySliceError, MixWSScorer, ModelScorer, SeedRunError, VocabularyMismatch,
                   dumps_report, perplexity_from_log_probs, select_diverse_stems, target_mask)
from .experiment import Experiment
from .models import (VARIANTS, CheckpointError, CompositionError, ConfigError, load_checkpoint,
                     save_checkpoint, train)
from .numerics import NonFiniteError
from .stemmer import (StemMap, StemMapError, calibrate_suffix_threshold, identify_stems,
                      load_stem_map, save_rules, save_stem_map)
from .synth import SynthConfig, generate

EXIT_USAGE = 2
EXIT_RUNTIME = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _fail(kind: str, message: str, code: int) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, "exit_code": code}) + "\n")
    return code


def _require_file(path: Optional[str], what: str) -> str:
    if path is None:
        raise ConfigError(f"--{what} is required")
    if not Path(path).is_file():
        raise ConfigError(f"{what} file not found: {path}")
    return path


def cmd_stats(args) -> int:
    train_lines = read_lines(_require_file(args.train, "train"))
    eval_lines = read_lines(_require_file(args.eval, "eval"))
    stats = corpus_stats(train_lines, eval_lines, build_vocab(train_lines))
    text = stats.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_stem(args) -> int:
    train_lines = read_lines(_require_file(args.train, "train"))
    words = build_vocab(train_lines).content_words()
    delta_s = args.delta_s
    if args.calibrate_suffixes is not None:
        delta_s = calibrate_suffix_threshold(words, args.calibrate_suffixes, args.max_suffix_len)
    res = identify_stems(words, delta_s, args.delta_p, args.max_suffix_len, args.max_prefix_len)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_stem_map(res.stem_map, out / "stem_map.tsv")
    save_rules(out / "rules.tsv", res.prefix_rules, res.suffix_rules)
    summary = {"words": len(words), "stems": len(set(res.stem_map.stem.values())),
               "delta_s": res.suffix_rules.threshold, "delta_p": res.prefix_rules.threshold,
               "suffix_rules": len(res.suffix_rules), "prefix_rules": len(res.prefix_rules),
               "distinct_suffixes": len(res.suffix_rules.affixes())}
    (out / "stem_summary.json").write_text(dumps_report(summary), encoding="utf-8")
    sys.stdout.write(dumps_report(summary))
    return 0


def cmd_synth(args) -> int:
    cfg = SynthConfig(n_stems=args.n_stems, n_suffixes=args.n_suffixes, zipf_exponent=args.zipf,
                      train_tokens=args.train_tokens, dev_tokens=args.dev_tokens,
                      test_tokens=args.test_tokens, seed=args.seed)
    splits, grammar = generate(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, lines in splits.items():
        write_lines(out / f"{name}.txt", lines)
    with open(out / "gold_stems.tsv", "w", encoding="utf-8", newline="\n") as fh:
        for w, s in sorted(grammar.gold_stems().items()):
            fh.write(f"{w}\t{s}\n")
    (out / "synth_config.json").write_text(dumps_report(cfg.to_dict()), encoding="utf-8")
    return 0


def _run_config(args, require=("train", "dev", "test")) -> RunConfig:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    for name in ("train", "dev", "test", "stem_map"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "seeds", None):
        cfg.seeds = [int(s) for s in args.seeds.split(",")]
    for key in ("epochs", "learning_rate", "mtl_lambda", "K", "embed_dim", "hidden_dim", "num_layers"):
        value = getattr(args, key, None)
        if value is not None:
            cfg.model[key] = value
    if getattr(args, "workers", None):
        cfg.workers = args.workers
    return cfg.validate(require)


def cmd_train(args) -> int:
    cfg = _run_config(args, require=("train", "dev"))
    train_lines = read_lines(cfg.train)
    vocab = build_vocab(train_lines)
    seed = cfg.seeds[0]
    model_cfg = cfg.model_config(args.variant, vocab.size, seed)
    stem_ids = None
    if model_cfg.needs_stems:
        if not cfg.stem_map:
            raise ConfigError(f"variant {args.variant} needs --stem-map")
        stem_ids = load_stem_map(cfg.stem_map, vocab).to_ids(vocab)
    res = train(model_cfg, encode(train_lines, vocab), encode(read_lines(cfg.dev), vocab),
                vocab.token_of, vocab.eos_id, stem_ids)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stem = out / f"{args.variant}-seed{seed}"
    save_checkpoint(res.checkpoint, stem.with_suffix(".ckpt"))
    stem.with_suffix(".log.jsonl").write_text(res.log_lines(), encoding="utf-8")
    return 0


def cmd_eval(args) -> int:
    paths = args.checkpoint
    test_lines = read_lines(_require_file(args.test, "test"))
    ckpts = [load_checkpoint(_require_file(p, "checkpoint")) for p in paths]
    vocab_tokens = ckpts[0].vocab
    if any(c.vocab != vocab_tokens for c in ckpts[1:]):
        raise VocabularyMismatch("checkpoints were trained with different vocabularies")
    from .corpus import Vocabulary
    vocab = Vocabulary(vocab_tokens)
    enc = encode(test_lines, vocab)
    models = [c.build_model() for c in ckpts]
    eb, bptt = models[0].config.eval_batch_size, models[0].config.bptt
    stem_map: Optional[StemMap] = load_stem_map(args.stem_map, vocab) if args.stem_map else None

    mode = args.mode or ("mixws" if len(models) == 2 else "single")
    if mode == "mixws":
        if len(models) != 2:
            raise ConfigError("mixws mode needs exactly two checkpoints: word mixture, stem mixture")
        p, q = models
        if q.target_map is None:
            raise ConfigError("second checkpoint must be a stem-target model")
        stem_ids = stem_map.to_ids(vocab) if stem_map is not None else q.target_map
        scorer = MixWSScorer(p, q, stem_ids, vocab.eos_id, vocab.unk_id, eb, bptt)
    else:
        if len(models) != 1:
            raise ConfigError("single mode takes exactly one checkpoint")
        scorer = ModelScorer(models[0], vocab.eos_id, vocab.unk_id, eb, bptt)
        stem_ids = stem_map.to_ids(vocab) if stem_map is not None else models[0].target_map

    lp = scorer.log_probs(enc.ids)
    mask = target_mask(enc.ids, scorer, not args.exclude_unk, not args.exclude_eos)
    report = {"mode": mode, "checkpoints": [str(p) for p in paths], "test": args.test,
              "token_count": int(mask.sum()), "perplexity": perplexity_from_log_probs(lp[mask]),
              "include_unk": not args.exclude_unk, "include_eos": not args.exclude_eos}
    if args.slice_diverse_stems:
        if stem_map is None:
            raise ConfigError("--slice-diverse-stems needs --stem-map")
        if not args.train:
            raise ConfigError("--slice-diverse-stems needs --train for the type/token counts")
        counts = Counter(t for line in read_lines(args.train) for t in line)
        stems = select_diverse_stems(stem_map, counts, args.min_types, args.min_tokens)
        wanted = mask & np.isin(stem_ids[enc.ids], [vocab.id_of[s] for s in stems])
        if not wanted.any():
            raise EmptySliceError("no test token belongs to a diverse stem")
        report["slice"] = {"stem_set_size": len(stems), "slice_token_count": int(wanted.sum()),
                           "slice_perplexity": perplexity_from_log_probs(lp[wanted]),
                           "min_types": args.min_types, "min_tokens": args.min_tokens}
    text = dumps_report(report)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_experiment(args) -> int:
    cfg = _run_config(args)
    if args.control:
        cfg.control = True
    report = Experiment(cfg).run(Path(cfg.out_dir))
    sys.stdout.write(dumps_report({k: report[k] for k in ("test_ppl", "control", "unigram_ppl")}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stemlm", description="Stem-driven language modelling toolkit")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("stats", help="corpus statistics as JSON")
    s.add_argument("--train", required=True)
    s.add_argument("--eval", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("stem", help="mine affix rules and write a stem map")
    s.add_argument("--train", required=True)
    s.add_argument("--delta-s", type=int)
    s.add_argument("--delta-p", type=int)
    s.add_argument("--max-suffix-len", type=int, default=6)
    s.add_argument("--max-prefix-len", type=int, default=4)
    s.add_argument("--calibrate-suffixes", type=int, metavar="N",
                   help="pick delta-s so the suffix rules use about N distinct suffixes")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_stem)

    s = sub.add_parser("synth", help="generate a synthetic stem x suffix corpus")
    d = SynthConfig()
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=d.seed)
    s.add_argument("--n-stems", type=int, default=d.n_stems)
    s.add_argument("--n-suffixes", type=int, default=d.n_suffixes)
    s.add_argument("--zipf", type=float, default=d.zipf_exponent)
    s.add_argument("--train-tokens", type=int, default=d.train_tokens)
    s.add_argument("--dev-tokens", type=int, default=d.dev_tokens)
    s.add_argument("--test-tokens", type=int, default=d.test_tokens)
    s.set_defaults(func=cmd_synth)

    def common(s):
        s.add_argument("--config")
        s.add_argument("--train")
        s.add_argument("--dev")
        s.add_argument("--test")
        s.add_argument("--stem-map", dest="stem_map")
        s.add_argument("--out")
        s.add_argument("--epochs", type=int)
        s.add_argument("--learning-rate", type=float, dest="learning_rate")
        s.add_argument("--mtl-lambda", type=float, dest="mtl_lambda")
        s.add_argument("--k", type=int, dest="K")
        s.add_argument("--embed-dim", type=int, dest="embed_dim")
        s.add_argument("--hidden-dim", type=int, dest="hidden_dim")
        s.add_argument("--num-layers", type=int, dest="num_layers")

    s = sub.add_parser("train", help="train one variant")
    common(s)
    s.add_argument("--variant", required=True, choices=VARIANTS)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="evaluate a checkpoint or a Mix-WS pair")
    s.add_argument("--checkpoint", action="append", required=True,
                   help="repeat twice (word mixture, then stem mixture) for Mix-WS")
    s.add_argument("--test", required=True)
    s.add_argument("--train", help="training corpus, for --slice-diverse-stems")
    s.add_argument("--stem-map")
    s.add_argument("--mode", choices=["single", "mixws"])
    s.add_argument("--exclude-unk", action="store_true")
    s.add_argument("--exclude-eos", action="store_true")
    s.add_argument("--slice-diverse-stems", action="store_true")
    s.add_argument("--min-types", type=int, default=10)
    s.add_argument("--min-tokens", type=int, default=500)
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("experiment", help="multi-seed sweep with aggregation")
    common(s)
    s.add_argument("--seeds", help="comma-separated seed list")
    s.add_argument("--control", action="store_true", help="add the shuffled-stem Mix-WS arm")
    s.add_argument("--workers", type=int)
    s.set_defaults(func=cmd_experiment)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        return _fail("usage", str(e), EXIT_USAGE)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, UsageError) as e:
        return _fail("config", str(e), EXIT_USAGE)
    except (CorpusError, StemMapError, CheckpointError, VocabularyMismatch, EmptySliceError,
            CompositionError, NonFiniteError, SeedRunError, OSError) as e:
        return _fail(type(e).__name__, str(e), EXIT_RUNTIME)


if __name__ == "__main__":
    sys.exit(main())
