"""Acceptance criteria, one test per criterion; each prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The desk-scale
trend run (criterion 7) trains 35 models and takes roughly a quarter hour.
"""
import filecmp
import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

import oracle_stemmer as oracle
from stemlm.config import load_run_config
from stemlm.corpus import build_vocab, encode, write_lines
from stemlm.eval import ModelScorer, perplexity, select_diverse_stems, slice_perplexity
from stemlm.experiment import Experiment
from stemlm.models import (LanguageModel, ModelConfig, config_for_variant, loss_stem, loss_word,
                           mixws_compose, mtl_loss, train, within_class_share)
from stemlm.numerics import Tensor, default_dtype, grad_check, ops
from stemlm.stemmer import StemMap, identify_stems, mine_suffix_rules
from stemlm.synth import SynthConfig, generate

ROOT = Path(__file__).resolve().parent.parent


def _random_vocab(rng, n, alphabet, max_len):
    letters = list("abcdef"[:alphabet])
    words, tries = set(), 0
    while len(words) < n and tries < 50 * n:
        tries += 1
        words.add("".join(rng.choice(letters, int(rng.integers(1, max_len + 1)))))
    return sorted(words)


def test_c01_stemmer_matches_bruteforce(report):
    rng = np.random.default_rng(20240)
    t0 = time.time()
    mismatches = []
    for trial in range(100):
        # Sizes are log-uniform up to the 500-word cap; the first trial sits on the cap.
        n = 500 if trial == 0 else int(round(math.exp(rng.uniform(0, math.log(500)))))
        words = _random_vocab(rng, n, int(rng.integers(2, 7)), int(rng.integers(1, 9)))
        ds, dp = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        got = identify_stems(words, ds, dp).stem_map.stem
        if got != oracle.stems(words, ds, dp):
            mismatches.append(trial)
    elapsed = time.time() - t0
    ok = not mismatches and elapsed < 60
    report("1", ok, f"100 vocabularies, mismatches={mismatches}, {elapsed:.1f}s (limit 60s)")
    assert not mismatches
    assert elapsed < 60


def test_c02_walk_talk(report):
    words = ["walk", "walks", "walked", "talk", "talks", "talked"]
    rules = mine_suffix_rules(words, 2, max_len=2).rules
    expected_rules = {("", ""), ("", "s"), ("", "ed"), ("s", "ed"), ("k", "ks")}
    # The prefix pair (t, w) has support 3 here, so the prefix threshold must exceed 3
    # for walk-forms and talk-forms to stay apart.
    stem = identify_stems(words, delta_s=2, delta_p=4, max_suffix_len=2).stem_map.stem
    expected_map = {w: w[:4] for w in words}
    ok = rules == expected_rules and stem == expected_map
    report("2", ok, f"rules={sorted(rules)}")
    assert rules == expected_rules
    assert stem == expected_map


def _grad_models():
    V, d = 20, 8
    rng = np.random.default_rng(0)
    stem_ids = np.array([i - i % 3 for i in range(V)])
    ids = rng.integers(0, V, size=(3, 6))
    # Weights drawn from +-1 keep every gradient entry well above the float64 rounding
    # floor of the central difference (|f| * 1e-16 / epsilon); at +-0.1 some LSTM entries
    # sit near 1e-9 and the relative error measures rounding, not the backward pass.
    common = dict(embed_dim=d, hidden_dim=d, num_layers=2, dropout=0.25, dtype="float64", seed=1,
                  init_range=1.0)
    out = {}
    for name, variant, extra in [("base", "base", {}), ("mtl", "mtl-s", {}), ("mix", "mix-w", {"K": 2})]:
        cfg = config_for_variant(variant, V, **common, **extra)
        model = LanguageModel(cfg)

        def loss_fn(model=model, cfg=cfg):
            hidden, _ = model.encode(ids[:, :-1], training=True, rng=np.random.default_rng(5))
            tgt = ids[:, 1:].T.reshape(-1)
            lw = loss_word(model.head.log_probs(hidden), tgt)
            if model.aux_head is None:
                return lw
            return mtl_loss(lw, loss_stem(model.aux_head.log_probs(hidden), tgt, stem_ids), cfg.mtl_lambda)
        out[name] = (model, loss_fn)
    return out


def test_c03_gradient_checks(report):
    t0 = time.time()
    errs = {}
    with default_dtype(np.float64):
        for name, (model, loss_fn) in _grad_models().items():
            errs[name] = grad_check(loss_fn, model.parameters(), epsilon=1e-4, max_entries=None)
    elapsed = time.time() - t0
    ok = max(errs.values()) < 1e-4 and elapsed < 30
    report("3", ok, ", ".join(f"{k}={v:.2e}" for k, v in errs.items()) + f", {elapsed:.1f}s (limit 30s)")
    assert max(errs.values()) < 1e-4
    assert elapsed < 30


def test_c04_normalization(report):
    rng = np.random.default_rng(4)
    worst = 0.0
    for case in range(1000):
        V = int(rng.integers(2, 40))
        H = int(rng.integers(2, 9))
        arch = "mix" if case % 2 else "base"
        cfg = ModelConfig(vocab_size=V, embed_dim=int(rng.integers(2, 9)), hidden_dim=H, num_layers=1,
                          K=int(rng.integers(1, 5)), arch=arch, seed=case, dtype="float64")
        dist = LanguageModel(cfg).next_word_dist(rng.normal(0, 3, size=(2, H)))
        worst = max(worst, float(np.abs(dist.sum(axis=1) - 1).max()))

        p = rng.dirichlet(np.full(V, 0.5))
        q = rng.dirichlet(np.full(V, 0.5))
        stem_ids = _random_stem_ids(rng, V)
        worst = max(worst, abs(mixws_compose(p, q, stem_ids).sum() - 1))
        r = within_class_share(p, stem_ids)
        class_sums = np.bincount(stem_ids, weights=r, minlength=V)[np.unique(stem_ids)]
        worst = max(worst, float(np.abs(class_sums - 1).max()))
    ok = worst <= 1e-6
    report("4", ok, f"1000 cases, max |sum - 1| = {worst:.2e}")
    assert ok


def _random_stem_ids(rng, V):
    """Random valid stem map: every stem is a member of its own class."""
    n_stems = int(rng.integers(1, V + 1))
    stems = rng.choice(V, n_stems, replace=False)
    ids = stems[rng.integers(0, n_stems, size=V)]
    ids[stems] = stems
    return ids


def test_c05_compose_hand_example_and_identities(report):
    out = mixws_compose(np.array([0.5, 0.3, 0.2]), np.array([0.6, 0.1, 0.3]), np.array([0, 0, 2]))
    hand = np.allclose(out, [0.4375, 0.2625, 0.3], rtol=0, atol=1e-12)
    rng = np.random.default_rng(5)
    id_ok = pq_ok = True
    for _ in range(500):
        V = int(rng.integers(1, 12))
        p, q = rng.dirichlet(np.ones(V)), rng.dirichlet(np.ones(V))
        stem_ids = _random_stem_ids(rng, V)
        id_ok &= np.allclose(mixws_compose(p, q, np.arange(V)), q, atol=1e-12)
        # brute force: r(w) * q'(stem(w)) by explicit class sums
        brute = np.array([p[w] / p[stem_ids == stem_ids[w]].sum() * p[stem_ids == stem_ids[w]].sum()
                          for w in range(V)])
        pq_ok &= np.allclose(mixws_compose(p, p, stem_ids), brute, atol=1e-12)
        pq_ok &= np.allclose(brute, p, atol=1e-12)
    ok = bool(hand and id_ok and pq_ok)
    report("5", ok, f"hand={out.round(6).tolist()}, identity-map={id_ok}, p=q={pq_ok}")
    assert ok


def test_c06_loss_identities(report, toy_data):
    rng = np.random.default_rng(6)
    V = 15
    with default_dtype(np.float64):
        lp = ops.log_softmax(Tensor(rng.normal(size=(12, V))))
    tgt = rng.integers(0, V, 12)
    lw = loss_word(lp, tgt)
    lam_ok = mtl_loss(lw, loss_stem(lp, tgt, rng.integers(0, V, V)), 1.0).item() == lw.item()
    ident_ok = loss_stem(lp, tgt, np.arange(V)).item() == lw.item()

    # Training with lambda = 1 leaves the shared parameters exactly where Base puts them.
    d = toy_data
    kw = dict(embed_dim=8, hidden_dim=8, num_layers=1, epochs=2, batch_size=4, bptt=6,
              learning_rate=1e-2, dtype="float64", mtl_lambda=1.0)
    base = train(config_for_variant("base", d["vocab"].size, **kw), d["train"], d["dev"],
                 d["vocab"].token_of, d["vocab"].eos_id)
    mtl = train(config_for_variant("mtl-s", d["vocab"].size, **kw), d["train"], d["dev"],
                d["vocab"].token_of, d["vocab"].eos_id, d["stem_ids"])
    train_ok = all(np.array_equal(v, mtl.model.params[k].data) for k, v in base.model.state_dict().items())

    # Perplexity from the scorer against exp of the loss over the same stream in one window.
    model = base.model
    ids = d["test"].ids
    ppl = perplexity(ModelScorer(model, d["vocab"].eos_id, d["vocab"].unk_id, 1, len(ids)), d["test"])
    hidden, _ = model.encode(np.concatenate([[d["vocab"].eos_id], ids[:-1]])[None, :])
    loss = loss_word(model.head.log_probs(hidden), ids).item()
    ppl_ok = abs(ppl - math.exp(loss)) <= 1e-9 * ppl
    ok = bool(lam_ok and ident_ok and train_ok and ppl_ok)
    report("6", ok, f"lambda=1:{lam_ok} identity-map:{ident_ok} lambda=1 training==base:{train_ok} "
                    f"ppl=exp(loss):{ppl_ok}")
    assert ok


@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("desk")
    splits, _ = generate(SynthConfig())
    for name, lines in splits.items():
        write_lines(tmp / f"{name}.txt", lines)
    cfg = load_run_config(ROOT / "configs" / "desk.json")
    cfg.train, cfg.dev, cfg.test = (str(tmp / f"{s}.txt") for s in ("train", "dev", "test"))
    cfg.validate()
    t0 = time.time()
    rep = Experiment(cfg).run(tmp / "out")
    return rep, time.time() - t0


def test_c07_desk_trends(report, desk_run):
    rep, elapsed = desk_run
    V = rep["vocab_size"]
    unigram_dev = rep["unigram_ppl"]["dev"]
    dev = rep["final_dev_ppl"]
    a_ok = all(v < V and v < unigram_dev for v in dev.values())
    means = {k: v["mean"] for k, v in rep["test_ppl"].items()}
    b_ok = means["mix-ws"] <= means["mix-w"]
    c_ok = means["mix-ws"] <= means["mix-ws-shuffled"]
    t_ok = elapsed < 20 * 60
    cells = ", ".join(f"{k}={v['mean']:.2f}±{v['std']:.2f}" for k, v in rep["test_ppl"].items())
    report("7", a_ok and b_ok and c_ok and t_ok,
           f"|V|={V} unigram-dev={unigram_dev:.1f} max-final-dev={max(dev.values()):.1f}; "
           f"(a)={a_ok} (b)={b_ok} (c)={c_ok}; {cells}; {elapsed / 60:.1f} min (limit 20)")
    assert a_ok, {k: v for k, v in dev.items() if not (v < V and v < unigram_dev)}
    assert b_ok
    assert c_ok
    assert t_ok


def test_c08_s2w_schedule(report, toy_data):
    d = toy_data
    cfg = config_for_variant("mtl-s2w", d["vocab"].size, embed_dim=8, hidden_dim=8, num_layers=1,
                             batch_size=4, bptt=6, learning_rate=1e-2)
    res = train(cfg, d["train"], d["dev"], d["vocab"].token_of, d["vocab"].eos_id, d["stem_ids"])
    seen = [r["aux_target"] for r in res.log]
    expected = ["stem"] * 5 + ["word"] * 10
    ok = cfg.epochs == 15 and cfg.s2w_switch_epoch == 5 and seen == expected
    first_word = seen.index("word") if "word" in seen else None
    report("8", ok, f"{len(seen)} epochs, aux target switches to word at epoch {first_word}")
    assert ok


def test_c09_determinism(report, toy_splits, tmp_path):
    splits, _ = toy_splits
    for name, lines in splits.items():
        write_lines(tmp_path / f"{name}.txt", lines)
    cfg_path = tmp_path / "run.json"
    cfg_path.write_text(json.dumps({
        "train": "train.txt", "dev": "dev.txt", "test": "test.txt", "seeds": [1, 2],
        "variants": ["base", "mtl-s2w", "mix-ws"], "control": True,
        "eval": {"slice_min_types": 2, "slice_min_tokens": 20},
        "model": {"embed_dim": 8, "hidden_dim": 8, "num_layers": 1, "epochs": 2, "batch_size": 4,
                  "bptt": 6, "learning_rate": 0.01, "s2w_switch_epoch": 1}}))
    for run in ("a", "b"):
        Experiment(load_run_config(cfg_path)).run(tmp_path / run)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files)
    ok = same and not cmp.left_only and not cmp.right_only and len(files) > 10
    report("9", ok, f"{len(files)} files (checkpoints, logs, reports) byte-identical across two runs")
    assert ok


def test_c10_slice_evaluation(report, toy_data):
    words = [f"w{i}" for i in range(40)]
    stem = {w: w for w in words}
    for w in words[1:10]:
        stem[w] = "w0"        # 10 types
    for w in words[11:20]:
        stem[w] = "w10"       # 10 types
    for w in words[21:29]:
        stem[w] = "w20"       # 9 types
    sm = StemMap(stem)
    counts = {w: 0 for w in words}
    counts["w0"], counts["w10"], counts["w20"] = 500, 499, 10_000
    chosen = select_diverse_stems(sm, counts, 10, 500)
    boundary_ok = chosen == {"w0"}

    d = toy_data
    cfg = config_for_variant("base", d["vocab"].size, embed_dim=8, hidden_dim=8, num_layers=1)
    sc = ModelScorer(LanguageModel(cfg), d["vocab"].eos_id, d["vocab"].unk_id)
    full = perplexity(sc, d["test"])
    universal = slice_perplexity(sc, d["test"], set(d["stem_ids"].tolist()), d["stem_ids"])
    ok = boundary_ok and universal == full
    report("10", ok, f"selected={sorted(chosen)} (10/500 in, 10/499 and 9/10000 out); "
                     f"universal slice {universal:.6f} vs full {full:.6f}")
    assert ok
