import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stemlm.corpus import build_vocab, encode
from stemlm.synth import SynthConfig, generate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

TINY = dict(embed_dim=8, hidden_dim=8, num_layers=1, dropout=0.0, K=2, batch_size=4, bptt=6,
            learning_rate=1e-2, epochs=2, eval_batch_size=3, s2w_switch_epoch=1)


@pytest.fixture(scope="session")
def toy_splits():
    cfg = SynthConfig(n_stems=6, n_suffixes=3, train_tokens=500, dev_tokens=120, test_tokens=120, seed=3)
    splits, grammar = generate(cfg)
    return splits, grammar


@pytest.fixture(scope="session")
def toy_data(toy_splits):
    splits, grammar = toy_splits
    vocab = build_vocab(splits["train"])
    gold = grammar.gold_stems()
    stem_ids = np.arange(vocab.size)
    for w, s in gold.items():
        if w in vocab.id_of and s in vocab.id_of:
            stem_ids[vocab.id_of[w]] = vocab.id_of[s]
    return dict(vocab=vocab, train=encode(splits["train"], vocab), dev=encode(splits["dev"], vocab),
                test=encode(splits["test"], vocab), stem_ids=stem_ids)


@pytest.fixture
def report(capsys):
    """Print one pass/fail line for an acceptance criterion, bypassing capture."""
    def _report(criterion: str, ok: bool, detail: str = ""):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")
        return ok
    return _report
