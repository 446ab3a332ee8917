import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stemlm.models import (VARIANTS, CheckpointError, CompositionError, ConfigError, LanguageModel,
                           ModelConfig, SoftmaxHead, composed_token_log_probs, config_for_variant,
                           load_checkpoint, loss_stem, loss_word, mixws_compose, mixws_compose_log,
                           mtl_loss, save_checkpoint, token_log_probs, train, within_class_share)
from stemlm.numerics import Tensor, default_dtype, ops

from conftest import TINY


def _mix(V=7, K=2, H=5, seed=0):
    return LanguageModel(ModelConfig(vocab_size=V, embed_dim=4, hidden_dim=H, num_layers=1, K=K,
                                     arch="mix", seed=seed, dtype="float64"))


def test_zero_parameters_give_uniform():
    for arch in ("base", "mix"):
        m = LanguageModel(ModelConfig(vocab_size=9, embed_dim=3, hidden_dim=4, num_layers=1, arch=arch,
                                      dtype="float64"))
        for p in m.parameters():
            p.data[...] = 0
        assert np.allclose(m.next_word_dist(np.random.default_rng(0).normal(size=(3, 4))), 1 / 9)


def test_k1_mixture_equals_single_softmax():
    m = _mix(K=1)
    h = np.random.default_rng(1).normal(size=(4, 5))
    head = m.head
    ctx = np.tanh(h @ head.w_comp.data + head.b_comp.data)
    single = SoftmaxHead(head.w_out, head.b_out)
    with default_dtype(np.float64):
        ref = np.exp(single.log_probs(Tensor(ctx)).data)
    assert np.array_equal(m.next_word_dist(h), ref) or np.allclose(m.next_word_dist(h), ref, rtol=0, atol=1e-15)


def test_uniform_prior_averages_components():
    m = _mix(K=2)
    m.params["head.w_prior"].data[...] = 0
    m.params["head.b_prior"].data[...] = 0
    h = np.random.default_rng(2).normal(size=(3, 5))
    with default_dtype(np.float64):
        comps = np.exp(m.head.component_log_probs(Tensor(h)).data)
    assert np.allclose(m.next_word_dist(h), comps.mean(axis=1), atol=1e-14)


@given(st.integers(0, 10_000), st.integers(1, 4))
@settings(max_examples=40)
def test_causality(seed, K):
    rng = np.random.default_rng(seed)
    arch = "mix" if K > 1 else "base"
    m = LanguageModel(ModelConfig(vocab_size=11, embed_dim=4, hidden_dim=4, num_layers=2, K=K, arch=arch,
                                  seed=seed, dtype="float64"))
    ids = rng.integers(0, 11, size=(2, 8))
    t = int(rng.integers(1, 8))
    changed = ids.copy()
    changed[:, t] = (changed[:, t] + 1) % 11
    a, _ = m.window_log_probs(ids)
    b, _ = m.window_log_probs(changed)
    # row t-1 predicts token t and is computed from tokens < t only
    assert np.array_equal(a[:t], b[:t])
    assert not np.array_equal(a[t], b[t])


def test_state_carries_across_windows():
    m = LanguageModel(ModelConfig(vocab_size=6, embed_dim=3, hidden_dim=4, num_layers=2, dtype="float64"))
    ids = np.random.default_rng(0).integers(0, 6, size=(2, 10))
    full, _ = m.window_log_probs(ids)
    first, state = m.window_log_probs(ids[:, :4])
    second, _ = m.window_log_probs(ids[:, 4:], state)
    assert np.allclose(np.concatenate([first, second]), full, atol=1e-14)


def test_loss_examples():
    with default_dtype(np.float64):
        uniform = ops.log_softmax(Tensor(np.zeros((4, 100))))
        assert math.isclose(loss_word(uniform, np.arange(4)).item(), math.log(100))
        lp = Tensor(np.log([[0.5, 0.5], [0.75, 0.25]]))
        assert math.isclose(loss_word(lp, np.array([0, 1])).item(), (math.log(2) + math.log(4)) / 2)
        certain = Tensor(np.log([[1.0, 1e-300], [1.0, 1e-300]]))
        assert loss_word(certain, np.array([0, 0])).item() == 0.0
        # every word shares stem 0 and the model is sure of it
        assert loss_stem(certain, np.array([0, 1]), np.array([0, 0])).item() == 0.0
        assert math.isclose(loss_stem(uniform, np.arange(4), np.zeros(100, dtype=int)).item(), math.log(100))
        lw, ls = Tensor(2.0), Tensor(1.0)
        assert mtl_loss(lw, ls, 1.0).item() == 2.0
        assert mtl_loss(lw, ls, 0.0).item() == 1.0
        assert mtl_loss(2.0, 1.0, 0.25) == 1.25
    with pytest.raises(ValueError):
        mtl_loss(1.0, 1.0, 1.5)


def test_compose_hand_example():
    p, q = np.array([0.5, 0.3, 0.2]), np.array([0.6, 0.1, 0.3])
    stems = np.array([0, 0, 2])
    assert np.allclose(within_class_share(p, stems), [0.625, 0.375, 1.0], atol=1e-15)
    assert np.allclose(mixws_compose(p, q, stems), [0.4375, 0.2625, 0.3], atol=1e-12)


def test_compose_batched_and_errors():
    rng = np.random.default_rng(0)
    lp = np.log(rng.dirichlet(np.ones(5), size=(3, 2)))
    lq = np.log(rng.dirichlet(np.ones(5), size=(3, 2)))
    stems = np.array([0, 0, 2, 2, 4])
    out = mixws_compose_log(lp, lq, stems)
    assert out.shape == (3, 2, 5)
    assert np.allclose(np.exp(out).sum(-1), 1)
    assert np.allclose(out[1, 1], mixws_compose_log(lp[1, 1], lq[1, 1], stems))
    with pytest.raises(CompositionError):
        mixws_compose(np.array([0.0, 0.0, 1.0]), np.array([0.5, 0.2, 0.3]), np.array([0, 0, 2]))
    with pytest.raises(ValueError):
        mixws_compose_log(lp, lq[..., :4], stems)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, K=0)
    with pytest.raises(ConfigError):
        ModelConfig(vocab_size=10, mtl_lambda=1.2)
    with pytest.raises(ConfigError):
        config_for_variant("mtl-s2w", 10, epochs=3, s2w_switch_epoch=5)
    with pytest.raises(ConfigError):
        config_for_variant("nope", 10)
    cfg = config_for_variant("mtl-s2w", 10)
    assert [cfg.aux_target_at(e) for e in (0, 4, 5, 14)] == ["stem", "stem", "word", "word"]
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg
    assert (cfg.epochs, cfg.lr_decay, cfg.learning_rate, cfg.clip_norm) == (15, 0.8, 5e-5, 5.0)


def test_aux_head_drawn_last():
    base = LanguageModel(config_for_variant("base", 12, embed_dim=4, hidden_dim=4, num_layers=1))
    mtl = LanguageModel(config_for_variant("mtl-w", 12, embed_dim=4, hidden_dim=4, num_layers=1))
    for k, v in base.state_dict().items():
        assert np.array_equal(v, mtl.params[k].data)


@pytest.mark.parametrize("variant", VARIANTS)
def test_train_every_variant(variant, toy_data):
    d = toy_data
    cfg = config_for_variant(variant, d["vocab"].size, **TINY)
    res = train(cfg, d["train"], d["dev"], d["vocab"].token_of, d["vocab"].eos_id, d["stem_ids"])
    assert len(res.log) == 2
    assert all(math.isfinite(r["dev_ppl"]) and r["dev_ppl"] < d["vocab"].size for r in res.log)
    assert res.log[1]["lr"] == pytest.approx(cfg.learning_rate * 0.8)
    assert len(res.log_lines().splitlines()) == 2


def test_train_needs_stems(toy_data):
    d = toy_data
    for variant in ("mtl-s", "mtl-s2w", "mix-stem"):
        with pytest.raises(ConfigError):
            train(config_for_variant(variant, d["vocab"].size, **TINY), d["train"], d["dev"],
                  d["vocab"].token_of, d["vocab"].eos_id)


def test_checkpoint_round_trip(tmp_path, toy_data):
    d = toy_data
    cfg = config_for_variant("mix-stem", d["vocab"].size, **TINY)
    res = train(cfg, d["train"], d["dev"], d["vocab"].token_of, d["vocab"].eos_id, d["stem_ids"])
    path = tmp_path / "m.ckpt"
    save_checkpoint(res.checkpoint, path)
    ck = load_checkpoint(path)
    assert ck.config == cfg and ck.vocab == d["vocab"].token_of and ck.epoch == 2
    assert np.array_equal(ck.target_map, d["stem_ids"])
    probe = np.random.default_rng(0).normal(size=(3, cfg.hidden_dim))
    assert np.array_equal(ck.build_model().next_word_dist(probe), res.model.next_word_dist(probe))
    opt = ck.build_optimizer()
    assert opt.t == res.checkpoint.optimizer_state["t"]
    assert set(opt.m) == set(res.model.params)
    save_checkpoint(ck, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()


def test_checkpoint_corruption(tmp_path, toy_data):
    d = toy_data
    cfg = config_for_variant("base", d["vocab"].size, **{**TINY, "epochs": 1})
    res = train(cfg, d["train"], d["dev"], d["vocab"].token_of, d["vocab"].eos_id)
    path = tmp_path / "m.ckpt"
    save_checkpoint(res.checkpoint, path)
    raw = bytearray(path.read_bytes())

    flipped = bytearray(raw)
    flipped[len(raw) // 2] ^= 0xFF
    (tmp_path / "flip.ckpt").write_bytes(bytes(flipped))
    with pytest.raises(CheckpointError, match="checksum"):
        load_checkpoint(tmp_path / "flip.ckpt")

    (tmp_path / "short.ckpt").write_bytes(bytes(raw[:len(raw) - 100]))
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "short.ckpt")

    newer = bytearray(raw)
    newer[8:12] = struct.pack("<I", 7)
    (tmp_path / "v7.ckpt").write_bytes(bytes(newer))
    with pytest.raises(CheckpointError, match="version 7.*expected 1"):
        load_checkpoint(tmp_path / "v7.ckpt")

    (tmp_path / "junk.ckpt").write_bytes(b"x" * 100)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "junk.ckpt")


def test_training_is_deterministic(toy_data, tmp_path):
    d = toy_data
    cfg = config_for_variant("mtl-s", d["vocab"].size, **{**TINY, "dropout": 0.3})
    paths = []
    for i in range(2):
        res = train(cfg, d["train"], d["dev"], d["vocab"].token_of, d["vocab"].eos_id, d["stem_ids"])
        paths.append(tmp_path / f"{i}.ckpt")
        save_checkpoint(res.checkpoint, paths[-1])
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_scoring_covers_every_token(toy_data):
    d = toy_data
    m = LanguageModel(config_for_variant("base", d["vocab"].size, embed_dim=4, hidden_dim=4, num_layers=1,
                                         dtype="float64"))
    ids = d["test"].ids
    ref = token_log_probs(m, ids, d["vocab"].eos_id, batch_size=1, bptt=len(ids))
    # chunked streams re-prime each chunk with its previous token, so only state differs
    chunked = token_log_probs(m, ids, d["vocab"].eos_id, batch_size=3, bptt=5)
    assert ref.shape == chunked.shape == ids.shape
    assert np.all(np.isfinite(chunked)) and np.all(chunked <= 0)
    assert chunked[0] == ref[0]


def test_composed_scoring_identity_map_is_q(toy_data):
    d = toy_data
    V = d["vocab"].size
    kw = dict(embed_dim=4, hidden_dim=4, num_layers=1, dtype="float64")
    p = LanguageModel(config_for_variant("mix-w", V, **kw, seed=1))
    q = LanguageModel(config_for_variant("mix-w", V, **kw, seed=2))
    ids, eos = d["test"].ids, d["vocab"].eos_id
    composed = composed_token_log_probs(p, q, np.arange(V), ids, eos)
    assert np.allclose(composed, token_log_probs(q, ids, eos), atol=1e-12)
    same = composed_token_log_probs(p, p, d["stem_ids"], ids, eos)
    assert np.allclose(same, token_log_probs(p, ids, eos), atol=1e-12)
