"""Synthetic stem x suffix corpora with stem-level and suffix-level regularities.

Words are ``stem + suffix``. Stems follow a first-order chain: with
probability ``follow_prob`` the next stem is one of a few fixed successors
of the previous stem, otherwise a Zipf draw. Suffixes follow an analogous
chain of their own (an agreement pattern), so the next stem is predictable
from the previous stem regardless of the surface form.

Stems are four CV syllables with a unique first syllable and a unique final
two syllables, so no affix rule within the default length bounds can link
words of different stems.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Dict, List, Tuple

import numpy as np

CONSONANTS = "ptkbdgmnlrsvhjfz"
VOWELS = "aeiou"


@dataclass(frozen=True)
class SynthConfig:
    n_stems: int = 50
    n_suffixes: int = 8
    zipf_exponent: float = 1.1
    train_tokens: int = 30_000
    dev_tokens: int = 3_000
    test_tokens: int = 3_000
    follow_prob: float = 0.7
    n_successors: int = 3
    min_sentence_len: int = 4
    max_sentence_len: int = 14
    seed: int = 0

    def to_dict(self):
        return asdict(self)


def _zipf_probs(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def make_stems(n: int, rng: np.random.Generator) -> List[str]:
    syllables = [c + v for c in CONSONANTS for v in VOWELS]
    if n > len(syllables):
        raise ValueError(f"at most {len(syllables)} stems are supported")
    stems, firsts, tails = [], set(), set()
    while len(stems) < n:
        sy = [syllables[i] for i in rng.integers(len(syllables), size=4)]
        if sy[0] in firsts or (sy[2], sy[3]) in tails:
            continue
        firsts.add(sy[0])
        tails.add((sy[2], sy[3]))
        stems.append("".join(sy))
    return stems


def make_suffixes(n: int, rng: np.random.Generator) -> List[str]:
    out = [""]
    seen = {""}
    patterns = ["V", "CV", "VC", "CVC", "VCV"]
    while len(out) < n:
        pat = patterns[rng.integers(len(patterns))]
        s = "".join(CONSONANTS[rng.integers(len(CONSONANTS))] if ch == "C"
                    else VOWELS[rng.integers(len(VOWELS))] for ch in pat)
        if s not in seen:
            seen.add(s)
            out.append(s)
    return out


class StemSuffixGrammar:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        rng = np.random.default_rng([cfg.seed, 0])
        self.stems = make_stems(cfg.n_stems, rng)
        self.suffixes = make_suffixes(cfg.n_suffixes, rng)
        self.stem_prior = _zipf_probs(cfg.n_stems, cfg.zipf_exponent)
        self.suffix_prior = _zipf_probs(cfg.n_suffixes, cfg.zipf_exponent)
        k = min(cfg.n_successors, cfg.n_stems)
        self.stem_next = [rng.choice(cfg.n_stems, size=k, replace=False) for _ in range(cfg.n_stems)]
        ks = min(2, cfg.n_suffixes)
        self.suffix_next = [rng.choice(cfg.n_suffixes, size=ks, replace=False)
                            for _ in range(cfg.n_suffixes)]
        self.succ_probs = _zipf_probs(k, cfg.zipf_exponent)
        self.suffix_succ_probs = _zipf_probs(ks, cfg.zipf_exponent)

    def gold_stems(self) -> Dict[str, str]:
        return {st + sf: st for st in self.stems for sf in self.suffixes}

    def _sentence(self, rng) -> List[str]:
        c = self.cfg
        n = int(rng.integers(c.min_sentence_len, c.max_sentence_len + 1))
        st = rng.choice(c.n_stems, p=self.stem_prior)
        sf = rng.choice(c.n_suffixes, p=self.suffix_prior)
        words = [self.stems[st] + self.suffixes[sf]]
        for _ in range(n - 1):
            if rng.random() < c.follow_prob:
                st = self.stem_next[st][rng.choice(len(self.succ_probs), p=self.succ_probs)]
            else:
                st = rng.choice(c.n_stems, p=self.stem_prior)
            if rng.random() < c.follow_prob:
                sf = self.suffix_next[sf][rng.choice(len(self.suffix_succ_probs), p=self.suffix_succ_probs)]
            else:
                sf = rng.choice(c.n_suffixes, p=self.suffix_prior)
            words.append(self.stems[st] + self.suffixes[sf])
        return words

    def sample(self, n_tokens: int, rng) -> List[List[str]]:
        lines, total = [], 0
        while total < n_tokens:
            s = self._sentence(rng)
            lines.append(s)
            total += len(s)
        return lines


def generate(cfg: SynthConfig = SynthConfig()) -> Tuple[Dict[str, List[List[str]]], StemSuffixGrammar]:
    """Sample train/dev/test splits; returns ({split: lines}, grammar)."""
    grammar = StemSuffixGrammar(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    splits = {
        "train": grammar.sample(cfg.train_tokens, rng),
        "dev": grammar.sample(cfg.dev_tokens, rng),
        "test": grammar.sample(cfg.test_tokens, rng),
    }
    return splits, grammar
