"""Unsupervised stem identification from affix-pair rules.

Suffix rules (s1, s2) are mined by walking a trie of the vocabulary: every
trie node is a shared stem-part ``u`` and each pair of distinct short
completions below it is one supporting word pair. Prefix rules use the same
walk on reversed words. Words are then linked by the rules, each candidate
stem is weighted by how many words it links to, and every word takes its
heaviest candidate.
"""
from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

import numpy as np

EPS = ""
AffixPair = Tuple[str, str]

DEFAULT_MAX_SUFFIX_LEN = 6
DEFAULT_MAX_PREFIX_LEN = 4


class StemMapError(ValueError):
    pass


def affix_key(a: str) -> Tuple[int, str]:
    return (len(a), a)


def affix_order(a1: str, a2: str) -> int:
    """-1, 0 or 1: shorter affix first, equal lengths by code points."""
    k1, k2 = affix_key(a1), affix_key(a2)
    return (k1 > k2) - (k1 < k2)


def default_threshold(n_words: int) -> int:
    return 100 if n_words >= 50_000 else max(2, n_words // 500)


@dataclass(frozen=True)
class RuleSet:
    kind: str
    rules: FrozenSet[AffixPair]
    support: Mapping[AffixPair, int]
    threshold: int

    def __contains__(self, pair):
        return pair in self.rules

    def __len__(self):
        return len(self.rules)

    def sorted_rules(self) -> List[AffixPair]:
        return sorted(self.rules, key=lambda p: (affix_key(p[0]), affix_key(p[1])))

    def affixes(self) -> Set[str]:
        """Distinct non-empty affixes occurring in any rule."""
        return {a for pair in self.rules for a in pair if a}

    def max_affix_len(self) -> int:
        return max((len(a) for pair in self.rules for a in pair), default=0)

    def dump_lines(self) -> List[str]:
        return [f"{self.kind}\t{a1}\t{a2}\t{self.support.get((a1, a2), 0)}"
                for a1, a2 in self.sorted_rules()]


class _Node:
    __slots__ = ("children", "terminal")

    def __init__(self):
        self.children: Dict[str, "_Node"] = {}
        self.terminal = False


def _build_trie(strings: Iterable[str]) -> _Node:
    root = _Node()
    for s in strings:
        node = root
        for ch in s:
            nxt = node.children.get(ch)
            if nxt is None:
                nxt = node.children[ch] = _Node()
            node = nxt
        node.terminal = True
    return root


def _pair_supports(strings: Iterable[str], max_len: int, reverse: bool) -> Counter:
    """Count word pairs sharing a stem-part, keyed by their (ordered) affix pair."""
    root = _build_trie(s[::-1] if reverse else s for s in strings)
    support: Counter = Counter()
    # Post-order walk; completions[node] lists the terminal paths of length <= max_len below it.
    completions: Dict[int, List[str]] = {}
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if not done:
            stack.append((node, True))
            stack.extend((child, False) for child in node.children.values())
            continue
        comp = [EPS] if node.terminal else []
        for ch, child in node.children.items():
            comp.extend(ch + c for c in completions.pop(id(child)) if len(c) < max_len)
        completions[id(node)] = comp
        if len(comp) < 2:
            continue
        affixes = [c[::-1] for c in comp] if reverse else comp
        affixes.sort(key=affix_key)
        for i in range(len(affixes)):
            a1 = affixes[i]
            for j in range(i + 1, len(affixes)):
                support[(a1, affixes[j])] += 1
    return support


def _mine(kind: str, words: Iterable[str], delta: int, max_len: int) -> RuleSet:
    if delta < 1:
        raise ValueError(f"threshold must be >= 1, got {delta}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    words = list(dict.fromkeys(words))
    support = _pair_supports(words, max_len, reverse=(kind == "prefix"))
    rules = {pair for pair, n in support.items() if n >= delta}
    rules.add((EPS, EPS))
    full_support = dict(support)
    full_support[(EPS, EPS)] = len(words)
    return RuleSet(kind, frozenset(rules), full_support, delta)


def mine_suffix_rules(words: Iterable[str], delta_s: int,
                      max_len: int = DEFAULT_MAX_SUFFIX_LEN) -> RuleSet:
    """Suffix pairs (s1 < s2) supported by at least ``delta_s`` word pairs u+s1, u+s2."""
    return _mine("suffix", words, delta_s, max_len)


def mine_prefix_rules(words: Iterable[str], delta_p: int,
                      max_len: int = DEFAULT_MAX_PREFIX_LEN) -> RuleSet:
    """Prefix pairs (p1 < p2) supported by at least ``delta_p`` word pairs p1+u, p2+u."""
    return _mine("prefix", words, delta_p, max_len)


def calibrate_suffix_threshold(words: Sequence[str], target_suffixes: int,
                               max_len: int = DEFAULT_MAX_SUFFIX_LEN) -> int:
    """Threshold whose suffix rules mention closest to ``target_suffixes`` affixes.

    Ties go to the larger threshold.
    """
    support = _pair_supports(list(dict.fromkeys(words)), max_len, reverse=False)
    if not support:
        return 1
    best, best_gap = 1, None
    for delta in sorted(set(support.values())):
        n = len({a for pair, c in support.items() if c >= delta for a in pair if a})
        gap = abs(n - target_suffixes)
        if best_gap is None or gap <= best_gap:
            best, best_gap = delta, gap
    return best


@dataclass
class StemRelation:
    pairs: Set[Tuple[str, str]]
    wt: Dict[str, int]


def _index(rules: RuleSet) -> Dict[str, List[str]]:
    idx: Dict[str, List[str]] = defaultdict(list)
    for a1, a2 in rules.sorted_rules():
        idx[a1].append(a2)
    return idx


def build_relation(words: Iterable[str], rp: RuleSet, rs: RuleSet) -> StemRelation:
    """All (v, w) with v = p1+u+s1 and w = p2+u+s2 for some rules and string u.

    Rule sets are assumed to come from the same vocabulary.
    """
    words = list(dict.fromkeys(words))
    pidx, sidx = _index(rp), _index(rs)
    srules = rs.rules
    vocab = set(words)
    max_p, max_s = rp.max_affix_len(), rs.max_affix_len()
    # Words grouped under every prefix, so each (p2, u) is checked against
    # whichever is smaller: the candidate suffixes or the matching words.
    by_prefix: Dict[str, List[str]] = defaultdict(list)
    for w in words:
        for k in range(len(w) + 1):
            by_prefix[w[:k]].append(w)
    pairs: Set[Tuple[str, str]] = set()
    for v in words:
        n = len(v)
        for i in range(min(max_p, n) + 1):
            p2s = pidx.get(v[:i])
            if p2s is None:
                continue
            for j in range(min(max_s, n - i) + 1):
                s1 = v[n - j:]
                s2s = sidx.get(s1)
                if s2s is None:
                    continue
                u = v[i:n - j]
                for p2 in p2s:
                    head = p2 + u
                    cands = by_prefix.get(head)
                    if cands is None:
                        continue
                    if len(cands) <= len(s2s):
                        k = len(head)
                        for w in cands:
                            if len(w) - k <= max_s and (s1, w[k:]) in srules:
                                pairs.add((v, w))
                    else:
                        for s2 in s2s:
                            if head + s2 in vocab:
                                pairs.add((v, head + s2))
    wt = Counter(v for v, _ in pairs)
    return StemRelation(pairs, {v: wt[v] for v in words})


class StemMap:
    """Total map word -> stem over a vocabulary, with its inverse classes."""

    def __init__(self, stem: Mapping[str, str]):
        self.stem: Dict[str, str] = dict(stem)
        missing = sorted({s for s in self.stem.values() if s not in self.stem})
        if missing:
            raise StemMapError(f"stems not in the vocabulary: {missing[:5]}")

    def __getitem__(self, word: str) -> str:
        return self.stem[word]

    def __len__(self):
        return len(self.stem)

    def __eq__(self, other):
        return isinstance(other, StemMap) and self.stem == other.stem

    def __repr__(self):
        return f"StemMap({len(self.stem)} words, {len(set(self.stem.values()))} stems)"

    @property
    def classes(self) -> Dict[str, Set[str]]:
        return stem_classes(self)

    def words(self) -> List[str]:
        return list(self.stem)

    def to_ids(self, vocab) -> np.ndarray:
        """word id -> stem id over ``vocab``; tokens without an entry map to themselves."""
        out = np.arange(vocab.size, dtype=np.int64)
        for w, s in self.stem.items():
            if w not in vocab.id_of or s not in vocab.id_of:
                raise StemMapError(f"stem map entry {w!r} -> {s!r} is outside the vocabulary")
            out[vocab.id_of[w]] = vocab.id_of[s]
        return out

    @classmethod
    def identity(cls, words: Iterable[str]) -> "StemMap":
        return cls({w: w for w in words})


def assign_stems(relation: StemRelation) -> StemMap:
    """stem(w) = argmax wt[v] over candidates v with (v, w) in the relation.

    Ties prefer the shorter candidate, then the code-point-smaller one.
    """
    best: Dict[str, Tuple[int, int, str]] = {}
    for v, w in relation.pairs:
        key = (-relation.wt[v], len(v), v)
        cur = best.get(w)
        if cur is None or key < cur:
            best[w] = key
    return StemMap({w: best[w][2] for w in relation.wt})


def stem_classes(stem_map: StemMap) -> Dict[str, Set[str]]:
    classes: Dict[str, Set[str]] = defaultdict(set)
    for w, s in stem_map.stem.items():
        classes[s].add(w)
    return dict(classes)


@dataclass
class StemmerResult:
    stem_map: StemMap
    suffix_rules: RuleSet
    prefix_rules: RuleSet
    relation: StemRelation = field(repr=False)


def identify_stems(words: Iterable[str], delta_s: Optional[int] = None,
                   delta_p: Optional[int] = None,
                   max_suffix_len: int = DEFAULT_MAX_SUFFIX_LEN,
                   max_prefix_len: int = DEFAULT_MAX_PREFIX_LEN) -> StemmerResult:
    """Run the full pipeline; unset thresholds default from the vocabulary size."""
    words = list(dict.fromkeys(words))
    if delta_s is None:
        delta_s = default_threshold(len(words))
    if delta_p is None:
        delta_p = default_threshold(len(words))
    rs = mine_suffix_rules(words, delta_s, max_suffix_len)
    rp = mine_prefix_rules(words, delta_p, max_prefix_len)
    rel = build_relation(words, rp, rs)
    return StemmerResult(assign_stems(rel), rs, rp, rel)


def shuffle_stem_map(stem_map: StemMap, seed: int) -> StemMap:
    """Randomly re-partition words over the same stems, keeping every class size."""
    classes = stem_classes(stem_map)
    stems = sorted(classes, key=affix_key)
    words = sorted(stem_map.stem, key=affix_key)
    perm = np.random.default_rng(seed).permutation(len(words))
    out: Dict[str, str] = {}
    pos = 0
    for s in stems:
        for k in perm[pos:pos + len(classes[s])]:
            out[words[k]] = s
        pos += len(classes[s])
    return StemMap(out)


def save_stem_map(stem_map: StemMap, path: Union[str, Path]) -> None:
    """Write ``word<TAB>stem`` lines in code-point order of the word."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for w in sorted(stem_map.stem):
            fh.write(f"{w}\t{stem_map.stem[w]}\n")


def load_stem_map(path: Union[str, Path], vocab=None, fill_identity: bool = False) -> StemMap:
    """Read a stem-map TSV, checking entries against ``vocab`` when given.

    ``vocab`` may be a :class:`~stemlm.corpus.Vocabulary` or any word
    collection. Words of ``vocab`` absent from the file are an error unless
    ``fill_identity`` is set, in which case they become their own stems.
    """
    if vocab is not None and hasattr(vocab, "content_words"):
        known = set(vocab.content_words())
    else:
        known = set(vocab) if vocab is not None else None
    stem: Dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1]:
                raise StemMapError(f"{path}:{lineno}: expected 'word<TAB>stem', got {line!r}")
            w, s = parts
            if known is not None:
                if w not in known:
                    raise StemMapError(f"{path}:{lineno}: word {w!r} is not in the vocabulary")
                if s not in known:
                    raise StemMapError(f"{path}:{lineno}: stem {s!r} is not in the vocabulary")
            if w in stem and stem[w] != s:
                raise StemMapError(f"{path}:{lineno}: conflicting stems for {w!r}")
            stem[w] = s
    if known is not None:
        missing = sorted(known - set(stem))
        if missing and not fill_identity:
            raise StemMapError(f"{path}: {len(missing)} vocabulary words have no stem, e.g. {missing[:3]}")
        for w in missing:
            stem[w] = w
    return StemMap(stem)


def save_rules(path: Union[str, Path], *rule_sets: RuleSet) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rs in rule_sets:
            for line in rs.dump_lines():
                fh.write(line + "\n")
