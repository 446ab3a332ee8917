"""Tokenization, vocabularies, id encoding, BPTT batching and corpus statistics."""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, Tuple, Union

import numpy as np

UNK = "<unk>"
EOS = "<eos>"


class CorpusError(ValueError):
    pass


class CorpusDecodeError(CorpusError):
    def __init__(self, message: str, byte_offset: int):
        super().__init__(message)
        self.byte_offset = byte_offset


def tokenize_line(line: Union[str, bytes]) -> List[str]:
    """Split on whitespace; bytes are decoded as strict UTF-8."""
    if isinstance(line, (bytes, bytearray)):
        try:
            line = bytes(line).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CorpusDecodeError(f"invalid UTF-8 at byte offset {e.start}", e.start) from None
    return line.split()


def read_lines(path: Union[str, Path]) -> List[List[str]]:
    """Read a one-sentence-per-line corpus file into token lists."""
    out = []
    offset = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                out.append(tokenize_line(raw))
            except CorpusDecodeError as e:
                pos = offset + e.byte_offset
                raise CorpusDecodeError(
                    f"{path}: line {lineno}: invalid UTF-8 at byte offset {pos}", pos) from None
            offset += len(raw)
    return out


def write_lines(path: Union[str, Path], lines: Iterable[Sequence[str]]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for toks in lines:
            fh.write(" ".join(toks) + "\n")


def _flatten(corpus) -> Iterator[str]:
    for item in corpus:
        if isinstance(item, str):
            yield item
        else:
            yield from item


class Vocabulary:
    """Bidirectional token/id map. Content words first, then UNK and EOS."""

    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if UNK not in tokens or EOS not in tokens:
            raise CorpusError("vocabulary must contain the UNK and EOS sentinels")
        self.token_of: List[str] = tokens
        self.id_of: Dict[str, int] = {t: i for i, t in enumerate(tokens)}
        if len(self.id_of) != len(tokens):
            raise CorpusError("duplicate tokens in vocabulary")
        self.unk_id = self.id_of[UNK]
        self.eos_id = self.id_of[EOS]

    @property
    def size(self) -> int:
        return len(self.token_of)

    def __len__(self):
        return len(self.token_of)

    def __contains__(self, token):
        return token in self.id_of

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.token_of == other.token_of

    def content_words(self) -> List[str]:
        return [t for t in self.token_of if t not in (UNK, EOS)]

    def lookup(self, token: str) -> int:
        return self.id_of.get(token, self.unk_id)

    def decode(self, ids: Iterable[int]) -> List[str]:
        return [self.token_of[int(i)] for i in ids]

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for t in self.token_of:
                fh.write(t + "\n")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        with open(path, encoding="utf-8") as fh:
            return cls([line.rstrip("\n") for line in fh])


def build_vocab(train_corpus) -> Vocabulary:
    """Every distinct training token, ordered by count desc then code points.

    ``train_corpus`` is a flat token sequence or a sequence of token lists.
    """
    counts = Counter(t for t in _flatten(train_corpus) if t not in (UNK, EOS))
    if not counts:
        raise CorpusError("cannot build a vocabulary from an empty corpus")
    words = sorted(counts, key=lambda w: (-counts[w], w))
    return Vocabulary(words + [UNK, EOS])


@dataclass(frozen=True)
class EncodedCorpus:
    ids: np.ndarray
    vocab_size: int

    @property
    def token_count(self) -> int:
        return int(self.ids.shape[0])


def encode(corpus: Sequence[Sequence[str]], vocab: Vocabulary) -> EncodedCorpus:
    """Map each line to ids with OoV tokens as UNK and append EOS per line."""
    out: List[int] = []
    for line in corpus:
        if isinstance(line, str):
            line = tokenize_line(line)
        out.extend(vocab.lookup(t) for t in line)
        out.append(vocab.eos_id)
    return EncodedCorpus(np.asarray(out, dtype=np.int64), vocab.size)


@dataclass(frozen=True)
class BatchStream:
    batch_size: int
    bptt_len: int
    steps: List[Tuple[np.ndarray, np.ndarray]]

    def __iter__(self):
        return iter(self.steps)

    def __len__(self):
        return len(self.steps)


def batchify(enc: EncodedCorpus, batch_size: int, bptt_len: int) -> BatchStream:
    """Cut the id stream into ``batch_size`` contiguous substreams.

    Each step is an (inputs, targets) pair of shape (batch_size, <=bptt_len);
    targets are inputs shifted by one inside each substream. Tokens past the
    last full column are dropped.
    """
    if batch_size < 1 or bptt_len < 1:
        raise CorpusError("batch_size and bptt_len must be >= 1")
    n = enc.token_count // batch_size
    if n < 2:
        raise CorpusError(
            f"corpus of {enc.token_count} tokens is too small for batch_size {batch_size}")
    streams = enc.ids[: n * batch_size].reshape(batch_size, n)
    steps = []
    for i in range(0, n - 1, bptt_len):
        seq = min(bptt_len, n - 1 - i)
        steps.append((streams[:, i:i + seq], streams[:, i + 1:i + 1 + seq]))
    return BatchStream(batch_size, bptt_len, steps)


@dataclass(frozen=True)
class CorpusStats:
    token_count: int
    type_count: int
    type_token_ratio: float
    oov_rate: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def corpus_stats(train, eval_split, vocab: Vocabulary) -> CorpusStats:
    """Train token/type counts and eval OoV rate; sentinels are never counted."""
    train_tokens = [t for t in _flatten(train) if t not in (UNK, EOS)]
    types = set(train_tokens)
    eval_tokens = [t for t in _flatten(eval_split) if t != EOS]
    known = set(vocab.content_words())
    oov = sum(1 for t in eval_tokens if t not in known)
    n = len(train_tokens)
    return CorpusStats(
        token_count=n,
        type_count=len(types),
        type_token_ratio=len(types) / n if n else 0.0,
        oov_rate=oov / len(eval_tokens) if eval_tokens else 0.0,
    )


def token_counts(enc: EncodedCorpus) -> np.ndarray:
    return np.bincount(enc.ids, minlength=enc.vocab_size)
