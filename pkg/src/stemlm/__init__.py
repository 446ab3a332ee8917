"""Stem-driven language modelling: unsupervised stemming, LSTM LMs, Mix-WS composition."""
from .corpus import EOS, UNK, Vocabulary, build_vocab, corpus_stats, encode, read_lines
from .stemmer import StemMap, identify_stems, load_stem_map, save_stem_map, shuffle_stem_map

__version__ = "0.1.0"

__all__ = ["EOS", "UNK", "Vocabulary", "build_vocab", "corpus_stats", "encode", "read_lines",
           "StemMap", "identify_stems", "load_stem_map", "save_stem_map", "shuffle_stem_map"]
