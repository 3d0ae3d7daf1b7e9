"""Token-level input features: vocabularies, embeddings, shapes and char-CNN."""

from __future__ import annotations

import logging
import os
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import tensor as tc
from .data import LabeledSequence
from .tensor import Node

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1
FIELDS = ("word", "pos", "shape", "char")


def token_shape(token: str) -> str:
    """Character classes (X upper, x lower, d digit, other kept) with runs collapsed."""
    if not token:
        raise ValueError("token_shape of an empty token")
    out = []
    for ch in token:
        if ch.isupper():
            c = "X"
        elif ch.islower():
            c = "x"
        elif ch.isdigit():
            c = "d"
        else:
            c = ch
        if not out or out[-1] != c:
            out.append(c)
    return "".join(out)


class Vocabulary:
    def __init__(self, entries: Iterable[str]):
        entries = list(entries)
        if entries[:2] != [PAD, UNK]:
            entries = [PAD, UNK] + [e for e in entries if e not in (PAD, UNK)]
        self.entries = entries
        self.index = {e: i for i, e in enumerate(entries)}
        if len(self.index) != len(entries):
            raise ValueError("duplicate vocabulary entries")

    def __len__(self):
        return len(self.entries)

    def __contains__(self, entry):
        return entry in self.index

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.entries == other.entries

    def lookup(self, entry: str) -> int:
        return self.index.get(entry, UNK_ID)

    def lookup_all(self, entries: Iterable[str]) -> list[int]:
        get = self.index.get
        return [get(e, UNK_ID) for e in entries]

    def __repr__(self):
        return f"Vocabulary({len(self)} entries)"


def field_values(seq: LabeledSequence, field_: str) -> list[str]:
    if field_ == "word":
        return list(seq.tokens)
    if field_ == "pos":
        return list(seq.pos)
    if field_ == "shape":
        return [token_shape(t) for t in seq.tokens]
    if field_ == "char":
        return [c for t in seq.tokens for c in t]
    raise ValueError(f"unknown field {field_!r}; expected one of {FIELDS}")


def build_vocab(corpus: Iterable[LabeledSequence], field_: str = "word", min_count: int = 1) -> Vocabulary:
    """Entries with count >= min_count ordered by (-count, entry), after PAD and UNK."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter()
    n = 0
    for seq in corpus:
        n += 1
        counts.update(field_values(seq, field_))
    if n == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    kept = sorted((e for e, c in counts.items() if c >= min_count and e not in (PAD, UNK)),
                  key=lambda e: (-counts[e], e))
    return Vocabulary([PAD, UNK] + kept)


@dataclass
class Coverage:
    found: int
    total: int
    missing: list[str] = field(default_factory=list)

    @property
    def ratio(self) -> float:
        return self.found / self.total if self.total else 0.0


@dataclass
class EmbeddingTable:
    vocab: Vocabulary
    matrix: np.ndarray
    trainable: bool = True
    coverage: Coverage | None = None

    def __post_init__(self):
        if self.matrix.shape[0] != len(self.vocab):
            raise ValueError(f"{self.matrix.shape[0]} rows for a vocabulary of {len(self.vocab)}")
        self.matrix[PAD_ID] = 0.0

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @classmethod
    def random(cls, vocab: Vocabulary, dim: int, rng: np.random.Generator, trainable=True):
        return cls(vocab, rng.normal(0.0, 0.1, size=(len(vocab), dim)), trainable)


def load_pretrained(path: str | os.PathLike, vocab: Vocabulary, dim: int,
                    rng: np.random.Generator, trainable: bool = True) -> EmbeddingTable:
    """Whitespace text vectors (``word v1 .. v_dim`` per line).

    Vocabulary words found in the file are copied; the rest are drawn from
    N(0, 0.1) and listed in ``coverage.missing``.  UNK is the mean of all
    vectors in the file.
    """
    matrix = rng.normal(0.0, 0.1, size=(len(vocab), dim))
    seen = np.zeros(len(vocab), dtype=bool)
    total = np.zeros(dim)
    n_loaded = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split(" ")
            if len(parts) == 1 and not parts[0].strip():
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}: line {lineno}: expected {dim} values, got {len(parts) - 1}")
            try:
                vec = np.array([float(v) for v in parts[1:]])
            except ValueError:
                raise ValueError(f"{path}: line {lineno}: non-numeric vector value") from None
            total += vec
            n_loaded += 1
            i = vocab.index.get(parts[0])
            if i is not None and i >= 2:
                matrix[i] = vec
                seen[i] = True
    if n_loaded:
        matrix[UNK_ID] = total / n_loaded
    missing = [e for i, e in enumerate(vocab.entries) if i >= 2 and not seen[i]]
    cov = Coverage(int(seen.sum()), len(vocab) - 2, missing)
    log.info("pretrained coverage %d/%d (%.1f%%)", cov.found, cov.total, 100 * cov.ratio)
    return EmbeddingTable(vocab, matrix, trainable, cov)


def save_embeddings(path: str | os.PathLike, table: EmbeddingTable) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, word in enumerate(table.vocab.entries):
            if i < 2:
                continue
            fh.write(word + " " + " ".join(repr(float(v)) for v in table.matrix[i]) + "\n")


# -------------------------------------------------------------- char CNN

@dataclass
class CharCnnConfig:
    vocab: Vocabulary
    char_dim: int = 25
    width: int = 3
    filters: int = 30

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("filter width must be >= 1")

    @property
    def out_dim(self) -> int:
        return self.filters


def init_char_cnn(config: CharCnnConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    emb = rng.normal(0.0, 0.1, size=(len(config.vocab), config.char_dim))
    emb[PAD_ID] = 0.0
    fan_in, fan_out = config.width * config.char_dim, config.filters
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return {
        "emb": emb,
        "W": rng.uniform(-lim, lim, size=(config.width, config.char_dim, config.filters)),
        "b": np.zeros(config.filters),
    }


def char_indices(words: Sequence[str], vocab: Vocabulary, width: int):
    """Char id matrix ``N x L`` (PAD-filled to >= width) and the valid-window mask."""
    lens = [max(len(w), width) for w in words]
    L = max(lens)
    ids = np.zeros((len(words), L), dtype=np.intp)
    for i, w in enumerate(words):
        ids[i, :len(w)] = vocab.lookup_all(w)
    n_windows = L - width + 1
    valid = np.arange(n_windows)[None, :] < (np.array(lens) - width + 1)[:, None]
    return ids, valid


def char_cnn_nodes(words: Sequence[str], config: CharCnnConfig, params: Mapping[str, Node]) -> Node:
    """Conv over char embeddings, max over each word's own windows, relu: ``N x filters``."""
    ids, valid = char_indices(words, config.vocab, config.width)
    x = tc.gather(params["emb"], ids)
    conv = tc.conv1d(x, params["W"], params["b"], padding="valid")
    return tc.relu(tc.max_over_time(conv, valid))


def char_cnn_embed(word: str, config: CharCnnConfig, params: Mapping[str, np.ndarray]) -> np.ndarray:
    if not word:
        raise ValueError("char_cnn_embed of an empty word")
    nodes = {k: tc.const(v) for k, v in params.items()}
    return char_cnn_nodes([word], config, nodes).value[0]


# -------------------------------------------------------------- assembly

def word_dropout(ids, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Replace each non-PAD id by UNK with probability ``rate``."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"word dropout rate {rate} outside [0, 1]")
    ids = np.array(ids, dtype=np.intp)
    if rate == 0.0:
        return ids
    drop = (rng.random(ids.shape) < rate) & (ids != PAD_ID)
    ids[drop] = UNK_ID
    return ids


def embed_nodes(indices: Mapping[str, np.ndarray], tables: Mapping[str, Node],
                char: Node | None = None) -> Node:
    """Concatenate gathered embeddings in the order word, pos, shape, char."""
    parts = [tc.gather(tables[f], indices[f]) for f in ("word", "pos", "shape") if f in tables]
    if char is not None:
        parts.append(char)
    return parts[0] if len(parts) == 1 else tc.concat(parts, axis=-1)


def embed_sequence(seq: LabeledSequence, tables: Mapping[str, EmbeddingTable],
                   char: tuple[CharCnnConfig, Mapping[str, np.ndarray]] | None = None) -> np.ndarray:
    """``T x D`` input features for one sequence; D is the sum of configured dims."""
    if len(seq.tokens) < 1:
        raise ValueError("empty sequence")
    idx = {f: np.array(t.vocab.lookup_all(field_values(seq, f))) for f, t in tables.items()}
    nodes = {f: tc.const(t.matrix) for f, t in tables.items()}
    c = None
    if char is not None:
        cfg, params = char
        c = char_cnn_nodes(seq.tokens, cfg, {k: tc.const(v) for k, v in params.items()})
    return embed_nodes(idx, nodes, c).value
