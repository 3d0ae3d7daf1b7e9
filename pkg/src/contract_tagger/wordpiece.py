"""Greedy longest-match subword tokenizer and the word fragmentation ratio."""

from __future__ import annotations

import os
from collections import Counter
from dataclasses import dataclass
from typing import Callable, Iterable

UNK_PIECE = "[UNK]"
CONT = "##"


@dataclass(frozen=True)
class SubwordVocab:
    pieces: frozenset
    unk: str = UNK_PIECE
    lowercase: bool = False

    def __post_init__(self):
        if not self.pieces:
            raise ValueError("subword vocabulary is empty")
        object.__setattr__(self, "pieces", frozenset(self.pieces))
        object.__setattr__(self, "_max_len", max(len(p) for p in self.pieces))

    @classmethod
    def from_file(cls, path: str | os.PathLike, lowercase: bool = False) -> "SubwordVocab":
        with open(path, encoding="utf-8") as fh:
            pieces = [line.rstrip("\n") for line in fh]
        return cls(frozenset(p for p in pieces if p), lowercase=lowercase)

    def __contains__(self, piece):
        return piece in self.pieces


def wordpiece_tokenize(word: str, vocab: SubwordVocab) -> list[str]:
    if not word:
        raise ValueError("cannot tokenize an empty word")
    if vocab.lowercase:
        word = word.lower()
    out, start, n = [], 0, len(word)
    while start < n:
        end = min(n, start + vocab._max_len)
        piece = None
        while end > start:
            cand = word[start:end] if start == 0 else CONT + word[start:end]
            if cand in vocab.pieces:
                piece = cand
                break
            end -= 1
        if piece is None:
            return [vocab.unk]
        out.append(piece)
        start = end
    return out


def reassemble(pieces: Iterable[str]) -> str:
    return "".join(p[len(CONT):] if p.startswith(CONT) else p for p in pieces)


def word_fragmentation_ratio(words: Iterable[str], vocab: SubwordVocab,
                             restrict: Callable[[str], bool] | None = None,
                             weighted: bool = False) -> float:
    """Mean piece count per word.

    By default each distinct word counts once; ``weighted`` counts every
    occurrence.  ``restrict`` keeps only words it accepts.
    """
    counts = Counter(words)
    if restrict is not None:
        counts = Counter({w: c for w, c in counts.items() if restrict(w)})
    if not counts:
        raise ValueError("word list is empty")
    total = n = 0
    for w, c in counts.items():
        k = c if weighted else 1
        total += k * len(wordpiece_tokenize(w, vocab))
        n += k
    return total / n
