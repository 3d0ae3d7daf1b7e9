"""Templated contract-like corpora for self-contained end-to-end checks.

``header`` corpora mimic a contract preamble (title, parties, one date).
Whether the date is a start or an effective date depends only on a trigger
word (``signed`` / ``effective``) placed ``distance`` tokens before it, with
neutral filler in between.

``chain`` corpora contain runs of back-to-back two-token entities drawn from
one shared word pool, so a token's B/I position and its type are only
recoverable by following the tag chain from the keyword that opens the run.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data import Dataset, LabeledSequence, TagSchema, write_dataset
from .tensor import make_rng

HEADER_TYPES = ("Title", "Party", "StartDate", "EffectiveDate")
CHAIN_TYPES = ("Alpha", "Beta")

TITLE_HEADS = ["Service", "Lease", "Loan", "Employment", "License", "Supply", "Consulting",
               "Purchase", "Distribution", "Credit", "Security", "Guaranty"]
PARTY_NAMES = ["Acme", "Globex", "Initech", "Umbrella", "Hooli", "Stark", "Wayne", "Wonka",
               "Soylent", "Cyberdyne", "Tyrell", "Gringotts", "Vandelay", "Oceanic", "Pied",
               "Piper", "Dunder", "Mifflin", "Massive", "Dynamic", "Aperture", "Black", "Mesa"]
PARTY_SUFFIX = ["Inc.", "Ltd", "LLC", "Corp.", "plc", "GmbH", "S.A."]
MONTHS = ["January", "February", "March", "April", "May", "June", "July", "August",
          "September", "October", "November", "December"]
FILLER = ["the", "of", "on", "as", "this", "date", "day", "with", "hereof", "which", "shall",
          "be", "deemed", "by", "parties", "in", "all", "respects", "such", "terms"]
CHAIN_POOL = ["Kor", "Lam", "Vex", "Tul", "Zan", "Mir", "Dov", "Pex", "Rul", "Sab", "Tok",
              "Wen", "Yar", "Bix", "Cal", "Fen", "Gor", "Hul", "Jin", "Nox"]

POS = {"This": "DT", "is": "VBZ", "made": "VBN", "between": "IN", "and": "CC", ".": ".",
       ",": ",", ":": ":", "Agreement": "NNP", "signed": "VBN", "effective": "JJ",
       "alpha": "NN", "beta": "NN", "the": "DT", "of": "IN", "on": "IN", "as": "IN",
       "with": "IN", "by": "IN", "in": "IN", "shall": "MD", "be": "VB", "deemed": "VBN"}


def _pos(token: str) -> str:
    if token in POS:
        return POS[token]
    if token[0].isdigit():
        return "CD"
    if token[0].isupper():
        return "NNP"
    return "NN"


@dataclass
class SyntheticSpec:
    seed: int = 0
    n_train: int = 2000
    n_dev: int = 300
    n_test: int = 500
    distance: int = 2
    kind: str = "header"
    max_pairs: int = 8

    def __post_init__(self):
        if min(self.n_train, self.n_dev, self.n_test) < 1:
            raise ValueError("sequence counts must be >= 1")
        if self.distance < 1:
            raise ValueError("trigger distance must be >= 1")
        if self.kind not in ("header", "chain"):
            raise ValueError(f"unknown synthetic kind {self.kind!r}")

    @property
    def types(self) -> tuple[str, ...]:
        return HEADER_TYPES if self.kind == "header" else CHAIN_TYPES


class _Builder:
    def __init__(self):
        self.tokens, self.tags = [], []

    def words(self, *ws):
        for w in ws:
            self.tokens.append(w)
            self.tags.append("O")

    def entity(self, typ, ws):
        for i, w in enumerate(ws):
            self.tokens.append(w)
            self.tags.append(("B-" if i == 0 else "I-") + typ)

    def build(self, zone):
        return LabeledSequence(tuple(self.tokens), tuple(_pos(t) for t in self.tokens),
                               tuple(self.tags), zone)


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _date(rng):
    day = int(rng.integers(1, 29))
    suffix = "th" if 10 <= day % 100 <= 20 else {1: "st", 2: "nd", 3: "rd"}.get(day % 10, "th")
    return [_pick(rng, MONTHS), f"{day}{suffix}", ",", str(int(rng.integers(1990, 2031)))]


def header_sequence(rng: np.random.Generator, distance: int) -> LabeledSequence:
    b = _Builder()
    b.words("This")
    b.entity("Title", [_pick(rng, TITLE_HEADS), "Agreement"])
    b.words("is", "made", "between")
    for i in range(2):
        if i:
            b.words("and")
        n = int(rng.integers(1, 3))
        b.entity("Party", [_pick(rng, PARTY_NAMES) for _ in range(n)] + [_pick(rng, PARTY_SUFFIX)])
    b.words(",")
    start = rng.random() < 0.5
    b.words("signed" if start else "effective")
    b.words(*[_pick(rng, FILLER) for _ in range(distance - 1)])
    b.entity("StartDate" if start else "EffectiveDate", _date(rng))
    b.words(*[_pick(rng, FILLER) for _ in range(int(rng.integers(0, 3)))])
    b.words(".")
    return b.build("header")


def chain_sequence(rng: np.random.Generator, max_pairs: int) -> LabeledSequence:
    b = _Builder()
    for r in range(int(rng.integers(1, 3))):
        b.words(*[_pick(rng, FILLER) for _ in range(int(rng.integers(1, 7)))])
        typ = _pick(rng, CHAIN_TYPES)
        b.words(typ.lower(), ":")
        for _ in range(int(rng.integers(1, max_pairs + 1))):
            b.entity(typ, [_pick(rng, CHAIN_POOL), _pick(rng, CHAIN_POOL)])
        b.words(".")
    return b.build("chain")


def generate_synthetic(spec: SyntheticSpec) -> dict[str, Dataset]:
    rng = make_rng(spec.seed)
    schema = TagSchema(spec.types, zone=spec.kind)
    if spec.kind == "header":
        make = lambda: header_sequence(rng, spec.distance)  # noqa: E731
    else:
        make = lambda: chain_sequence(rng, spec.max_pairs)  # noqa: E731
    return {name: Dataset(schema, [make() for _ in range(n)])
            for name, n in (("train", spec.n_train), ("dev", spec.n_dev), ("test", spec.n_test))}


def write_synthetic(spec: SyntheticSpec, out_dir: str | os.PathLike) -> dict[str, Path]:
    out_dir = Path(out_dir)
    paths = {}
    for name, data in generate_synthetic(spec).items():
        paths[name] = out_dir / f"{name}.txt"
        write_dataset(paths[name], data)
    return paths
