"""Zone dataset files, BIO tag schemas and span extraction.

A dataset file looks like::

    #zone=header types=Title,Party
    This<TAB>DT<TAB>O
    Agreement<TAB>NN<TAB>B-Title

with a blank line after every sequence.
"""

from __future__ import annotations

import os
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple, Sequence


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class TagSchema:
    """BIO inventory for one zone: index 0 is ``O``, then B-/I- per type."""

    types: tuple[str, ...]
    zone: str = "default"
    tags: tuple[str, ...] = field(init=False)
    index: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        types = tuple(self.types)
        if len(set(types)) != len(types):
            raise ValueError(f"duplicate entity types in {types}")
        for t in types:
            if not t or any(c in t for c in ", \t\n"):
                raise ValueError(f"invalid entity type name {t!r}")
        tags = ("O",) + tuple(f"{p}-{t}" for t in types for p in "BI")
        object.__setattr__(self, "types", types)
        object.__setattr__(self, "tags", tags)
        object.__setattr__(self, "index", {t: i for i, t in enumerate(tags)})

    def __len__(self):
        return len(self.tags)

    def encode(self, tags: Iterable[str]) -> list[int]:
        try:
            return [self.index[t] for t in tags]
        except KeyError as exc:
            raise DatasetError(f"unknown tag {exc.args[0]!r} for types {list(self.types)}") from None

    def decode(self, ids: Iterable[int]) -> list[str]:
        return [self.tags[i] for i in ids]

    def header(self) -> str:
        return f"#zone={self.zone} types={','.join(self.types)}"


@dataclass(frozen=True)
class LabeledSequence:
    tokens: tuple[str, ...]
    pos: tuple[str, ...]
    tags: tuple[str, ...]
    zone: str = "default"

    @classmethod
    def make(cls, tokens, pos=None, tags=None, zone="default"):
        tokens = tuple(tokens)
        pos = tuple(pos) if pos is not None else ("X",) * len(tokens)
        tags = tuple(tags) if tags is not None else ("O",) * len(tokens)
        if not tokens or not len(tokens) == len(pos) == len(tags):
            raise ValueError("tokens, pos and tags must be non-empty and of equal length")
        return cls(tokens, pos, tags, zone)

    def __len__(self):
        return len(self.tokens)


@dataclass
class Dataset:
    schema: TagSchema
    sequences: list[LabeledSequence]

    @property
    def zone(self) -> str:
        return self.schema.zone

    def __len__(self):
        return len(self.sequences)

    def __iter__(self) -> Iterator[LabeledSequence]:
        return iter(self.sequences)

    def __getitem__(self, i):
        return self.sequences[i]

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self.schema, [self.sequences[i] for i in indices])


class Span(NamedTuple):
    start: int
    end: int
    type: str


_HEADER = re.compile(r"^#zone=(\S+)\s+types=(\S*)\s*$")


def parse_header(line: str) -> TagSchema:
    m = _HEADER.match(line.strip())
    if not m:
        raise DatasetError(f"line 1: expected header '#zone=<name> types=<t1,t2,...>', got {line.strip()!r}")
    types = [t for t in m.group(2).split(",") if t]
    return TagSchema(tuple(types), zone=m.group(1))


def read_dataset(path: str | os.PathLike) -> Dataset:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not any(l.strip() for l in lines):
        raise DatasetError(f"{path}: no sequences")
    schema = parse_header(lines[0])
    seqs, cur = [], []

    def flush():
        if cur:
            tok, pos, tags = zip(*cur)
            seqs.append(LabeledSequence(tok, pos, tags, schema.zone))
            cur.clear()

    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            flush()
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(parts):
            raise DatasetError(f"{path}: line {lineno}: expected 'surface<TAB>pos<TAB>tag', got {line!r}")
        if parts[2] not in schema.index:
            raise DatasetError(f"{path}: line {lineno}: unknown tag {parts[2]!r} "
                               f"(schema types: {','.join(schema.types)})")
        cur.append(tuple(parts))
    flush()
    if not seqs:
        raise DatasetError(f"{path}: no sequences")
    return Dataset(schema, seqs)


def read_untagged(path: str | os.PathLike) -> list[LabeledSequence]:
    """Prediction input: ``surface<TAB>pos`` lines (a third column is ignored).

    A header line is optional; an empty file yields an empty list.
    """
    path = Path(path)
    seqs, cur = [], []
    zone = "default"
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if lineno == 1 and line.startswith("#zone="):
                zone = parse_header(line).zone
                continue
            if not line.strip():
                if cur:
                    seqs.append(LabeledSequence.make([c[0] for c in cur], [c[1] for c in cur], zone=zone))
                    cur = []
                continue
            parts = line.split("\t")
            if len(parts) not in (2, 3) or not parts[0] or not parts[1]:
                raise DatasetError(f"{path}: line {lineno}: expected 'surface<TAB>pos', got {line!r}")
            cur.append(parts)
    if cur:
        seqs.append(LabeledSequence.make([c[0] for c in cur], [c[1] for c in cur], zone=zone))
    return seqs


def format_dataset(data: Dataset) -> str:
    out = [data.schema.header()]
    for seq in data:
        out.extend(f"{w}\t{p}\t{t}" for w, p, t in zip(seq.tokens, seq.pos, seq.tags))
        out.append("")
    return "\n".join(out) + "\n"


def atomic_write(path: str | os.PathLike, payload: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.tmp{os.getpid()}")
    mode = "wb" if isinstance(payload, bytes) else "w"
    with open(tmp, mode, **({} if mode == "wb" else {"encoding": "utf-8"})) as fh:
        fh.write(payload)
    os.replace(tmp, path)


def write_dataset(path: str | os.PathLike, data: Dataset) -> None:
    atomic_write(path, format_dataset(data))


# ------------------------------------------------------------------- spans

def _split(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    prefix, _, typ = tag.partition("-")
    if prefix not in ("B", "I") or not typ:
        raise DatasetError(f"malformed BIO tag {tag!r}")
    return prefix, typ


def spans_from_tags(tags: Sequence[str]) -> list[Span]:
    """Maximal ``B-x I-x*`` runs; a stray ``I-x`` opens a new span."""
    spans = []
    start, typ = None, None
    for i, tag in enumerate(tags):
        prefix, t = _split(tag)
        if prefix == "I" and typ == t:
            continue
        if typ is not None:
            spans.append(Span(start, i, typ))
        start, typ = (i, t) if prefix != "O" else (None, None)
    if typ is not None:
        spans.append(Span(start, len(tags), typ))
    return spans


def tags_from_spans(spans: Iterable[Span], length: int) -> list[str]:
    tags = ["O"] * length
    for s in sorted(spans):
        if not 0 <= s.start < s.end <= length:
            raise ValueError(f"span {s} outside a sequence of length {length}")
        if any(t != "O" for t in tags[s.start:s.end]):
            raise ValueError(f"overlapping span {s}")
        tags[s.start] = f"B-{s.type}"
        for i in range(s.start + 1, s.end):
            tags[i] = f"I-{s.type}"
    return tags


@dataclass
class DatasetStats:
    sequences: int
    tokens: int
    spans: dict[str, int]

    def as_dict(self) -> dict:
        return {"sequences": self.sequences, "tokens": self.tokens, "spans": dict(self.spans)}


def dataset_stats(data: Iterable[LabeledSequence], types: Sequence[str] = ()) -> DatasetStats:
    if isinstance(data, Dataset) and not types:
        types = data.schema.types
    counts = Counter({t: 0 for t in types})
    n_seq = n_tok = 0
    for seq in data:
        n_seq += 1
        n_tok += len(seq.tokens)
        counts.update(s.type for s in spans_from_tags(seq.tags))
    return DatasetStats(n_seq, n_tok, dict(counts))
