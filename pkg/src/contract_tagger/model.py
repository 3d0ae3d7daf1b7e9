"""Tagger model: features -> encoder -> dense emissions -> CRF or softmax.

Parameters are a flat ``name -> float64 array`` dict.  A saved model is a
directory holding ``manifest.json`` and ``weights.bin`` (little-endian
float64, tensors concatenated in manifest catalog order).
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import tensor as tc
from .crf import CrfParams, crf_nll_batch, token_cross_entropy, viterbi_batch
from .data import LabeledSequence, Span, TagSchema, atomic_write, spans_from_tags
from .encoders import EncoderConfig, encode, glorot, init_encoder
from .features import (PAD_ID, CharCnnConfig, Vocabulary, build_vocab, char_cnn_nodes,
                       embed_nodes, field_values, init_char_cnn, load_pretrained, word_dropout)

FORMAT_VERSION = 1


@dataclass
class FeatureConfig:
    word_dim: int = 200
    pos_dim: int = 25
    shape_dim: int = 25
    use_pos: bool = True
    use_shape: bool = True
    use_char: bool = False
    char_dim: int = 25
    char_width: int = 3
    char_filters: int = 30
    min_count: int = 1
    pretrained: str | None = None
    freeze_word: bool = False

    @classmethod
    def from_flag(cls, flag: str, **kw) -> "FeatureConfig":
        """``word``, ``word+pos+shape``, ``word+pos+shape+char`` (``+char`` = all)."""
        parts = set(flag.strip("+").split("+")) if flag.strip("+") else set()
        if flag.startswith("+"):
            parts |= {"word", "pos", "shape"}
        unknown = parts - {"word", "pos", "shape", "char"}
        if unknown or "word" not in parts:
            raise ValueError(f"bad feature set {flag!r}")
        return cls(use_pos="pos" in parts, use_shape="shape" in parts, use_char="char" in parts, **kw)

    @property
    def input_dim(self) -> int:
        return (self.word_dim + self.use_pos * self.pos_dim + self.use_shape * self.shape_dim
                + self.use_char * self.char_filters)


@dataclass
class TrainConfig:
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    use_crf: bool = True
    batch_size: int = 16
    dropout: float = 0.3
    word_dropout: float = 0.0
    lr: float = 1e-3
    max_epochs: int = 50
    patience: int = 5
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if isinstance(self.encoder, dict):
            self.encoder = EncoderConfig(**self.encoder)
        if isinstance(self.features, dict):
            self.features = FeatureConfig(**self.features)
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        if not 0.0 <= self.word_dropout <= 1.0:
            raise ValueError("word dropout must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrainConfig":
        return cls(**dict(d))


@dataclass
class Batch:
    sequences: list[LabeledSequence]
    ids: dict[str, np.ndarray]
    mask: np.ndarray
    tags: np.ndarray | None


class Model:
    def __init__(self, config: TrainConfig, schema: TagSchema, vocabs: dict[str, Vocabulary],
                 params: dict[str, np.ndarray]):
        self.config = config
        self.schema = schema
        self.vocabs = vocabs
        self.params = params
        fc = config.features
        self.char_config = (CharCnnConfig(vocabs["char"], fc.char_dim, fc.char_width, fc.char_filters)
                            if fc.use_char else None)

    # ---------------------------------------------------------- construction
    @classmethod
    def build(cls, config: TrainConfig, schema: TagSchema, corpus: Sequence[LabeledSequence],
              rng: np.random.Generator | None = None) -> "Model":
        rng = rng if rng is not None else tc.make_rng(config.seed)
        fc = config.features
        vocabs = {"word": build_vocab(corpus, "word", fc.min_count)}
        dims = {"word": fc.word_dim}
        if fc.use_pos:
            vocabs["pos"] = build_vocab(corpus, "pos")
            dims["pos"] = fc.pos_dim
        if fc.use_shape:
            vocabs["shape"] = build_vocab(corpus, "shape")
            dims["shape"] = fc.shape_dim
        if fc.use_char:
            vocabs["char"] = build_vocab(corpus, "char")

        params = {}
        for f, d in dims.items():
            if f == "word" and fc.pretrained:
                table = load_pretrained(fc.pretrained, vocabs["word"], d, rng)
                params["emb.word"] = table.matrix
            else:
                m = rng.normal(0.0, 0.1, size=(len(vocabs[f]), d))
                m[PAD_ID] = 0.0
                params[f"emb.{f}"] = m
        if fc.use_char:
            cc = CharCnnConfig(vocabs["char"], fc.char_dim, fc.char_width, fc.char_filters)
            for k, v in init_char_cnn(cc, rng).items():
                params[f"char.{k}"] = v
        for k, v in init_encoder(config.encoder, fc.input_dim, rng).items():
            params[f"enc.{k}"] = v
        K = len(schema)
        params["out.W"] = glorot(rng, (config.encoder.output_dim, K))
        params["out.b"] = np.zeros(K)
        if config.use_crf:
            params["crf.trans"] = np.zeros((K, K))
            params["crf.start"] = np.zeros(K)
            params["crf.end"] = np.zeros(K)
        return cls(config, schema, vocabs, params)

    def trainable(self) -> list[str]:
        frozen = {"emb.word"} if self.config.features.freeze_word else set()
        return [k for k in self.params if k not in frozen]

    def after_update(self) -> None:
        """Keep PAD embedding rows at zero."""
        for k in ("emb.word", "emb.pos", "emb.shape", "char.emb"):
            if k in self.params:
                self.params[k][PAD_ID] = 0.0

    @property
    def crf_params(self) -> CrfParams | None:
        if not self.config.use_crf:
            return None
        return CrfParams(self.params["crf.trans"], self.params["crf.start"], self.params["crf.end"])

    # --------------------------------------------------------------- batches
    def make_batch(self, seqs: Sequence[LabeledSequence], with_tags: bool = True) -> Batch:
        B = len(seqs)
        T = max(len(s.tokens) for s in seqs)
        mask = np.zeros((B, T), dtype=bool)
        ids = {f: np.zeros((B, T), dtype=np.intp) for f in ("word", "pos", "shape") if f in self.vocabs}
        tags = np.zeros((B, T), dtype=np.intp) if with_tags else None
        for b, s in enumerate(seqs):
            n = len(s.tokens)
            mask[b, :n] = True
            for f, arr in ids.items():
                arr[b, :n] = self.vocabs[f].lookup_all(field_values(s, f))
            if with_tags:
                tags[b, :n] = self.schema.encode(s.tags)
        return Batch(list(seqs), ids, mask, tags)

    # --------------------------------------------------------------- forward
    def emissions(self, batch: Batch, nodes: Mapping[str, tc.Node] | None = None, *,
                  train: bool = False, rng: np.random.Generator | None = None) -> tc.Node:
        if nodes is None:
            nodes = {k: tc.const(v) for k, v in self.params.items()}
        cfg = self.config
        ids = dict(batch.ids)
        if train and cfg.word_dropout > 0:
            ids["word"] = word_dropout(ids["word"], cfg.word_dropout, rng)
        tables = {f: nodes[f"emb.{f}"] for f in ids}
        char = None
        if self.char_config is not None:
            words = [w for s in batch.sequences for w in s.tokens]
            flat = char_cnn_nodes(words, self.char_config,
                                  {k: nodes[f"char.{k}"] for k in ("emb", "W", "b")})
            pos = np.flatnonzero(batch.mask.reshape(-1))
            B, T = batch.mask.shape
            padded = tc.concat([flat, tc.const(np.zeros((1, flat.shape[1])))], axis=0)
            where = np.full(B * T, flat.shape[0], dtype=np.intp)
            where[pos] = np.arange(len(words))
            char = tc.reshape(tc.getitem(padded, where), (B, T, flat.shape[1]))
        x = embed_nodes(ids, tables, char)
        x = tc.dropout(x, cfg.dropout, rng, train)
        enc_params = {k[4:]: v for k, v in nodes.items() if k.startswith("enc.")}
        h = encode(x, cfg.encoder, enc_params, batch.mask, dropout=cfg.dropout, rng=rng, train=train)
        h = tc.dropout(h, cfg.dropout, rng, train)
        return tc.add(tc.matmul(h, nodes["out.W"]), nodes["out.b"])

    def loss(self, batch: Batch, nodes: Mapping[str, tc.Node], *, train: bool = False,
             rng: np.random.Generator | None = None) -> tc.Node:
        """Mean over sequences of CRF NLL (or summed token cross-entropy)."""
        e = self.emissions(batch, nodes, train=train, rng=rng)
        if self.config.use_crf:
            per_seq = crf_nll_batch(e, nodes["crf.trans"], nodes["crf.start"], nodes["crf.end"],
                                    batch.tags, batch.mask)
        else:
            per_seq = token_cross_entropy(e, batch.tags, batch.mask)
        return tc.mean(per_seq)

    # ---------------------------------------------------------------- decode
    def predict_ids(self, seqs: Sequence[LabeledSequence], batch_size: int = 64) -> list[list[int]]:
        out = []
        for i in range(0, len(seqs), batch_size):
            batch = self.make_batch(seqs[i:i + batch_size], with_tags=False)
            e = self.emissions(batch).value
            if self.config.use_crf:
                out.extend(path for path, _ in viterbi_batch(e, self.crf_params, batch.mask))
            else:
                for b, n in enumerate(batch.mask.sum(axis=1)):
                    out.append([int(k) for k in e[b, :n].argmax(axis=1)])
        return out

    def predict(self, seqs: Sequence[LabeledSequence], batch_size: int = 64) -> list[list[str]]:
        return [self.schema.decode(p) for p in self.predict_ids(seqs, batch_size)]

    def extract(self, seqs: Sequence[LabeledSequence]) -> list[tuple[list[str], list[Span]]]:
        return [(tags, spans_from_tags(tags)) for tags in self.predict(seqs)]

    # ---------------------------------------------------------- persistence
    def manifest(self) -> tuple[dict, bytes]:
        catalog, chunks, offset = [], [], 0
        for name in sorted(self.params):
            arr = np.ascontiguousarray(self.params[name], dtype="<f8")
            raw = arr.tobytes()
            catalog.append({"name": name, "shape": list(arr.shape), "offset": offset, "nbytes": len(raw)})
            chunks.append(raw)
            offset += len(raw)
        manifest = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "schema": {"zone": self.schema.zone, "types": list(self.schema.types)},
            "vocabs": {k: v.entries for k, v in sorted(self.vocabs.items())},
            "tensors": catalog,
        }
        return manifest, b"".join(chunks)

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        manifest, payload = self.manifest()
        path.mkdir(parents=True, exist_ok=True)
        atomic_write(path / "weights.bin", payload)
        atomic_write(path / "manifest.json", json.dumps(manifest, indent=1, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "Model":
        path = Path(path)
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format {manifest.get('format_version')}")
        payload = (path / "weights.bin").read_bytes()
        params, end = {}, 0
        for entry in manifest["tensors"]:
            if entry["offset"] != end:
                raise ValueError(f"tensor catalog gap before {entry['name']}")
            raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
            params[entry["name"]] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(entry["shape"])
            end += entry["nbytes"]
        if end != len(payload):
            raise ValueError("weight payload size does not match the tensor catalog")
        config = TrainConfig.from_dict(manifest["config"])
        schema = TagSchema(tuple(manifest["schema"]["types"]), zone=manifest["schema"]["zone"])
        vocabs = {k: Vocabulary(v) for k, v in manifest["vocabs"].items()}
        return cls(config, schema, vocabs, params)
