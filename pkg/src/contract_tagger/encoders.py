"""Sequence encoders over ``B x T x D`` inputs with a right-padded mask ``B x T``.

All three return zeros at padded positions, and their outputs at real
positions never depend on what the padded input rows contain.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import tensor as tc
from .tensor import Node

KINDS = ("bilstm", "dilated_cnn", "transformer")
TUNER_UNITS = (100, 150, 200, 250, 300)
TUNER_LAYERS = (1, 2, 3, 4)


@dataclass
class EncoderConfig:
    kind: str = "bilstm"
    layers: int = 1
    units: int = 100
    kernel_width: int = 3
    dilations: list[int] | None = None
    heads: int = 4
    ff_dim: int | None = None
    max_positions: int = 512
    positional: bool = True
    forget_bias: float = 1.0

    def __post_init__(self):
        if self.kind == "dcnn":
            self.kind = "dilated_cnn"
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoder kind {self.kind!r}; expected one of {KINDS}")
        if self.layers < 1 or self.units < 1:
            raise ValueError("layers and units must be positive")
        if self.layers not in TUNER_LAYERS or self.units not in TUNER_UNITS:
            warnings.warn(f"encoder layers={self.layers}, units={self.units} outside the tuning "
                          "grid; accepted as free-form", stacklevel=2)
        if self.kind == "transformer" and self.units % self.heads:
            raise ValueError(f"transformer units {self.units} not divisible by {self.heads} heads")
        if self.kind == "dilated_cnn":
            if self.dilations is None:
                self.dilations = [2 ** i for i in range(self.layers)]
            if len(self.dilations) != self.layers:
                raise ValueError("need one dilation per layer")
        if self.ff_dim is None:
            self.ff_dim = 4 * self.units

    @property
    def output_dim(self) -> int:
        return 2 * self.units if self.kind == "bilstm" else self.units

    def receptive_radius(self) -> int | None:
        if self.kind != "dilated_cnn":
            return None
        return sum(d * (self.kernel_width - 1) // 2 for d in self.dilations)


def glorot(rng, shape, fan_in=None, fan_out=None):
    fan_in = fan_in or shape[-2]
    fan_out = fan_out or shape[-1]
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


def init_encoder(config: EncoderConfig, input_dim: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    p = {}
    H = config.units
    if config.kind == "bilstm":
        d_in = input_dim
        for l in range(config.layers):
            for d in ("fw", "bw"):
                b = np.zeros(4 * H)
                b[H:2 * H] = config.forget_bias
                p[f"l{l}.{d}.W"] = glorot(rng, (d_in, 4 * H))
                p[f"l{l}.{d}.U"] = glorot(rng, (H, 4 * H))
                p[f"l{l}.{d}.b"] = b
            d_in = 2 * H
    elif config.kind == "dilated_cnn":
        d_in = input_dim
        w = config.kernel_width
        for l in range(config.layers):
            p[f"l{l}.W"] = glorot(rng, (w, d_in, H), fan_in=w * d_in, fan_out=w * H)
            p[f"l{l}.b"] = np.zeros(H)
            d_in = H
    else:
        p["in.W"] = glorot(rng, (input_dim, H))
        p["in.b"] = np.zeros(H)
        p["pos"] = rng.normal(0.0, 0.1, size=(config.max_positions, H))
        F = config.ff_dim
        for l in range(config.layers):
            for n in ("q", "k", "v", "o"):
                p[f"l{l}.{n}.W"] = glorot(rng, (H, H))
                p[f"l{l}.{n}.b"] = np.zeros(H)
            p[f"l{l}.ff1.W"] = glorot(rng, (H, F))
            p[f"l{l}.ff1.b"] = np.zeros(F)
            p[f"l{l}.ff2.W"] = glorot(rng, (F, H))
            p[f"l{l}.ff2.b"] = np.zeros(H)
            for n in ("ln1", "ln2"):
                p[f"l{l}.{n}.g"] = np.ones(H)
                p[f"l{l}.{n}.b"] = np.zeros(H)
    return p


def _prepare(x: Node, mask):
    if x.ndim == 2:
        x = tc.reshape(x, (1,) + x.shape)
    if x.shape[1] == 0:
        raise ValueError("cannot encode an empty sequence")
    if mask is None:
        mask = np.ones(x.shape[:2], dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim == 1:
        mask = mask[None]
    if mask.shape != x.shape[:2]:
        raise tc.ShapeError(f"mask {mask.shape} does not match input {x.shape}")
    if not mask[:, 0].all():
        raise ValueError("mask must mark at least one real token per sequence")
    return x, mask


def _finish(out: Node, squeeze: bool) -> Node:
    return tc.reshape(out, out.shape[1:]) if squeeze else out


def lstm_direction(x: Node, W: Node, U: Node, b: Node, mask: np.ndarray, reverse: bool = False) -> Node:
    """One LSTM pass (gates i, f, g, o); padded steps carry state through unchanged."""
    B, T, _ = x.shape
    H = U.shape[0]
    xw = tc.add(tc.matmul(x, W), b)
    h = c = tc.const(np.zeros((B, H)))
    outs = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        z = tc.add(xw[:, t, :], tc.matmul(h, U))
        s = tc.sigmoid(z)
        g = tc.tanh(z[:, 2 * H:3 * H])
        c_new = tc.add(tc.mul(s[:, H:2 * H], c), tc.mul(s[:, :H], g))
        h_new = tc.mul(s[:, 3 * H:], tc.tanh(c_new))
        m = mask[:, t]
        if m.all():
            h, c = h_new, c_new
        else:
            keep = m[:, None].astype(float)
            h = tc.add(tc.apply_mask(h_new, keep), tc.apply_mask(h, 1.0 - keep))
            c = tc.add(tc.apply_mask(c_new, keep), tc.apply_mask(c, 1.0 - keep))
        outs[t] = h
    return tc.stack(outs, axis=1)


def bilstm_encode(x: Node, config: EncoderConfig, params: Mapping[str, Node], mask=None, *,
                  dropout: float = 0.0, rng=None, train: bool = False) -> Node:
    squeeze = x.ndim == 2
    x, mask = _prepare(x, mask)
    m3 = mask[:, :, None]
    h = x
    for l in range(config.layers):
        if l:
            h = tc.dropout(h, dropout, rng, train)
        fw = lstm_direction(h, params[f"l{l}.fw.W"], params[f"l{l}.fw.U"], params[f"l{l}.fw.b"], mask)
        bw = lstm_direction(h, params[f"l{l}.bw.W"], params[f"l{l}.bw.U"], params[f"l{l}.bw.b"], mask,
                            reverse=True)
        h = tc.apply_mask(tc.concat([fw, bw], axis=-1), m3)
    return _finish(h, squeeze)


def dilated_cnn_encode(x: Node, config: EncoderConfig, params: Mapping[str, Node], mask=None, *,
                       dropout: float = 0.0, rng=None, train: bool = False) -> Node:
    squeeze = x.ndim == 2
    x, mask = _prepare(x, mask)
    m3 = mask[:, :, None]
    h = tc.apply_mask(x, m3)
    for l, d in enumerate(config.dilations):
        if l:
            h = tc.dropout(h, dropout, rng, train)
        h = tc.conv1d(h, params[f"l{l}.W"], params[f"l{l}.b"], dilation=d, padding="same")
        h = tc.apply_mask(tc.relu(h), m3)
    return _finish(h, squeeze)


def self_attention(x: Node, params: Mapping[str, Node], prefix: str, heads: int, mask) -> Node:
    """Multi-head scaled dot-product attention; padded keys get zero weight."""
    B, T, H = x.shape
    dh = H // heads

    def proj(n):
        y = tc.add(tc.matmul(x, params[f"{prefix}{n}.W"]), params[f"{prefix}{n}.b"])
        return tc.transpose(tc.reshape(y, (B, T, heads, dh)), (0, 2, 1, 3))

    q, k, v = proj("q"), proj("k"), proj("v")
    logits = tc.scale(tc.matmul(q, tc.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
    att = tc.softmax(logits, axis=-1, mask=mask[:, None, None, :])
    ctx = tc.reshape(tc.transpose(tc.matmul(att, v), (0, 2, 1, 3)), (B, T, H))
    return tc.add(tc.matmul(ctx, params[f"{prefix}o.W"]), params[f"{prefix}o.b"])


def transformer_encode(x: Node, config: EncoderConfig, params: Mapping[str, Node], mask=None, *,
                       dropout: float = 0.0, rng=None, train: bool = False) -> Node:
    squeeze = x.ndim == 2
    x, mask = _prepare(x, mask)
    T = x.shape[1]
    if T > config.max_positions:
        raise ValueError(f"sequence length {T} exceeds max positions {config.max_positions}")
    m3 = mask[:, :, None]
    h = tc.add(tc.matmul(tc.apply_mask(x, m3), params["in.W"]), params["in.b"])
    if config.positional:
        h = tc.add(h, params["pos"][:T])
    for l in range(config.layers):
        if l:
            h = tc.dropout(h, dropout, rng, train)
        a = self_attention(h, params, f"l{l}.", config.heads, mask)
        h = tc.layer_norm(tc.add(h, a), params[f"l{l}.ln1.g"], params[f"l{l}.ln1.b"])
        f = tc.relu(tc.add(tc.matmul(h, params[f"l{l}.ff1.W"]), params[f"l{l}.ff1.b"]))
        f = tc.add(tc.matmul(f, params[f"l{l}.ff2.W"]), params[f"l{l}.ff2.b"])
        h = tc.layer_norm(tc.add(h, f), params[f"l{l}.ln2.g"], params[f"l{l}.ln2.b"])
    return _finish(tc.apply_mask(h, m3), squeeze)


ENCODERS = {
    "bilstm": bilstm_encode,
    "dilated_cnn": dilated_cnn_encode,
    "transformer": transformer_encode,
}


def encode(x: Node, config: EncoderConfig, params: Mapping[str, Node], mask=None, **kw) -> Node:
    return ENCODERS[config.kind](x, config, params, mask, **kw)
