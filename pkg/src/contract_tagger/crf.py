"""Output layers: linear-chain CRF and per-token softmax.

Batched graph ops take emissions ``B x T x K`` and a right-padded boolean
mask ``B x T``.  The single-sequence helpers (:func:`sequence_score`,
:func:`log_partition`, :func:`viterbi`, ...) operate on plain ``T x K`` arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as tc
from .tensor import Node


@dataclass
class CrfParams:
    """``trans[i, j]`` scores label ``j`` directly following label ``i``."""

    trans: np.ndarray
    start: np.ndarray
    end: np.ndarray

    @classmethod
    def zeros(cls, k: int) -> "CrfParams":
        return cls(np.zeros((k, k)), np.zeros(k), np.zeros(k))

    @property
    def num_labels(self) -> int:
        return self.start.shape[0]


def _lse(x, axis):
    m = x.max(axis=axis, keepdims=True)
    return np.squeeze(m, axis) + np.log(np.exp(x - m).sum(axis=axis))


def _forward_backward(e, trans, start, end, mask):
    B, T, K = e.shape
    alpha = np.empty((B, T, K))
    alpha[:, 0] = start + e[:, 0]
    for t in range(1, T):
        nxt = _lse(alpha[:, t - 1, :, None] + trans[None], axis=1) + e[:, t]
        alpha[:, t] = np.where(mask[:, t, None], nxt, alpha[:, t - 1])
    log_z = _lse(alpha[:, -1] + end, axis=1)

    beta = np.empty((B, T, K))
    beta[:, -1] = end
    for t in range(T - 2, -1, -1):
        nxt = _lse(trans[None] + (e[:, t + 1] + beta[:, t + 1])[:, None, :], axis=2)
        beta[:, t] = np.where(mask[:, t + 1, None], nxt, beta[:, t + 1])
    return alpha, beta, log_z


def crf_log_partition(e: Node, trans: Node, start: Node, end: Node, mask) -> Node:
    """Log-normalizer per sequence (shape ``B``) by the forward recursion.

    The backward pass uses forward-backward marginals, so ``d logZ / d e[t, k]``
    is the posterior probability of label ``k`` at position ``t``.
    """
    mask = np.asarray(mask, dtype=bool)
    ev = e.value
    if ev.ndim != 3 or mask.shape != ev.shape[:2]:
        raise tc.ShapeError(f"crf_log_partition: emissions {ev.shape} vs mask {mask.shape}")
    if not mask[:, 0].all():
        raise ValueError("every sequence needs at least one real token")
    alpha, beta, log_z = _forward_backward(ev, trans.value, start.value, end.value, mask)
    lengths = mask.sum(axis=1)
    rows = np.arange(ev.shape[0])

    def backward(g):
        gcol = g[:, None, None]
        unary = np.exp(alpha + beta - log_z[:, None, None]) * mask[:, :, None]
        pair = np.exp(alpha[:, :-1, :, None] + trans.value[None, None]
                      + (ev[:, 1:] + beta[:, 1:])[:, :, None, :]
                      - log_z[:, None, None, None])
        pair = pair * mask[:, 1:, None, None]
        g_trans = (pair * g[:, None, None, None]).sum(axis=(0, 1))
        g_start = unary[:, 0] * g[:, None]
        g_end = unary[rows, lengths - 1] * g[:, None]
        return unary * gcol, g_trans, g_start.sum(axis=0), g_end.sum(axis=0)

    return tc._result(log_z, "crf_log_partition", (e, trans, start, end), backward)


def crf_path_score(e: Node, trans: Node, start: Node, end: Node, tags, mask) -> Node:
    """Score of the given tag paths (shape ``B``); padded tags are ignored."""
    mask = np.asarray(mask, dtype=bool)
    tags = np.asarray(tags, dtype=np.intp)
    ev = e.value
    B, T, K = ev.shape
    if tags.shape != (B, T):
        raise tc.ShapeError(f"crf_path_score: tags {tags.shape} vs emissions {ev.shape}")
    if (tags[mask] < 0).any() or (tags[mask] >= K).any():
        raise IndexError(f"tag index out of range for {K} labels")
    tags = np.where(mask, tags, 0)
    lengths = mask.sum(axis=1)
    rows = np.arange(B)
    last = tags[rows, lengths - 1]
    pm = mask[:, 1:]

    unary = np.take_along_axis(ev, tags[:, :, None], axis=2)[:, :, 0]
    score = (unary * mask).sum(axis=1)
    score = score + start.value[tags[:, 0]] + end.value[last]
    score = score + (trans.value[tags[:, :-1], tags[:, 1:]] * pm).sum(axis=1)

    def backward(g):
        ge = np.zeros_like(ev)
        bi, ti = np.nonzero(mask)
        ge[bi, ti, tags[bi, ti]] = g[bi]
        gt = np.zeros_like(trans.value)
        bi, ti = np.nonzero(pm)
        np.add.at(gt, (tags[bi, ti], tags[bi, ti + 1]), g[bi])
        gs = np.zeros_like(start.value)
        np.add.at(gs, tags[:, 0], g)
        gend = np.zeros_like(end.value)
        np.add.at(gend, last, g)
        return ge, gt, gs, gend

    return tc._result(score, "crf_path_score", (e, trans, start, end), backward)


def crf_nll_batch(e: Node, trans: Node, start: Node, end: Node, tags, mask) -> Node:
    """Per-sequence negative log-likelihood (shape ``B``)."""
    return tc.sub(crf_log_partition(e, trans, start, end, mask),
                  crf_path_score(e, trans, start, end, tags, mask))


def token_cross_entropy(e: Node, tags, mask) -> Node:
    """Per-sequence summed softmax cross-entropy (shape ``B``)."""
    mask = np.asarray(mask, dtype=bool)
    tags = np.where(mask, np.asarray(tags, dtype=np.intp), 0)
    B, T, _ = e.shape
    bi, ti = np.meshgrid(np.arange(B), np.arange(T), indexing="ij")
    gold = tc.getitem(e, (bi, ti, tags))
    per_token = tc.sub(tc.logsumexp(e, axis=-1), gold)
    return tc.sum(tc.apply_mask(per_token, mask), axis=1)


def viterbi_batch(e: np.ndarray, p: CrfParams, mask) -> list[tuple[list[int], float]]:
    mask = np.asarray(mask, dtype=bool)
    return [viterbi(e[b, :int(mask[b].sum())], p) for b in range(e.shape[0])]


# ---------------------------------------------------------- single sequence

def _check(e, p):
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1:
        raise ValueError(f"emissions must be T x K with T >= 1, got {e.shape}")
    if e.shape[1] != p.num_labels:
        raise ValueError(f"emissions have {e.shape[1]} labels, CRF has {p.num_labels}")
    return e


def sequence_score(e, p: CrfParams, y) -> float:
    e = _check(e, p)
    y = list(y)
    if len(y) != e.shape[0]:
        raise ValueError(f"tag sequence length {len(y)} != {e.shape[0]}")
    k = e.shape[1]
    if any(not 0 <= t < k for t in y):
        raise IndexError(f"tag index out of range for {k} labels")
    s = p.start[y[0]] + p.end[y[-1]] + sum(e[t, y[t]] for t in range(len(y)))
    s += sum(p.trans[y[t - 1], y[t]] for t in range(1, len(y)))
    return float(s)


def log_partition(e, p: CrfParams) -> float:
    e = _check(e, p)
    alpha = p.start + e[0]
    for t in range(1, e.shape[0]):
        alpha = _lse(alpha[:, None] + p.trans, axis=0) + e[t]
    return float(_lse(alpha + p.end, axis=0))


def viterbi(e, p: CrfParams) -> tuple[list[int], float]:
    """Best path and its score.  Ties go to the lower label index."""
    e = _check(e, p)
    T = e.shape[0]
    delta = p.start + e[0]
    back = np.zeros((T, e.shape[1]), dtype=np.intp)
    for t in range(1, T):
        cand = delta[:, None] + p.trans
        back[t] = cand.argmax(axis=0)
        delta = cand[back[t], np.arange(e.shape[1])] + e[t]
    final = delta + p.end
    best = int(final.argmax())
    path = [best]
    for t in range(T - 1, 0, -1):
        best = int(back[t, best])
        path.append(best)
    path.reverse()
    return path, float(final.max())


def crf_nll(e, p: CrfParams, gold) -> float:
    return log_partition(e, p) - sequence_score(e, p, gold)


def marginals(e, p: CrfParams) -> np.ndarray:
    """Posterior label probabilities ``T x K`` via the log-partition gradient."""
    e = _check(e, p)
    en = tc.param(e[None])
    log_z = crf_log_partition(en, tc.const(p.trans), tc.const(p.start), tc.const(p.end),
                              np.ones((1, e.shape[0]), dtype=bool))
    return tc.gradients(tc.sum(log_z), {"e": en})["e"][0]


def softmax_decode(e) -> list[int]:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 2 or e.shape[0] < 1:
        raise ValueError(f"emissions must be T x K with T >= 1, got {e.shape}")
    return [int(i) for i in e.argmax(axis=1)]
