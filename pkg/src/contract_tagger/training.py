"""Adam training with early stopping, Monte-Carlo CV splits and random search."""

from __future__ import annotations

import copy
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import tensor as tc
from .data import Dataset, LabeledSequence, TagSchema, atomic_write, spans_from_tags
from .metrics import EvalReport, entity_prf
from .model import Model, TrainConfig

log = logging.getLogger(__name__)


class TrainingDiverged(FloatingPointError):
    pass


# -------------------------------------------------------------------- Adam

@dataclass
class AdamState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: AdamState, lr: float) -> tuple[dict[str, np.ndarray], AdamState]:
    """Bias-corrected Adam; returns new arrays and a new state (inputs untouched)."""
    t = state.t + 1
    new_p, new_m, new_v = dict(params), dict(state.m), dict(state.v)
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise ValueError(f"adam_step: gradient {g.shape} vs parameter {p.shape} for {name}")
        m = state.beta1 * state.m.get(name, 0.0) + (1.0 - state.beta1) * g
        v = state.beta2 * state.v.get(name, 0.0) + (1.0 - state.beta2) * g * g
        new_m[name], new_v[name] = m, v
        new_p[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return new_p, AdamState(new_m, new_v, t, state.beta1, state.beta2, state.eps)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
    if max_norm and norm > max_norm:
        s = max_norm / norm
        for k in grads:
            grads[k] = grads[k] * s
    return norm


# ------------------------------------------------------------------ splits

def monte_carlo_splits(n: int | Sequence, folds: int = 5, dev_fraction: float = 0.15,
                       seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Independent shuffle-and-split per fold (folds may overlap each other)."""
    n = n if isinstance(n, int) else len(n)
    if n < 2:
        raise ValueError("need at least 2 sequences to split")
    if folds < 1:
        raise ValueError("folds must be >= 1")
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError("dev_fraction must lie in (0, 1)")
    n_dev = min(n - 1, max(1, int(round(dev_fraction * n))))
    out = []
    for s in np.random.SeedSequence(seed).spawn(folds):
        perm = tc.make_rng(s.generate_state(1)[0]).permutation(n)
        out.append((np.sort(perm[n_dev:]), np.sort(perm[:n_dev])))
    return out


# --------------------------------------------------------------- evaluation

def evaluate_model(model: Model, data: Sequence[LabeledSequence], types: Sequence[str] = ()) -> EvalReport:
    data = list(data)
    preds = model.predict(data) if data else []
    types = types or model.schema.types
    return entity_prf([spans_from_tags(s.tags) for s in data], [spans_from_tags(p) for p in preds], types)


# ------------------------------------------------------------------- train

@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    best_epoch: int | None = None

    @property
    def losses(self) -> list[float]:
        return [e["loss"] for e in self.epochs]

    @property
    def dev_f1(self) -> list[float]:
        return [e["dev_f1"] for e in self.epochs]

    def as_dict(self) -> dict:
        return {"epochs": self.epochs, "best_epoch": self.best_epoch}


def _check_schema(schema: TagSchema, data):
    for seq in data:
        schema.encode(seq.tags)


def train(config: TrainConfig, train_data: Sequence[LabeledSequence] | Dataset,
          dev_data: Sequence[LabeledSequence] | Dataset, schema: TagSchema | None = None,
          model: Model | None = None, progress: Callable[[dict], None] | None = None
          ) -> tuple[Model, History]:
    """Minimize the mean per-sequence loss with Adam; keep the best-dev checkpoint."""
    if schema is None:
        if not isinstance(train_data, Dataset):
            raise ValueError("a tag schema is required when training on a plain list")
        schema = train_data.schema
    train_data, dev_data = list(train_data), list(dev_data)
    _check_schema(schema, train_data)
    _check_schema(schema, dev_data)
    rng = tc.make_rng(config.seed)
    if model is None:
        model = Model.build(config, schema, train_data, rng)
    history = History()
    if config.max_epochs <= 0:
        return model, history

    trainable = model.trainable()
    state = AdamState()
    best_f1, best_params, stale = -1.0, None, 0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train_data))
        total, n_batches = 0.0, 0
        for bi, start in enumerate(range(0, len(order), config.batch_size)):
            batch = model.make_batch([train_data[i] for i in order[start:start + config.batch_size]])
            nodes = {k: (tc.param(v, name=k) if k in trainable else tc.const(v))
                     for k, v in model.params.items()}
            try:
                loss = model.loss(batch, nodes, train=True, rng=rng)
            except tc.NonFiniteError as exc:
                raise TrainingDiverged(f"non-finite values at epoch {epoch}, batch {bi}: {exc}") from exc
            value = float(loss.value)
            if not math.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch {bi}")
            grads = tc.gradients(loss, {k: nodes[k] for k in trainable})
            clip_global_norm(grads, config.clip_norm)
            new_params, state = adam_step(model.params, grads, state, config.lr)
            model.params = new_params
            model.after_update()
            total += value
            n_batches += 1
        dev_f1 = evaluate_model(model, dev_data, schema.types).macro_f1 if dev_data else 0.0
        rec = {"epoch": epoch, "loss": total / n_batches, "dev_f1": dev_f1}
        history.epochs.append(rec)
        log.info("epoch %d loss %.4f dev macro-F1 %.4f", epoch, rec["loss"], dev_f1)
        if progress:
            progress(rec)
        if dev_f1 > best_f1:
            best_f1, stale = dev_f1, 0
            best_params = {k: v.copy() for k, v in model.params.items()}
            history.best_epoch = epoch
        else:
            stale += 1
            if stale >= config.patience:
                break
    model.params = best_params
    return model, history


# ----------------------------------------------------------- random search

@dataclass
class SearchSpace:
    units: tuple = (100, 150, 200, 250, 300)
    layers: tuple = (1, 2, 3, 4)
    batch_size: tuple = (8, 12, 16, 24, 32)
    dropout: tuple = (0.2, 0.3, 0.4, 0.5, 0.6)
    word_dropout: tuple = (0.0, 0.05, 0.1)

    def sample(self, rng: np.random.Generator) -> dict:
        return {name: getattr(self, name)[int(rng.integers(len(getattr(self, name))))]
                for name in ("units", "layers", "batch_size", "dropout", "word_dropout")}


def apply_trial(base: TrainConfig, trial: Mapping) -> TrainConfig:
    cfg = copy.deepcopy(base)
    enc = cfg.encoder
    enc.units, enc.layers = int(trial["units"]), int(trial["layers"])
    if enc.kind == "dilated_cnn":
        enc.dilations = [2 ** i for i in range(enc.layers)]
    if enc.kind == "transformer":
        enc.ff_dim = 4 * enc.units
    cfg.batch_size = int(trial["batch_size"])
    cfg.dropout = float(trial["dropout"])
    cfg.word_dropout = float(trial["word_dropout"])
    return cfg


@dataclass
class SearchResult:
    best: dict
    best_score: float
    trials: list[dict]


def random_search(space: SearchSpace, budget: int, seed: int, objective: Callable[[dict], float],
                  log_path=None, workers: int = 1) -> SearchResult:
    """Uniform random search; ties keep the earliest trial."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = tc.make_rng(seed)
    configs = [space.sample(rng) for _ in range(budget)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            scores = list(pool.map(objective, configs))
    else:
        scores = [objective(c) for c in configs]
    trials = [{**c, "trial": i, "score": float(s)} for i, (c, s) in enumerate(zip(configs, scores))]
    if log_path is not None:
        atomic_write(log_path, "".join(json.dumps(t, sort_keys=True) + "\n" for t in trials))
    best = max(range(budget), key=lambda i: (scores[i], -i))
    return SearchResult(configs[best], float(scores[best]), trials)


@dataclass
class CrossValObjective:
    """Mean dev macro-F1 over Monte-Carlo folds for one trial; picklable for workers."""

    base: TrainConfig
    data: Dataset
    folds: int = 5
    dev_fraction: float = 0.15
    seed: int = 0

    def __call__(self, trial: Mapping) -> float:
        cfg = apply_trial(self.base, trial)
        scores = []
        for tr, dv in monte_carlo_splits(len(self.data), self.folds, self.dev_fraction, self.seed):
            _, hist = train(cfg, self.data.subset(tr), self.data.subset(dv), self.data.schema)
            scores.append(max(hist.dev_f1) if hist.epochs else 0.0)
        return float(np.mean(scores))
