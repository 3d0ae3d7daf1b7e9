"""Entity-level precision/recall/F1 with exact span matching."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from decimal import ROUND_HALF_DOWN, Decimal
from typing import Iterable, Sequence

from .data import Span


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def f1_score(p: float, r: float) -> float:
    return _ratio(2 * p * r, p + r)


def round_score(x: float, digits: int = 1) -> float:
    """Display rounding with exact halves rounded down (86.55 -> 86.5).

    The value is first snapped to 9 decimals so float noise such as
    95.24999999999999 counts as the half it stands for.
    """
    q = Decimal(1).scaleb(-digits)
    return float(Decimal(repr(round(x, 9))).quantize(q, rounding=ROUND_HALF_DOWN))


@dataclass
class TypeScore:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return _ratio(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> float:
        return _ratio(self.tp, self.tp + self.fn)

    @property
    def f1(self) -> float:
        return f1_score(self.precision, self.recall)


def macro_average(values: Iterable[float]) -> float:
    """Unweighted mean; 0 for an empty collection."""
    values = list(values)
    return sum(values) / len(values) if values else 0.0


@dataclass
class EvalReport:
    per_type: dict[str, TypeScore] = field(default_factory=dict)
    macro_types: tuple[str, ...] = ()

    def _macro(self, attr):
        return macro_average(getattr(self.per_type[t], attr) for t in self.macro_types)

    @property
    def macro_precision(self) -> float:
        return self._macro("precision")

    @property
    def macro_recall(self) -> float:
        return self._macro("recall")

    @property
    def macro_f1(self) -> float:
        """Mean of per-type F1, not F1 of the macro P and R."""
        return self._macro("f1")

    def as_dict(self) -> dict:
        rows = {t: {"tp": s.tp, "fp": s.fp, "fn": s.fn, "precision": s.precision,
                    "recall": s.recall, "f1": s.f1} for t, s in self.per_type.items()}
        return {"per_type": rows, "macro_types": list(self.macro_types),
                "macro": {"precision": self.macro_precision, "recall": self.macro_recall,
                          "f1": self.macro_f1}}

    def table(self, percent: bool = True) -> str:
        k = 100.0 if percent else 1.0

        def row(name, p, r, f):
            return f"{name:<{width}}  " + " ".join(f"{round_score(v * k):6.1f}" for v in (p, r, f))

        width = max([len("macro-avg")] + [len(t) for t in self.per_type])
        lines = [f"{'':<{width}}  {'P':>6} {'R':>6} {'F1':>6}"]
        for t, s in self.per_type.items():
            lines.append(row(t, s.precision, s.recall, s.f1))
        lines.append("-" * len(lines[0]))
        lines.append(row("macro-avg", self.macro_precision, self.macro_recall, self.macro_f1))
        return "\n".join(lines)


def entity_prf(gold: Sequence[Iterable[Span]], pred: Sequence[Iterable[Span]],
               types: Sequence[str] = ()) -> EvalReport:
    """Pool exact (start, end, type) matches over all sequences, per type.

    ``types`` adds rows for types that may be absent; macro averages only
    cover types with at least one gold span.
    """
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sequences, predictions {len(pred)}")
    scores = {t: TypeScore() for t in types}
    gold_types = Counter()
    for g, p in zip(gold, pred):
        g, p = set(g), set(p)
        for s in g:
            gold_types[s.type] += 1
            sc = scores.setdefault(s.type, TypeScore())
            if s in p:
                sc.tp += 1
            else:
                sc.fn += 1
        for s in p - g:
            scores.setdefault(s.type, TypeScore()).fp += 1
    order = list(types) + sorted(t for t in scores if t not in types)
    per_type = {t: scores[t] for t in order}
    return EvalReport(per_type, tuple(t for t in order if gold_types[t]))
