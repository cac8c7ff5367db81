"""Exact-match classification metrics over intent paths."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..taxonomy import IntentPath, path_prefix, render_intent_path


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def _f1(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass(frozen=True)
class ClassMetrics:
    intent: str
    vertical: str
    precision: float
    recall: float
    f1: float
    support: int
    tp: int
    fp: int
    fn: int


@dataclass(frozen=True)
class Averages:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class GroupMetrics:
    """Accuracy plus micro and macro averages for one slice of the data."""

    n: int
    accuracy: float
    micro: Averages
    macro: Averages
    abstained: int = 0


@dataclass(frozen=True)
class LatencyStats:
    n: int
    p50_ms: float
    p95_ms: float
    mean_ms: float

    @classmethod
    def of(cls, values: Sequence[float]) -> "LatencyStats":
        if not len(values):
            return cls(0, 0.0, 0.0, 0.0)
        a = np.asarray(values, dtype=np.float64)
        return cls(len(a), float(np.percentile(a, 50)), float(np.percentile(a, 95)), float(a.mean()))


@dataclass
class EvalReport:
    n: int
    accuracy: float
    micro: Averages
    macro: Averages
    per_class: list[ClassMetrics]
    per_vertical: dict[str, GroupMetrics]
    per_level_accuracy: list[float]
    abstained: int = 0
    coverage: float | None = None
    fallbacks: int = 0
    latency: dict[str, LatencyStats] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "micro": asdict(self.micro),
            "macro": asdict(self.macro),
            "abstained": self.abstained,
            "coverage": self.coverage,
            "fallbacks": self.fallbacks,
            "per_level_accuracy": list(self.per_level_accuracy),
            "per_vertical": {
                v: {"n": g.n, "accuracy": g.accuracy, "micro": asdict(g.micro), "macro": asdict(g.macro),
                    "abstained": g.abstained}
                for v, g in self.per_vertical.items()
            },
            "per_class": [asdict(c) for c in self.per_class],
            "latency": {k: asdict(s) for k, s in self.latency.items()},
            "config": self.config,
        }


def _group(preds: Sequence[IntentPath | None], golds: Sequence[IntentPath]) -> tuple[GroupMetrics, list[ClassMetrics]]:
    tp: Counter = Counter()
    fp: Counter = Counter()
    fn: Counter = Counter()
    abstained = 0
    for p, g in zip(preds, golds):
        if p == g:
            tp[g] += 1
            continue
        fn[g] += 1
        if p is None:
            abstained += 1
        else:
            fp[p] += 1
    classes = sorted(set(tp) | set(fp) | set(fn), key=lambda t: (t.vertical_id, t.labels))
    rows = []
    for c in classes:
        p = _ratio(tp[c], tp[c] + fp[c])
        r = _ratio(tp[c], tp[c] + fn[c])
        rows.append(ClassMetrics(render_intent_path(c), c.vertical_id, p, r, _f1(p, r),
                                 tp[c] + fn[c], tp[c], fp[c], fn[c]))
    n = len(golds)
    correct = sum(tp.values())
    # An abstention is a false positive for the "no answer" outcome, which keeps
    # micro precision, micro recall and accuracy the same fraction.
    micro_p = _ratio(correct, correct + sum(fp.values()) + abstained)
    micro_r = _ratio(correct, correct + sum(fn.values()))
    micro = Averages(micro_p, micro_r, _f1(micro_p, micro_r))
    if rows:
        macro = Averages(math.fsum(r.precision for r in rows) / len(rows),
                         math.fsum(r.recall for r in rows) / len(rows),
                         math.fsum(r.f1 for r in rows) / len(rows))
    else:
        macro = Averages(0.0, 0.0, 0.0)
    return GroupMetrics(n, _ratio(correct, n), micro, macro, abstained), rows


def _level_accuracy(preds: Sequence[IntentPath | None], golds: Sequence[IntentPath]) -> list[float]:
    depth = max(g.depth for g in golds)
    out = []
    for d in range(1, depth + 1):
        hits = total = 0
        for p, g in zip(preds, golds):
            if g.depth < d:
                continue
            total += 1
            if p is not None and p.depth >= d and path_prefix(p, d) == path_prefix(g, d):
                hits += 1
        out.append(_ratio(hits, total))
    return out


def compute_metrics(preds: Sequence[IntentPath | None], golds: Sequence[IntentPath],
                    latency: dict[str, Sequence[float]] | None = None,
                    config: dict | None = None) -> EvalReport:
    """Per-class, micro, macro, per-vertical and per-level metrics.

    ``None`` in ``preds`` marks a query that produced no prediction; it counts
    against recall of the gold class without crediting any other class.
    """
    if len(preds) != len(golds):
        raise ValueError(f"length mismatch: {len(preds)} predictions vs {len(golds)} golds")
    if not golds:
        raise ValueError("cannot evaluate an empty set")
    overall, rows = _group(preds, golds)
    per_vertical = {}
    for v in sorted({g.vertical_id for g in golds}):
        idx = [i for i, g in enumerate(golds) if g.vertical_id == v]
        per_vertical[v], _ = _group([preds[i] for i in idx], [golds[i] for i in idx])
    return EvalReport(
        n=overall.n,
        accuracy=overall.accuracy,
        micro=overall.micro,
        macro=overall.macro,
        per_class=rows,
        per_vertical=per_vertical,
        per_level_accuracy=_level_accuracy(preds, golds),
        abstained=overall.abstained,
        latency={k: LatencyStats.of(v) for k, v in (latency or {}).items()},
        config=dict(config or {}),
    )
