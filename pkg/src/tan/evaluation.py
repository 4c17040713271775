"""Thresholding and pooled (micro) precision / recall / F1."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .corpus import CategoryInventory


class InventoryMismatchError(ValueError):
    pass


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def f1_score(p: float, r: float) -> float:
    return _safe_div(2 * p * r, p + r)


def assign_categories(probabilities, threshold: float = 0.5, argmax_fallback: bool = False) -> set[int]:
    """Indices whose probability strictly exceeds ``threshold``."""
    probs = np.asarray(probabilities)
    chosen = {int(i) for i in np.flatnonzero(probs > threshold)}
    if not chosen and argmax_fallback and probs.size:
        chosen = {int(np.argmax(probs))}
    return chosen


def _counts(gold: Sequence[Iterable[Hashable]], pred: Sequence[Iterable[Hashable]]):
    if len(gold) != len(pred):
        raise ValueError(f"gold has {len(gold)} sentences, pred has {len(pred)}")
    tp = fp = fn = 0
    for g, p in zip(gold, pred):
        g, p = set(g), set(p)
        tp += len(g & p)
        fp += len(p - g)
        fn += len(g - p)
    return tp, fp, fn


def micro_prf(gold: Sequence[Iterable[Hashable]], pred: Sequence[Iterable[Hashable]]) -> tuple[float, float, float]:
    tp, fp, fn = _counts(gold, pred)
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    return p, r, f1_score(p, r)


@dataclass
class CategoryScore:
    p: float
    r: float
    f1: float
    tp: int
    fp: int
    fn: int


@dataclass
class MetricsReport:
    p: float
    r: float
    f1: float
    threshold: float
    n_sentences: int
    per_category: dict[str, CategoryScore] = field(default_factory=dict)

    @property
    def tp(self) -> int:
        return sum(s.tp for s in self.per_category.values())

    @property
    def fp(self) -> int:
        return sum(s.fp for s in self.per_category.values())

    @property
    def fn(self) -> int:
        return sum(s.fn for s in self.per_category.values())

    def to_json(self) -> dict:
        return {
            "micro": {"p": self.p, "r": self.r, "f1": self.f1},
            "per_category": {
                name: {"p": s.p, "r": s.r, "f1": s.f1, "tp": s.tp, "fp": s.fp, "fn": s.fn}
                for name, s in self.per_category.items()
            },
            "threshold": self.threshold,
            "n_sentences": self.n_sentences,
        }


def report_from_sets(
    gold: Sequence[set[int]], pred: Sequence[set[int]], inventory: CategoryInventory, threshold: float
) -> MetricsReport:
    per = {}
    for i, name in enumerate(inventory.names):
        tp, fp, fn = _counts([{i} & g for g in gold], [{i} & q for q in pred])
        cp, cr = _safe_div(tp, tp + fp), _safe_div(tp, tp + fn)
        per[name] = CategoryScore(cp, cr, f1_score(cp, cr), tp, fp, fn)
    p, r, f1 = micro_prf(gold, pred)
    return MetricsReport(p, r, f1, threshold, len(gold), per)


def report_from_probabilities(
    probs: np.ndarray, labels: np.ndarray, inventory: CategoryInventory, threshold: float, argmax_fallback: bool = False
) -> MetricsReport:
    gold = [set(np.flatnonzero(row).tolist()) for row in np.asarray(labels)]
    pred = [assign_categories(row, threshold, argmax_fallback) for row in np.asarray(probs)]
    return report_from_sets(gold, pred, inventory, threshold)


def evaluate(model, dataset, threshold: float | None = None, inventory: CategoryInventory | None = None, argmax_fallback: bool | None = None) -> MetricsReport:
    """Forward every sentence with dropout off and score at ``threshold``.

    ``inventory`` is the dataset's category inventory; it must equal the model's.
    """
    from .model import predict_proba

    if inventory is not None and tuple(inventory.names) != tuple(model.inventory.names):
        raise InventoryMismatchError(
            f"dataset categories {inventory.names} do not match model categories {model.inventory.names}"
        )
    threshold = model.threshold if threshold is None else threshold
    if argmax_fallback is None:
        argmax_fallback = model.config.argmax_fallback
    if not dataset:
        return report_from_sets([], [], model.inventory, threshold)
    c = len(model.inventory)
    labels = np.stack([s.label_vector for s in dataset])
    if labels.shape[1] != c:
        raise InventoryMismatchError(f"label vectors have {labels.shape[1]} categories, model has {c}")
    probs = predict_proba(model, dataset)
    return report_from_probabilities(probs, labels, model.inventory, threshold, argmax_fallback)


def sweep_threshold(probs: np.ndarray, labels: np.ndarray, step: float = 0.05) -> tuple[float, float]:
    """Best ``(threshold, micro_f1)`` on a grid; ties go to the value closest to 0.5."""
    gold = [set(np.flatnonzero(row).tolist()) for row in np.asarray(labels)]
    grid = np.round(np.arange(step, 1.0 - 1e-9, step), 10)
    best = (0.5, -1.0)
    for t in grid:
        pred = [assign_categories(row, t) for row in probs]
        f1 = micro_prf(gold, pred)[2]
        if f1 > best[1] or (f1 == best[1] and abs(t - 0.5) < abs(best[0] - 0.5)):
            best = (float(t), f1)
    return best
