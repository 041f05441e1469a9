"""Ranking and error metrics: RMSE, precision@k, MP-k, pooled PR curve, optimal F1."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from .data import AdoptionMatrix
from .predict import PredictionSheet


class NoPositivesError(ValueError):
    """A PR curve needs at least one positive pair."""


class PRPoint(NamedTuple):
    precision: float
    recall: float
    threshold: float


@dataclass(frozen=True)
class MetricReport:
    """Metrics of one evaluation pass.

    optimal_f1 is computed on the pooled PR curve (primary); the per-app
    averaged variant is reported alongside.  clipped_apps counts test apps
    whose evaluated set was smaller than the requested k.
    """

    rmse: float
    mp_at_k: dict[int, float]
    optimal_f1: float
    pr_points: tuple[PRPoint, ...] = ()
    optimal_f1_per_app: float | None = None
    clipped_apps: int = 0
    skipped_apps: int = 0
    extras: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rmse": self.rmse,
            "mp_at_k": {str(k): v for k, v in sorted(self.mp_at_k.items())},
            "optimal_f1": self.optimal_f1,
            "optimal_f1_per_app": self.optimal_f1_per_app,
            "clipped_apps": self.clipped_apps,
            "skipped_apps": self.skipped_apps,
            "extras": dict(sorted(self.extras.items())),
            "pr_points": [[p.threshold, p.precision, p.recall] for p in self.pr_points],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def pr_points_csv(points: Sequence[PRPoint]) -> list[str]:
    lines = ["threshold,precision,recall"]
    lines += [f"{p.threshold!r},{p.precision!r},{p.recall!r}" for p in points]
    return lines


def rmse(pred: Sequence[float] | np.ndarray, truth: Sequence[float] | np.ndarray) -> float:
    """sqrt(mean((pred - truth)^2)) over aligned pairs."""
    p = np.asarray(pred, dtype=float)
    t = np.asarray(truth, dtype=float)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError("pred and truth must be 1-d of equal length")
    if p.size == 0:
        raise ValueError("rmse of empty input")
    return float(np.sqrt(np.mean((p - t) ** 2)))


def rank_users(scores: np.ndarray) -> np.ndarray:
    """User indices sorted by descending score; ties broken by ascending id."""
    scores = np.asarray(scores, dtype=float)
    return np.argsort(-scores, kind="stable")


def precision_at_k(scores: np.ndarray, adopters: Sequence[int] | np.ndarray, k: int) -> float:
    """|top-k by score that adopted| / k with deterministic id tie-breaking."""
    scores = np.asarray(scores, dtype=float)
    if not 1 <= k <= scores.size:
        raise ValueError(f"k={k} out of range [1, {scores.size}]")
    top = rank_users(scores)[:k]
    adopter_set = np.zeros(scores.size, dtype=bool)
    adopter_set[np.asarray(adopters, dtype=int)] = True
    return float(adopter_set[top].sum() / k)


def per_app_precisions(
    sheets: Sequence[PredictionSheet], truth: AdoptionMatrix, k: int = 5
) -> tuple[np.ndarray, np.ndarray]:
    """Per-app precision@k on each sheet's evaluated users.

    Apps with fewer evaluated users than k fall back to the evaluated count;
    the second return flags them.  Positives are the truth adopters among the
    sheet's evaluated users.
    """
    values = np.empty(len(sheets))
    clipped = np.zeros(len(sheets), dtype=bool)
    for i, sheet in enumerate(sheets):
        evaluated = sheet.evaluated_users
        if evaluated.size == 0:
            raise ValueError(f"sheet for app {sheet.app_id} has no evaluated users")
        local_scores = sheet.scores[evaluated]
        local_adopters = np.flatnonzero(truth.installed[evaluated, sheet.app_id])
        kk = min(k, evaluated.size)
        clipped[i] = kk < k
        values[i] = precision_at_k(local_scores, local_adopters, kk)
    return values, clipped


def mean_precision_at_k(
    sheets: Sequence[PredictionSheet], truth: AdoptionMatrix, k: int = 5
) -> float:
    """Unweighted mean of per-app precision@k over the test apps."""
    if not sheets:
        raise ValueError("no sheets to evaluate")
    values, _ = per_app_precisions(sheets, truth, k)
    return float(np.mean(values))


def pr_curve(
    scores: Sequence[float] | np.ndarray, truth: Sequence[int] | np.ndarray
) -> tuple[PRPoint, ...]:
    """Pooled precision-recall sweep over the distinct scores, descending.

    Each threshold t predicts positive on score >= t; precision = TP/(TP+FP),
    recall = TP/P.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(truth, dtype=bool)
    if s.shape != y.shape or s.ndim != 1 or s.size == 0:
        raise ValueError("scores and truth must be aligned non-empty 1-d")
    positives = int(y.sum())
    if positives == 0:
        raise NoPositivesError("PR curve needs at least one positive pair")
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp_cum = np.cumsum(y_sorted)
    # last index of each tie group marks one distinct threshold
    boundary = np.flatnonzero(np.diff(s_sorted) != 0)
    cut = np.concatenate([boundary, [s.size - 1]])
    points = []
    for idx in cut.tolist():
        tp = int(tp_cum[idx])
        predicted = idx + 1
        points.append(
            PRPoint(
                precision=tp / predicted,
                recall=tp / positives,
                threshold=float(s_sorted[idx]),
            )
        )
    return tuple(points)


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def optimal_f1(points: Sequence[PRPoint]) -> float:
    """Max F1 over the PR points (0 when precision + recall is 0 everywhere)."""
    if not points:
        raise ValueError("optimal_f1 of an empty PR curve")
    return max(f1_score(p.precision, p.recall) for p in points)


def pooled_pairs(
    sheets: Sequence[PredictionSheet], truth: AdoptionMatrix
) -> tuple[np.ndarray, np.ndarray]:
    """Flatten (score, truth-bit) pairs across every sheet's evaluated users."""
    scores = []
    bits = []
    for sheet in sheets:
        evaluated = sheet.evaluated_users
        scores.append(sheet.scores[evaluated])
        bits.append(truth.installed[evaluated, sheet.app_id])
    return np.concatenate(scores), np.concatenate(bits)


def evaluate_sheets(
    sheets: Sequence[PredictionSheet],
    truth: AdoptionMatrix,
    ks: Sequence[int] = (5,),
    skipped_apps: int = 0,
) -> MetricReport:
    """Full MetricReport over one test pass: RMSE, MP-k per k, pooled F1 and PR.

    The per-app-averaged optimal F1 skips apps with no positive evaluated
    user (they have no PR curve).
    """
    if not sheets:
        raise ValueError("no sheets to evaluate")
    scores, bits = pooled_pairs(sheets, truth)
    mp = {}
    clipped_total = 0
    for k in ks:
        values, clipped = per_app_precisions(sheets, truth, k)
        mp[int(k)] = float(np.mean(values))
        clipped_total = max(clipped_total, int(clipped.sum()))
    points = pr_curve(scores, bits)
    per_app_f1 = []
    for sheet in sheets:
        evaluated = sheet.evaluated_users
        app_bits = truth.installed[evaluated, sheet.app_id]
        if app_bits.any():
            per_app_f1.append(optimal_f1(pr_curve(sheet.scores[evaluated], app_bits)))
    return MetricReport(
        rmse=rmse(scores, bits.astype(float)),
        mp_at_k=mp,
        optimal_f1=optimal_f1(points),
        pr_points=points,
        optimal_f1_per_app=float(np.mean(per_app_f1)) if per_app_f1 else None,
        clipped_apps=clipped_total,
        skipped_apps=skipped_apps,
    )
