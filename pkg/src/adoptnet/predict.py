"""Per-user adoption scores for one app under the three observation regimes.

Standard mode conditions on every other user's true adoption (a user's own
bit never feeds their own potential because the diagonal is zero).  Future
mode sees only the early adopters and ranks everyone else.  Transfer mode
applies parameters fitted on an observable user group to the remaining
users, imputing the missing susceptibilities.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import NetworkStack
from .model import ModelParams, adoption_probability, composite_potential, potential_table
from .solver import RegressionParams


@dataclass(frozen=True)
class PredictionSheet:
    """Scores for one app: who was ranked, and whose adoption was the evidence."""

    app_id: int
    scores: np.ndarray
    evaluated_users: np.ndarray
    evidence_users: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=float)
        if np.any(~np.isfinite(scores)) or np.any(scores < 0) or np.any(scores > 1):
            raise ValueError("scores must be finite and in [0, 1]")
        scores.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        for field in ("evaluated_users", "evidence_users"):
            ids = np.asarray(getattr(self, field), dtype=int)
            ids.setflags(write=False)
            object.__setattr__(self, field, ids)

    def csv_rows(self) -> list[str]:
        """`app_id,user_id,score,evaluated` rows, one per user."""
        evaluated = np.zeros(self.scores.size, dtype=bool)
        evaluated[self.evaluated_users] = True
        return [
            f"{self.app_id},{u},{float(self.scores[u])!r},{int(evaluated[u])}"
            for u in range(self.scores.size)
        ]


def restrict_evaluated(sheet: PredictionSheet, users: np.ndarray) -> PredictionSheet:
    """Sheet with evaluated_users intersected with ``users`` (order-preserving)."""
    keep = np.isin(sheet.evaluated_users, np.asarray(users, dtype=int))
    return PredictionSheet(
        app_id=sheet.app_id,
        scores=sheet.scores,
        evaluated_users=sheet.evaluated_users[keep],
        evidence_users=sheet.evidence_users,
    )


def score_app(
    params: ModelParams,
    stack: NetworkStack,
    adopted: np.ndarray,
    popularity: float = 0.0,
    app_id: int = -1,
) -> PredictionSheet:
    """Standard-mode scores: every user ranked, conditioned on all other users."""
    adopted = np.asarray(adopted, dtype=bool)
    table = potential_table(stack, adopted, popularity)
    exposure = composite_potential(params, table)
    scores = adoption_probability(params.susceptibility, exposure)
    return PredictionSheet(
        app_id=app_id,
        scores=scores,
        evaluated_users=np.arange(stack.num_users),
        evidence_users=np.flatnonzero(adopted),
    )


def score_future(
    params: ModelParams,
    stack: NetworkStack,
    early_adopted: np.ndarray,
    popularity_visible: float = 0.0,
    app_id: int = -1,
) -> PredictionSheet:
    """Future-mode scores: evidence and popularity from early adopters only.

    Early adopters drop out of the ranked set; everyone else is scored as a
    potential later adopter.
    """
    early = np.asarray(early_adopted, dtype=bool)
    table = potential_table(stack, early, popularity_visible)
    exposure = composite_potential(params, table)
    scores = adoption_probability(params.susceptibility, exposure)
    evaluated = np.flatnonzero(~early)
    return PredictionSheet(
        app_id=app_id,
        scores=scores,
        evaluated_users=evaluated,
        evidence_users=np.flatnonzero(early),
    )


def score_transfer(
    params_observable: ModelParams,
    stack: NetworkStack,
    adopted: np.ndarray,
    observable_users: Sequence[int] | np.ndarray,
    popularity_visible: float = 0.0,
    impute: str = "mean",
    app_id: int = -1,
) -> PredictionSheet:
    """Transfer-mode scores for users outside the observable group.

    ``params_observable`` was fitted on the observable users alone, so its
    susceptibility vector follows the ascending order of ``observable_users``.
    Evidence is restricted to observable adopters regardless of what
    ``adopted`` carries for the others; unobservable users get susceptibility
    0 (zero mode) or the mean fitted value (mean mode, the default).
    """
    if impute not in ("zero", "mean"):
        raise ValueError(f"unknown imputation mode {impute!r}")
    observable = np.sort(np.asarray(observable_users, dtype=int))
    if observable.size != params_observable.num_users:
        raise ValueError("observable group size does not match fitted parameters")
    num_users = stack.num_users
    observable_mask = np.zeros(num_users, dtype=bool)
    observable_mask[observable] = True
    evidence = np.asarray(adopted, dtype=bool) & observable_mask

    fitted = params_observable.susceptibility
    imputed = 0.0 if impute == "zero" else float(fitted.mean())
    susceptibility = np.full(num_users, imputed)
    susceptibility[observable] = fitted

    table = potential_table(stack, evidence, popularity_visible)
    full_params = ModelParams(
        net_weights=params_observable.net_weights,
        pop_weight=params_observable.pop_weight,
        susceptibility=susceptibility,
        constrained=params_observable.constrained,
    )
    exposure = composite_potential(full_params, table)
    scores = adoption_probability(susceptibility, exposure)
    return PredictionSheet(
        app_id=app_id,
        scores=scores,
        evaluated_users=np.flatnonzero(~observable_mask),
        evidence_users=np.flatnonzero(evidence),
    )


def regression_scores(
    reg: RegressionParams,
    stack: NetworkStack,
    adopted: np.ndarray,
    popularity: float,
    activity: np.ndarray,
) -> np.ndarray:
    """Baseline linear scores clipped to [0, 1].

    ``activity`` is the per-user training-app install count (the same feature
    the regression was fitted on).
    """
    table = potential_table(stack, np.asarray(adopted, dtype=bool), popularity)
    linear = (
        reg.net_coefs @ table.per_network
        + reg.pop_coef * popularity
        + reg.activity_coef * np.asarray(activity, dtype=float)
        + reg.intercept
    )
    return np.clip(linear, 0.0, 1.0)
