"""Constrained maximization of the training objective, plus the baselines.

The main fit is projected-gradient ascent with Armijo backtracking (shrink
0.5, sufficient-increase 1e-4, step reset to 1.0 each iteration); projection
is componentwise max(., 0) on every constrained coordinate, so iterates stay
feasible and the concave objective rises monotonically.  The regression
baseline reuses the same machinery on a quadratic loss.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import AdoptionMatrix, NetworkStack
from .model import (
    ModelParams,
    TrainingTerms,
    objective_gradient,
    objective_value,
    training_terms,
)

ARMIJO_SHRINK = 0.5
ARMIJO_SUFFICIENT = 1e-4
MIN_STEP = 1e-20


class SolverError(RuntimeError):
    """The optimizer hit a non-finite objective value."""


@dataclass(frozen=True)
class FitConfig:
    """Optimizer settings.

    init_net_weight of None means 1/num_networks (also used for the
    popularity weight).  grad_tol applies to the infinity norm of the
    projected gradient; obj_tol to the objective change relative to
    max(1, |objective|).  The fix_* flags freeze a parameter block at zero;
    allow_negative_net_weights lifts the sign constraint on the network
    weights only.
    """

    max_iters: int = 10_000
    grad_tol: float = 1e-6
    obj_tol: float = 1e-9
    init_net_weight: float | None = None
    init_susceptibility: float = 0.1
    allow_negative_net_weights: bool = False
    fix_susceptibility_at_zero: bool = False
    fix_net_weights_at_zero: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.grad_tol <= 0 or self.obj_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.init_susceptibility < 0:
            raise ValueError("init_susceptibility must be non-negative")


@dataclass(frozen=True)
class FitResult:
    """Convergence record for one fit."""

    iterations: int
    final_objective: float
    converged: bool
    grad_norm: float

    def to_json(self) -> str:
        return json.dumps(
            {
                "iterations": self.iterations,
                "final_objective": self.final_objective,
                "converged": self.converged,
                "grad_norm": self.grad_norm,
            },
            indent=2,
            sort_keys=True,
        )


def _projected_ascent(
    value: Callable[[np.ndarray], float],
    grad: Callable[[np.ndarray], np.ndarray],
    theta0: np.ndarray,
    nonneg: np.ndarray,
    frozen: np.ndarray,
    cfg: FitConfig,
) -> tuple[np.ndarray, FitResult]:
    """Maximize value() from theta0 under componentwise constraints.

    Frozen coordinates keep their initial value; nonneg coordinates are
    projected onto [0, inf).  Convergence is declared on the projected
    gradient's infinity norm or on the relative objective change, whichever
    triggers first; running out of line-search steps counts as a zero-change
    iteration and therefore also terminates.
    """
    theta0 = np.asarray(theta0, dtype=float)

    def project(t: np.ndarray) -> np.ndarray:
        out = t.copy()
        out[nonneg] = np.maximum(out[nonneg], 0.0)
        out[frozen] = theta0[frozen]
        return out

    def projected_gradient(t: np.ndarray, g: np.ndarray) -> np.ndarray:
        pg = g.copy()
        pg[nonneg & (t <= 0.0) & (g < 0.0)] = 0.0
        return pg

    theta = project(theta0)
    try:
        current = value(theta)
    except FloatingPointError as exc:
        raise SolverError(f"non-finite objective at the initial point: {exc}") from exc

    iterations = 0
    converged = False
    while iterations < cfg.max_iters:
        g = grad(theta)
        g[frozen] = 0.0
        if np.abs(projected_gradient(theta, g)).max() <= cfg.grad_tol:
            converged = True
            break
        step = 1.0
        accepted = False
        cand = theta
        cand_val = current
        while step > MIN_STEP:
            cand = project(theta + step * g)
            try:
                cand_val = value(cand)
            except FloatingPointError as exc:
                raise SolverError(
                    f"non-finite objective at iteration {iterations + 1}"
                ) from exc
            if cand_val >= current + ARMIJO_SUFFICIENT * float(g @ (cand - theta)):
                accepted = True
                break
            step *= ARMIJO_SHRINK
        if not accepted:
            # no step produces sufficient increase: numerically at the optimum
            converged = True
            break
        iterations += 1
        delta = cand_val - current
        theta, current = cand, cand_val
        if abs(delta) <= cfg.obj_tol * max(1.0, abs(current)):
            converged = True
            break

    final_g = grad(theta)
    final_g[frozen] = 0.0
    grad_norm = float(np.abs(projected_gradient(theta, final_g)).max())
    return theta, FitResult(
        iterations=iterations,
        final_objective=current,
        converged=converged,
        grad_norm=grad_norm,
    )


def fit_mle(
    stack: NetworkStack,
    adoptions: AdoptionMatrix,
    train_apps: Sequence[int] | np.ndarray,
    cfg: FitConfig | None = None,
    *,
    evidence: AdoptionMatrix | None = None,
    term_users: Sequence[int] | np.ndarray | None = None,
) -> tuple[ModelParams, FitResult]:
    """Maximum-likelihood fit of the composite-network model on ``train_apps``.

    ``evidence`` and ``term_users`` support fits whose likelihood terms cover
    only a user subset, conditioned on a different adoption matrix (teacher
    recovery); both default to ordinary training.  Coordinates that cannot
    affect the objective (an identically-zero potential block, an all-zero
    popularity channel, a user outside term_users) are pinned at zero, so the
    returned parameters are the minimum-norm representative on flat
    directions.
    """
    cfg = cfg or FitConfig()
    terms = training_terms(
        stack, adoptions, train_apps, evidence=evidence, term_users=term_users
    )
    full_users = terms.num_users
    active = np.flatnonzero(terms.term_users)
    if active.size == 0:
        raise ValueError("term_users excludes every user")
    if active.size < full_users:
        # all per-iteration work shrinks to the rows that carry terms
        terms = TrainingTerms(
            potentials=terms.potentials[:, active, :],
            popularity=terms.popularity,
            labels=terms.labels[active, :],
            term_users=np.ones(active.size, dtype=bool),
        )
    num_users = terms.num_users
    num_nets = terms.num_networks
    init_w = cfg.init_net_weight if cfg.init_net_weight is not None else 1.0 / num_nets

    # Bring every shared feature channel to unit max so one Armijo step length
    # suits all coordinate blocks; the optimum is mapped back on exit.  The
    # exponents, and hence the objective, are unchanged by this.
    pot_scale = terms.potentials.max(axis=(1, 2))
    pot_scale = np.where(pot_scale > 0.0, pot_scale, 1.0)
    pop_scale = float(terms.popularity.max()) if terms.popularity.size else 0.0
    if pop_scale <= 0.0:
        pop_scale = 1.0
    if np.any(pot_scale != 1.0) or pop_scale != 1.0:
        terms = TrainingTerms(
            potentials=terms.potentials / pot_scale[:, None, None],
            popularity=terms.popularity / pop_scale,
            labels=terms.labels,
            term_users=terms.term_users,
        )

    s_idx = np.arange(num_users)
    w_idx = num_users + np.arange(num_nets)
    pop_idx = num_users + num_nets

    theta0 = np.zeros(num_users + num_nets + 1)
    theta0[s_idx] = 0.0 if cfg.fix_susceptibility_at_zero else cfg.init_susceptibility
    theta0[w_idx] = 0.0 if cfg.fix_net_weights_at_zero else init_w * pot_scale
    has_pop = bool(np.any(terms.popularity != 0.0))
    theta0[pop_idx] = init_w * pop_scale if has_pop else 0.0

    frozen = np.zeros(theta0.size, dtype=bool)
    frozen[s_idx] = cfg.fix_susceptibility_at_zero
    frozen[w_idx] = cfg.fix_net_weights_at_zero
    frozen[pop_idx] = not has_pop
    flat_nets = ~np.any(terms.potentials != 0.0, axis=(1, 2))
    theta0[w_idx[flat_nets]] = 0.0
    frozen[w_idx[flat_nets]] = True

    nonneg = np.ones(theta0.size, dtype=bool)
    if cfg.allow_negative_net_weights:
        nonneg[w_idx] = False

    def value(t: np.ndarray) -> float:
        return objective_value(terms, t[s_idx], t[w_idx], t[pop_idx])

    def gradient(t: np.ndarray) -> np.ndarray:
        gs, gw, gp = objective_gradient(terms, t[s_idx], t[w_idx], t[pop_idx])
        return np.concatenate([gs, gw, [gp]])

    theta, result = _projected_ascent(value, gradient, theta0, nonneg, frozen, cfg)
    susceptibility = theta[s_idx]
    if active.size < full_users:
        # users without likelihood terms keep the zero convention
        expanded = np.zeros(full_users)
        expanded[active] = susceptibility
        susceptibility = expanded
    params = ModelParams(
        net_weights=theta[w_idx] / pot_scale,
        pop_weight=float(theta[pop_idx]) / pop_scale,
        susceptibility=susceptibility,
        constrained=not cfg.allow_negative_net_weights,
    )
    return params, result


def nonneg_least_squares(
    features: np.ndarray, targets: np.ndarray, cfg: FitConfig | None = None
) -> np.ndarray:
    """Minimize ||features @ beta - targets||^2 subject to beta >= 0.

    Shares the projected-gradient machinery (the negated quadratic loss is
    concave).  Starts from the zero vector, which is feasible.
    """
    cfg = cfg or FitConfig()
    F = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if F.ndim != 2 or y.shape != (F.shape[0],):
        raise ValueError("features must be (n, d) with matching targets")

    def value(beta: np.ndarray) -> float:
        r = F @ beta - y
        v = -0.5 * float(r @ r)
        if not np.isfinite(v):
            raise FloatingPointError("non-finite quadratic loss")
        return v

    def gradient(beta: np.ndarray) -> np.ndarray:
        return -(F.T @ (F @ beta - y))

    beta0 = np.zeros(F.shape[1])
    nonneg = np.ones(F.shape[1], dtype=bool)
    frozen = np.zeros(F.shape[1], dtype=bool)
    beta, _ = _projected_ascent(value, gradient, beta0, nonneg, frozen, cfg)
    return beta


@dataclass(frozen=True)
class RegressionParams:
    """Non-negative regression coefficients for the baseline predictor.

    Scores are clip(net_coefs . potentials + pop_coef * popularity
    + activity_coef * apps_per_user + intercept, 0, 1).
    """

    net_coefs: np.ndarray
    pop_coef: float
    activity_coef: float
    intercept: float

    def __post_init__(self) -> None:
        c = np.asarray(self.net_coefs, dtype=float)
        c.setflags(write=False)
        object.__setattr__(self, "net_coefs", c)


def fit_regression(
    stack: NetworkStack,
    adoptions: AdoptionMatrix,
    train_apps: Sequence[int] | np.ndarray,
    cfg: FitConfig | None = None,
) -> RegressionParams:
    """Non-negative least squares of adoption bits on evidence features.

    One row per training (user, app) cell; columns are the per-network
    potentials, the app's popularity, the user's training-app install count,
    and an intercept.  All coefficients are constrained non-negative.
    """
    apps = np.asarray(train_apps, dtype=int)
    if apps.size == 0:
        raise ValueError("train_apps is empty")
    ev = adoptions.installed[:, apps].astype(float)
    num_users, num_train = ev.shape
    columns = [(g.weights @ ev).ravel() for g in stack.networks]
    if stack.popularity is not None:
        pop = stack.popularity[apps]
    else:
        pop = np.zeros(num_train)
    columns.append(np.broadcast_to(pop, (num_users, num_train)).ravel())
    activity = ev.sum(axis=1)  # training apps only: test installs must not leak in
    columns.append(np.repeat(activity, num_train))
    columns.append(np.ones(num_users * num_train))
    F = np.column_stack(columns)
    y = ev.ravel()
    coef = nonneg_least_squares(F, y, cfg)
    num_nets = stack.num_networks
    return RegressionParams(
        net_coefs=coef[:num_nets],
        pop_coef=float(coef[num_nets]),
        activity_coef=float(coef[num_nets + 1]),
        intercept=float(coef[num_nets + 2]),
    )


def random_baseline(num_users: int, seed: int) -> np.ndarray:
    """I.i.d. uniform(0,1) scores from a seeded generator."""
    if num_users < 1:
        raise ValueError("num_users must be positive")
    return np.random.default_rng(seed).random(num_users)
