"""Composite-network adoption model: potentials, probabilities, likelihood.

A user's exposure to an app is the weighted count of adopting neighbours,
accumulated per candidate network and combined with learned non-negative
weights; an exogenous per-app popularity value enters through one extra
learned weight.  Adoption probability is 1 - exp(-(susceptibility + exposure)),
so independent evidence channels compound multiplicatively on the
non-adoption side and the log-likelihood is concave in all parameters.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import AdoptionMatrix, CandidateNetwork, NetworkStack

# Knee of the adopter log term in the training objective: below this exponent
# the term continues linearly (first-order Taylor), which keeps the objective
# finite and concave with a gradient capped near 1/EXPONENT_KNEE.  A boundary
# iterate that pins an adopter cell at z = 0 then sees a strong but
# line-searchable pull instead of a singular one.
EXPONENT_KNEE = 1e-3

# Floor applied when converting an unconstrained negative exponent to a
# probability; irrelevant under the non-negativity constraints.
NEGATIVE_EXPONENT_EPS = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Fitted parameters: per-network weights, popularity weight, susceptibility.

    ``constrained`` records whether the network weights were held >= 0 during
    fitting (susceptibility and the popularity weight always are).
    """

    net_weights: np.ndarray
    pop_weight: float
    susceptibility: np.ndarray
    constrained: bool = True

    def __post_init__(self) -> None:
        w = np.asarray(self.net_weights, dtype=float)
        s = np.asarray(self.susceptibility, dtype=float)
        if w.ndim != 1 or s.ndim != 1:
            raise ValueError("net_weights and susceptibility must be 1-d")
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(s)) and np.isfinite(self.pop_weight)):
            raise ValueError("parameters must be finite")
        if np.any(s < 0):
            raise ValueError("susceptibility must be non-negative")
        if self.pop_weight < 0:
            raise ValueError("popularity weight must be non-negative")
        if self.constrained and np.any(w < 0):
            raise ValueError("negative network weight in constrained parameters")
        w.setflags(write=False)
        s.setflags(write=False)
        object.__setattr__(self, "net_weights", w)
        object.__setattr__(self, "susceptibility", s)
        object.__setattr__(self, "pop_weight", float(self.pop_weight))

    @property
    def num_networks(self) -> int:
        return int(self.net_weights.size)

    @property
    def num_users(self) -> int:
        return int(self.susceptibility.size)

    def to_json(self) -> str:
        # wire format keys: alpha / alpha_pop / s / constrained
        return json.dumps(
            {
                "alpha": self.net_weights.tolist(),
                "alpha_pop": self.pop_weight,
                "s": self.susceptibility.tolist(),
                "constrained": self.constrained,
            },
            indent=2,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        obj = json.loads(text)
        return cls(
            net_weights=np.asarray(obj["alpha"], dtype=float),
            pop_weight=float(obj["alpha_pop"]),
            susceptibility=np.asarray(obj["s"], dtype=float),
            constrained=bool(obj["constrained"]),
        )


@dataclass(frozen=True)
class PotentialTable:
    """Per-network exposure of every user to one app, plus that app's popularity."""

    per_network: np.ndarray  # (num_networks, num_users)
    popularity: float = 0.0

    def __post_init__(self) -> None:
        p = np.asarray(self.per_network, dtype=float)
        if p.ndim != 2:
            raise ValueError("per_network must be (num_networks, num_users)")
        p.setflags(write=False)
        object.__setattr__(self, "per_network", p)


def network_potentials(g: CandidateNetwork, adopted: np.ndarray) -> np.ndarray:
    """Weighted count of adopting neighbours for every user, one network.

    ``adopted`` is the binary adoption vector of one app.  A user's own entry
    never contributes because the diagonal is zero.
    """
    x = np.asarray(adopted, dtype=float)
    if x.shape != (g.num_users,):
        raise ValueError(f"adoption vector shape {x.shape} does not match {g.num_users} users")
    return g.weights @ x


def potential_table(
    stack: NetworkStack, adopted: np.ndarray, popularity: float = 0.0
) -> PotentialTable:
    """Assemble the per-network potential rows for one app."""
    rows = np.stack([network_potentials(g, adopted) for g in stack.networks])
    return PotentialTable(per_network=rows, popularity=float(popularity))


def composite_potential(params: ModelParams, table: PotentialTable) -> np.ndarray:
    """Combined exposure: net_weights . per_network + pop_weight * popularity."""
    if params.num_networks != table.per_network.shape[0]:
        raise ValueError("parameter / table network count mismatch")
    return params.net_weights @ table.per_network + params.pop_weight * table.popularity


def adoption_probability(susceptibility, potential):
    """1 - exp(-(susceptibility + potential)), elementwise.

    Non-negative exponents pass through untouched (0 maps to exactly 0.0); a
    negative exponent, reachable only with unconstrained network weights, is
    floored at NEGATIVE_EXPONENT_EPS so the result stays a probability.
    """
    z = np.asarray(susceptibility, dtype=float) + np.asarray(potential, dtype=float)
    z = np.where(z < 0, NEGATIVE_EXPONENT_EPS, z)
    return -np.expm1(-z)


def log1mexp(z: np.ndarray) -> np.ndarray:
    """log(1 - exp(-z)) for z > 0, evaluated stably on both branches."""
    z = np.asarray(z, dtype=float)
    small = z <= np.log(2.0)
    out = np.empty_like(z)
    out[small] = np.log(-np.expm1(-z[small]))
    out[~small] = np.log1p(-np.exp(-z[~small]))
    return out


@dataclass(frozen=True)
class TrainingTerms:
    """Precomputed pieces of the training objective for a fixed app subset.

    potentials[m, u, t] is user u's exposure to the t-th training app through
    network m, computed from the evidence adoption matrix; labels holds the
    outcomes being explained.  term_users masks which users' outcome terms
    enter the objective (all of them in ordinary training; the target half in
    teacher-recovery fits).
    """

    potentials: np.ndarray  # (M, U, T)
    popularity: np.ndarray  # (T,)
    labels: np.ndarray  # (U, T) bool
    term_users: np.ndarray  # (U,) bool

    @property
    def num_networks(self) -> int:
        return int(self.potentials.shape[0])

    @property
    def num_users(self) -> int:
        return int(self.potentials.shape[1])


def training_terms(
    stack: NetworkStack,
    adoptions: AdoptionMatrix,
    train_apps: Sequence[int] | np.ndarray,
    evidence: AdoptionMatrix | None = None,
    term_users: Sequence[int] | np.ndarray | None = None,
) -> TrainingTerms:
    """Build TrainingTerms for ``train_apps``.

    ``evidence`` defaults to the label matrix itself (standard conditioning).
    ``term_users`` defaults to every user.
    """
    apps = np.asarray(train_apps, dtype=int)
    if apps.size == 0:
        raise ValueError("train_apps is empty")
    if apps.min() < 0 or apps.max() >= adoptions.num_apps:
        raise ValueError("train_apps contains an out-of-range app id")
    if len(np.unique(apps)) != apps.size:
        raise ValueError("train_apps contains duplicates")
    if evidence is None:
        evidence = adoptions
    if evidence.num_users != adoptions.num_users:
        raise ValueError("evidence user universe does not match labels")
    ev = evidence.installed[:, apps].astype(float)
    pot = np.stack([g.weights @ ev for g in stack.networks])
    if stack.popularity is not None:
        if stack.popularity.shape != (adoptions.num_apps,):
            raise ValueError("stack popularity length does not match num_apps")
        pop = stack.popularity[apps]
    else:
        pop = np.zeros(apps.size)
    mask = np.zeros(adoptions.num_users, dtype=bool)
    if term_users is None:
        mask[:] = True
    else:
        mask[np.asarray(term_users, dtype=int)] = True
    return TrainingTerms(
        potentials=pot,
        popularity=pop,
        labels=adoptions.installed[:, apps],
        term_users=mask,
    )


def _exponents(terms: TrainingTerms, s: np.ndarray, w: np.ndarray, w_pop: float) -> np.ndarray:
    return (
        s[:, None]
        + np.tensordot(w, terms.potentials, axes=1)
        + w_pop * terms.popularity[None, :]
    )


def objective_value(terms: TrainingTerms, s: np.ndarray, w: np.ndarray, w_pop: float) -> float:
    """Training log-likelihood at (susceptibility, net weights, pop weight).

    Adopter terms use log(1 - exp(-z)) above EXPONENT_KNEE and its tangent
    line below it, which keeps the whole term concave and exactly matched to
    the gradient; non-adopter terms contribute -max(z, 0), which equals the
    plain -z on the whole constrained feasible set and keeps the objective
    bounded when negative weights are allowed.
    """
    z = _exponents(terms, s, w, w_pop)
    if terms.term_users.all():
        z_act, labels = z, terms.labels
    else:
        z_act, labels = z[terms.term_users], terms.labels[terms.term_users]
    # transcendentals touch only adopter cells; the non-adopter penalty over
    # all active cells minus the adopters' share needs plain arithmetic
    z_adopt = z_act[labels]
    z_knee = np.maximum(z_adopt, EXPONENT_KNEE)
    adopter_part = float(log1mexp(z_knee).sum())
    shortfall = float((z_adopt - z_knee).sum())
    if shortfall:
        adopter_part += shortfall / float(np.expm1(EXPONENT_KNEE))
    penalty = float(np.maximum(z_act, 0.0).sum()) - float(
        np.maximum(z_adopt, 0.0).sum()
    )
    value = adopter_part - penalty
    if not np.isfinite(value):
        raise FloatingPointError("non-finite training objective")
    return value


def objective_gradient(
    terms: TrainingTerms, s: np.ndarray, w: np.ndarray, w_pop: float
) -> tuple[np.ndarray, np.ndarray, float]:
    """Analytic gradient of objective_value, ordered (susceptibility, net, pop).

    Adopter cells contribute exp(-z)/(1 - exp(-z)) evaluated at the floored
    exponent; every non-adopter cell contributes the constant -1 (times the
    cell's potential for the weight blocks).
    """
    z = _exponents(terms, s, w, w_pop)
    all_active = bool(terms.term_users.all())
    labels = (
        terms.labels if all_active else terms.labels & terms.term_users[:, None]
    )
    coef = np.where(labels, 0.0, -1.0)
    if not all_active:
        coef[~terms.term_users, :] = 0.0
    idx = np.nonzero(labels)
    with np.errstate(over="ignore"):
        coef[idx] = 1.0 / np.expm1(np.maximum(z[idx], EXPONENT_KNEE))
    grad_s = coef.sum(axis=1)
    grad_w = np.tensordot(terms.potentials, coef, axes=([1, 2], [0, 1]))
    grad_pop = float(coef.sum(axis=0) @ terms.popularity)
    return grad_s, grad_w, grad_pop


def log_likelihood(
    params: ModelParams,
    stack: NetworkStack,
    adoptions: AdoptionMatrix,
    train_apps: Sequence[int] | np.ndarray,
) -> float:
    """Log-likelihood of the adoption outcomes of ``train_apps`` under ``params``."""
    terms = training_terms(stack, adoptions, train_apps)
    return objective_value(terms, params.susceptibility, params.net_weights, params.pop_weight)


def log_likelihood_gradient(
    params: ModelParams,
    stack: NetworkStack,
    adoptions: AdoptionMatrix,
    train_apps: Sequence[int] | np.ndarray,
) -> np.ndarray:
    """Gradient of log_likelihood, flattened as (susceptibility..., net weights..., pop weight).

    An empty app subset contributes no terms, so the gradient is exactly zero.
    """
    if np.asarray(train_apps).size == 0:
        return np.zeros(params.num_users + params.num_networks + 1)
    terms = training_terms(stack, adoptions, train_apps)
    gs, gw, gp = objective_gradient(
        terms, params.susceptibility, params.net_weights, params.pop_weight
    )
    return np.concatenate([gs, gw, [gp]])
