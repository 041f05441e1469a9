"""Synthetic multiplex networks and teacher-sampled adoptions with planted parameters.

Generation is two-stage so the data is exactly well-specified for half the
population: context users adopt independently (susceptibility plus a base
popularity pull), then target users adopt from the model conditional with
evidence restricted to context adopters.  Fitting the likelihood of the
target users against context evidence therefore recovers the planted
parameters, which is the correctness oracle for the whole estimator.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import AdoptionMatrix, CandidateNetwork, NetworkStack, popularity_counts
from .model import ModelParams
from .seeds import derive_seed
from .solver import FitConfig, FitResult, fit_mle

WEIGHT_DISTS = ("unit", "uniform")


@dataclass(frozen=True)
class SynthSpec:
    """Shape and planted parameters of one synthetic dataset.

    edge_density may be a scalar (shared) or one value per network.  Weights
    are 1.0 under ``unit`` or drawn from uniform(0, weight_max).  Planted
    susceptibilities are exponential with the given rate; context users'
    stage-one popularity pull is pop_weight times a uniform(0, pop_base_max)
    per-app base draw.
    """

    num_users: int = 400
    num_context_users: int = 200
    num_apps: int = 400
    num_networks: int = 4
    edge_density: tuple[float, ...] | float = (0.01, 0.015, 0.02, 0.03)
    weight_dist: str = "uniform"
    weight_max: float = 1.0
    planted_net_weights: tuple[float, ...] = (0.5, 0.35, 0.2, 0.1)
    planted_pop_weight: float = 0.004
    susceptibility_rate: float = 25.0
    pop_base_max: float = 15.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.num_users < 2 or not 1 <= self.num_context_users < self.num_users:
            raise ValueError("need at least one context and one target user")
        if self.num_apps < 1 or self.num_networks < 1:
            raise ValueError("num_apps and num_networks must be positive")
        dens = self.edge_density
        if np.isscalar(dens):
            dens = (float(dens),) * self.num_networks
        else:
            dens = tuple(float(d) for d in dens)
        if len(dens) != self.num_networks:
            raise ValueError("edge_density must be scalar or one value per network")
        if any(not 0 < d <= 1 for d in dens):
            raise ValueError("edge densities must lie in (0, 1]")
        object.__setattr__(self, "edge_density", dens)
        if self.weight_dist not in WEIGHT_DISTS:
            raise ValueError(f"unknown weight distribution {self.weight_dist!r}")
        if self.weight_max <= 0:
            raise ValueError("weight_max must be positive")
        weights = tuple(float(w) for w in self.planted_net_weights)
        if len(weights) != self.num_networks:
            raise ValueError("planted_net_weights must have one value per network")
        if any(w < 0 for w in weights):
            raise ValueError("planted network weights must be non-negative")
        object.__setattr__(self, "planted_net_weights", weights)
        if self.planted_pop_weight < 0:
            raise ValueError("planted popularity weight must be non-negative")
        if self.susceptibility_rate <= 0:
            raise ValueError("susceptibility rate must be positive")
        if self.pop_base_max < 0:
            raise ValueError("pop_base_max must be non-negative")

    @property
    def context_users(self) -> np.ndarray:
        return np.arange(self.num_context_users)

    @property
    def target_users(self) -> np.ndarray:
        return np.arange(self.num_context_users, self.num_users)


@dataclass(frozen=True)
class TeacherData:
    """Sampled adoptions plus the partition and parameters that generated them."""

    adoptions: AdoptionMatrix
    context_users: np.ndarray
    target_users: np.ndarray
    params: ModelParams

    def __post_init__(self) -> None:
        for name in ("context_users", "target_users"):
            ids = np.asarray(getattr(self, name), dtype=int)
            ids.setflags(write=False)
            object.__setattr__(self, name, ids)


def gen_networks(spec: SynthSpec) -> NetworkStack:
    """M independent symmetric random graphs; deterministic given the seed."""
    nets = []
    for m in range(spec.num_networks):
        rng = np.random.default_rng(derive_seed(spec.seed, "network", m))
        n = spec.num_users
        rows, cols = np.triu_indices(n, k=1)
        edges = rng.random(rows.size) < spec.edge_density[m]
        if spec.weight_dist == "unit":
            values = np.ones(rows.size)
        else:
            values = rng.uniform(0.0, spec.weight_max, rows.size)
        w = np.zeros((n, n))
        w[rows, cols] = values * edges
        w += w.T
        nets.append(
            CandidateNetwork(
                num_users=n,
                weights=w,
                name=f"net{m}",
                kind="binary" if spec.weight_dist == "unit" else "weighted",
            )
        )
    return NetworkStack(networks=tuple(nets))


def planted_params(spec: SynthSpec) -> ModelParams:
    """Planted ModelParams: spec weights plus exponentially drawn susceptibility."""
    rng = np.random.default_rng(derive_seed(spec.seed, "susceptibility"))
    s = rng.exponential(scale=1.0 / spec.susceptibility_rate, size=spec.num_users)
    return ModelParams(
        net_weights=np.asarray(spec.planted_net_weights, dtype=float),
        pop_weight=spec.planted_pop_weight,
        susceptibility=s,
        constrained=True,
    )


def sample_adoptions_teacher(
    stack: NetworkStack, params: ModelParams, spec: SynthSpec
) -> TeacherData:
    """Two-stage teacher sampling (see module docstring).

    Per-app seeds are derived independently, so any evaluation order yields
    the same data.  Timestamps are synthetic ranks with every context adopter
    preceding every target adopter of the same app.
    """
    if params.num_users != spec.num_users or params.num_networks != spec.num_networks:
        raise ValueError("params dimensions do not match spec")
    context = spec.context_users
    target = spec.target_users
    num_users, num_apps = spec.num_users, spec.num_apps
    installed = np.zeros((num_users, num_apps), dtype=bool)
    times = np.full((num_users, num_apps), np.nan)

    # evidence weights from target users to context users, per network
    cross = np.stack([g.weights[np.ix_(target, context)] for g in stack.networks])

    for a in range(num_apps):
        rng = np.random.default_rng(derive_seed(spec.seed, "app", a))
        base_pop = rng.uniform(0.0, spec.pop_base_max)
        z_ctx = params.susceptibility[context] + params.pop_weight * base_pop
        ctx_bits = rng.random(context.size) < -np.expm1(-z_ctx)
        installed[context, a] = ctx_bits
        visible_count = float(ctx_bits.sum())
        exposure = np.tensordot(
            params.net_weights, cross @ ctx_bits.astype(float), axes=1
        )
        z_tgt = (
            params.susceptibility[target]
            + exposure
            + params.pop_weight * visible_count
        )
        tgt_bits = rng.random(target.size) < -np.expm1(-z_tgt)
        installed[target, a] = tgt_bits
        ctx_adopters = context[ctx_bits]
        tgt_adopters = target[tgt_bits]
        times[ctx_adopters, a] = np.arange(ctx_adopters.size)
        times[tgt_adopters, a] = ctx_adopters.size + np.arange(tgt_adopters.size)

    adoptions = AdoptionMatrix(
        num_users=num_users,
        num_apps=num_apps,
        installed=installed,
        install_times=times,
    )
    return TeacherData(
        adoptions=adoptions, context_users=context, target_users=target, params=params
    )


def generate(spec: SynthSpec) -> tuple[NetworkStack, TeacherData]:
    """Networks plus teacher data in one call."""
    stack = gen_networks(spec)
    return stack, sample_adoptions_teacher(stack, planted_params(spec), spec)


def target_probabilities(
    stack: NetworkStack, params: ModelParams, teacher: TeacherData
) -> np.ndarray:
    """Model probability of each (target user, app) cell given the realized context.

    The Monte Carlo consistency oracle: empirical target adoption frequencies
    must match these within binomial error.
    """
    context = teacher.context_users
    target = teacher.target_users
    ev = teacher.adoptions.installed[context, :].astype(float)
    counts = ev.sum(axis=0)
    cross = np.stack([g.weights[np.ix_(target, context)] for g in stack.networks])
    exposure = np.tensordot(params.net_weights, cross @ ev, axes=1)
    z = params.susceptibility[target][:, None] + exposure + params.pop_weight * counts[None, :]
    return -np.expm1(-np.maximum(z, 0.0))


def recovery_fit(
    stack: NetworkStack,
    teacher: TeacherData,
    cfg: FitConfig | None = None,
    train_apps: Sequence[int] | np.ndarray | None = None,
) -> tuple[ModelParams, FitResult]:
    """Fit the model the way the teacher data is well-specified.

    Likelihood terms cover target users only; evidence and the popularity
    channel come from context adopters alone.  Context susceptibilities are
    unidentified and pinned at zero in the result.
    """
    adoptions = teacher.adoptions
    if train_apps is None:
        train_apps = np.arange(adoptions.num_apps)
    context_mask = np.zeros(adoptions.num_users, dtype=bool)
    context_mask[teacher.context_users] = True
    evidence = AdoptionMatrix(
        num_users=adoptions.num_users,
        num_apps=adoptions.num_apps,
        installed=adoptions.installed & context_mask[:, None],
    )
    fit_stack = NetworkStack(
        networks=stack.networks,
        popularity=popularity_counts(adoptions, teacher.context_users),
    )
    return fit_mle(
        fit_stack,
        adoptions,
        train_apps,
        cfg,
        evidence=evidence,
        term_users=teacher.target_users,
    )


@dataclass(frozen=True)
class RecoveryError:
    """Distance between planted and recovered parameters.

    rel_l2_weights and cosine_weights are computed on the concatenated
    (network weights, popularity weight) block; susceptibility_rmse on the
    susceptibility entries of ``target_users`` (all users when omitted).
    """

    rel_l2_weights: float
    cosine_weights: float
    susceptibility_rmse: float

    def to_dict(self) -> dict[str, float]:
        return {
            "rel_l2_weights": self.rel_l2_weights,
            "cosine_weights": self.cosine_weights,
            "susceptibility_rmse": self.susceptibility_rmse,
        }


def recovery_error(
    planted: ModelParams,
    recovered: ModelParams,
    target_users: Sequence[int] | np.ndarray | None = None,
) -> RecoveryError:
    """Compare recovered parameters against the planted truth."""
    if planted.num_networks != recovered.num_networks:
        raise ValueError("network-weight dimension mismatch")
    if planted.num_users != recovered.num_users:
        raise ValueError("susceptibility dimension mismatch")
    w_true = np.append(planted.net_weights, planted.pop_weight)
    w_hat = np.append(recovered.net_weights, recovered.pop_weight)
    denom = float(np.linalg.norm(w_true))
    if denom == 0:
        raise ValueError("planted weight block is all zero")
    rel_l2 = float(np.linalg.norm(w_hat - w_true)) / denom
    hat_norm = float(np.linalg.norm(w_hat))
    cosine = 0.0 if hat_norm == 0 else float(w_hat @ w_true) / (hat_norm * denom)
    users = (
        np.arange(planted.num_users)
        if target_users is None
        else np.asarray(target_users, dtype=int)
    )
    diff = recovered.susceptibility[users] - planted.susceptibility[users]
    s_rmse = float(np.sqrt(np.mean(diff**2)))
    return RecoveryError(
        rel_l2_weights=rel_l2, cosine_weights=cosine, susceptibility_rmse=s_rmse
    )
