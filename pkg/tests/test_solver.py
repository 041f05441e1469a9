"""Projected-gradient fitting: optimality, feasibility, and invariances."""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from adoptnet.data import AdoptionMatrix, CandidateNetwork, NetworkStack
from adoptnet.model import log_likelihood
from adoptnet.solver import (
    FitConfig,
    FitResult,
    RegressionParams,
    SolverError,
    _projected_ascent,
    fit_mle,
    fit_regression,
    nonneg_least_squares,
    random_baseline,
)


def make_instance(seed, num_users=12, num_networks=2, num_apps=15, density=0.3):
    rng = np.random.default_rng(seed)
    nets = []
    for m in range(num_networks):
        w = np.triu(rng.random((num_users, num_users))
                    * (rng.random((num_users, num_users)) < density), k=1)
        nets.append(CandidateNetwork(num_users=num_users, weights=w + w.T,
                                     name=f"g{m}"))
    installed = rng.random((num_users, num_apps)) < 0.3
    adoptions = AdoptionMatrix(num_users=num_users, num_apps=num_apps,
                               installed=installed)
    stack = NetworkStack(networks=tuple(nets),
                         popularity=installed.sum(axis=0).astype(float))
    return stack, adoptions


def nnls_oracle(F, y):
    """Exact non-negative least squares by enumerating active sets.

    Unique when F has full column rank: exactly one support satisfies the
    complementarity conditions.
    """
    n, d = F.shape
    best = None
    for mask in itertools.product([False, True], repeat=d):
        free = np.array(mask)
        beta = np.zeros(d)
        if free.any():
            sol, *_ = np.linalg.lstsq(F[:, free], y, rcond=None)
            if np.any(sol < -1e-12):
                continue
            beta[free] = np.maximum(sol, 0.0)
        grad = F.T @ (F @ beta - y)
        if np.any(grad[~free] < -1e-8):
            continue
        sse = float(np.sum((F @ beta - y) ** 2))
        if best is None or sse < best[1]:
            best = (beta, sse)
    assert best is not None
    return best[0]


class TestProjectedAscent:
    def test_quadratic_reaches_clipped_target(self):
        # maximizing -||x - t||^2 over x >= 0 has the closed form max(t, 0)
        target = np.array([2.0, -1.5, 0.5, -0.25])

        def value(x):
            return -float(np.sum((x - target) ** 2))

        def grad(x):
            return -2.0 * (x - target)

        nonneg = np.ones(4, dtype=bool)
        frozen = np.zeros(4, dtype=bool)
        x, res = _projected_ascent(value, grad, np.zeros(4), nonneg, frozen,
                                   FitConfig())
        np.testing.assert_allclose(x, [2.0, 0.0, 0.5, 0.0], atol=1e-6)
        assert res.converged

    def test_every_evaluated_point_is_feasible(self):
        target = np.array([1.0, -3.0, 2.0])
        seen = []

        def value(x):
            seen.append(x.copy())
            return -float(np.sum((x - target) ** 2))

        def grad(x):
            return -2.0 * (x - target)

        nonneg = np.array([True, True, False])
        frozen = np.zeros(3, dtype=bool)
        _projected_ascent(value, grad, np.array([0.5, 0.5, -1.0]), nonneg, frozen,
                          FitConfig())
        assert len(seen) > 3
        for x in seen:
            assert x[0] >= 0.0 and x[1] >= 0.0

    def test_accepted_iterates_ascend(self):
        rng = np.random.default_rng(3)
        A = rng.random((8, 5))
        H = A.T @ A + 0.1 * np.eye(5)
        b = rng.random(5)

        values = []

        def value(x):
            v = -0.5 * float(x @ H @ x) + float(b @ x)
            return v

        def grad(x):
            g = -(H @ x) + b
            values.append(value(x))
            return g

        nonneg = np.ones(5, dtype=bool)
        frozen = np.zeros(5, dtype=bool)
        _projected_ascent(value, grad, np.zeros(5), nonneg, frozen, FitConfig())
        # grad is called once per outer iteration, at the accepted point
        assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))

    def test_frozen_coordinates_never_move(self):
        target = np.array([2.0, 2.0])

        def value(x):
            return -float(np.sum((x - target) ** 2))

        def grad(x):
            return -2.0 * (x - target)

        x, _ = _projected_ascent(value, grad, np.zeros(2),
                                 np.ones(2, dtype=bool),
                                 np.array([False, True]), FitConfig())
        assert x[1] == 0.0
        assert x[0] == pytest.approx(2.0, abs=1e-6)


class TestNonnegLeastSquares:
    def test_matches_active_set_enumeration(self):
        # tight tolerances: the comparison target is exact
        cfg = FitConfig(grad_tol=1e-10, obj_tol=1e-15, max_iters=100_000)
        rng = np.random.default_rng(11)
        for _ in range(20):
            F = rng.standard_normal((20, 5))
            y = rng.standard_normal(20)
            got = nonneg_least_squares(F, y, cfg)
            want = nnls_oracle(F, y)
            sse_got = float(np.sum((F @ got - y) ** 2))
            sse_want = float(np.sum((F @ want - y) ** 2))
            assert sse_got <= sse_want + 1e-10
            np.testing.assert_allclose(got, want, atol=1e-5)

    def test_unconstrained_interior_solution(self):
        rng = np.random.default_rng(12)
        F = rng.standard_normal((30, 3))
        beta_true = np.array([0.5, 1.25, 0.75])
        y = F @ beta_true
        np.testing.assert_allclose(nonneg_least_squares(F, y), beta_true, atol=1e-5)

    def test_all_negative_target_gives_zero(self):
        F = np.eye(4)
        y = -np.ones(4)
        assert nonneg_least_squares(F, y).tolist() == [0.0] * 4

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="features"):
            nonneg_least_squares(np.zeros((3, 2)), np.zeros(4))


class TestFitMLE:
    def test_reported_objective_matches_true_space_likelihood(self):
        stack, adoptions = make_instance(0)
        train = np.arange(adoptions.num_apps)
        params, res = fit_mle(stack, adoptions, train)
        assert res.converged
        ll = log_likelihood(params, stack, adoptions, train)
        assert abs(ll - res.final_objective) <= 1e-9 * max(1.0, abs(ll))

    def test_multi_start_agreement(self):
        stack, adoptions = make_instance(1)
        train = np.arange(adoptions.num_apps)
        objectives = []
        for init_w, init_s in [(None, 0.1), (0.9, 0.01), (0.05, 1.0)]:
            _, res = fit_mle(stack, adoptions, train,
                             FitConfig(init_net_weight=init_w,
                                       init_susceptibility=init_s))
            assert res.converged
            objectives.append(res.final_objective)
        spread = max(objectives) - min(objectives)
        assert spread <= 1e-6 * max(1.0, abs(objectives[0]))

    def test_feasibility_of_fit(self):
        stack, adoptions = make_instance(2)
        params, _ = fit_mle(stack, adoptions, np.arange(adoptions.num_apps))
        assert np.all(params.net_weights >= 0.0)
        assert np.all(params.susceptibility >= 0.0)
        assert params.pop_weight >= 0.0
        assert params.constrained

    def test_network_rescaling_recovers_same_model(self):
        stack, adoptions = make_instance(3)
        train = np.arange(adoptions.num_apps)
        base_params, base_res = fit_mle(stack, adoptions, train)
        c = 10.0
        scaled = NetworkStack(
            networks=tuple(
                CandidateNetwork(num_users=g.num_users, weights=c * g.weights,
                                 name=g.name)
                for g in stack.networks
            ),
            popularity=stack.popularity,
        )
        scaled_params, scaled_res = fit_mle(scaled, adoptions, train)
        rel = abs(scaled_res.final_objective - base_res.final_objective)
        assert rel <= 1e-6 * max(1.0, abs(base_res.final_objective))
        np.testing.assert_allclose(scaled_params.net_weights * c,
                                   base_params.net_weights, rtol=1e-4, atol=1e-8)

    def test_no_adopters_collapses_to_zero(self):
        stack, adoptions = make_instance(4)
        empty = AdoptionMatrix(num_users=adoptions.num_users,
                               num_apps=adoptions.num_apps,
                               installed=np.zeros_like(adoptions.installed))
        zero_pop = NetworkStack(networks=stack.networks,
                                popularity=np.zeros(adoptions.num_apps))
        params, res = fit_mle(zero_pop, empty, np.arange(adoptions.num_apps))
        assert res.converged
        assert not params.net_weights.any()
        assert not params.susceptibility.any()
        assert params.pop_weight == 0.0
        assert res.final_objective == 0.0

    def test_zero_network_weight_pinned(self):
        stack, adoptions = make_instance(5)
        with_dead = NetworkStack(
            networks=stack.networks + (
                CandidateNetwork(num_users=adoptions.num_users,
                                 weights=np.zeros((adoptions.num_users,) * 2),
                                 name="dead"),
            ),
            popularity=stack.popularity,
        )
        params, _ = fit_mle(with_dead, adoptions, np.arange(adoptions.num_apps))
        assert params.net_weights[-1] == 0.0

    def test_fix_flags(self):
        stack, adoptions = make_instance(6)
        train = np.arange(adoptions.num_apps)
        _, res_full = fit_mle(stack, adoptions, train)
        p1, res1 = fit_mle(stack, adoptions, train,
                           FitConfig(fix_susceptibility_at_zero=True))
        assert not p1.susceptibility.any()
        assert p1.pop_weight > 0.0 or p1.net_weights.any()
        p2, res2 = fit_mle(stack, adoptions, train,
                           FitConfig(fix_net_weights_at_zero=True))
        assert not p2.net_weights.any()
        assert p2.susceptibility.any()
        # restricted fits cannot beat the full fit
        assert res1.final_objective <= res_full.final_objective + 1e-9
        assert res2.final_objective <= res_full.final_objective + 1e-9

    def test_relaxing_sign_constraint_cannot_hurt(self):
        stack, adoptions = make_instance(7)
        train = np.arange(adoptions.num_apps)
        _, res_con = fit_mle(stack, adoptions, train)
        params_rel, res_rel = fit_mle(
            stack, adoptions, train, FitConfig(allow_negative_net_weights=True)
        )
        assert not params_rel.constrained
        assert res_rel.final_objective >= res_con.final_objective - 1e-9

    def test_term_users_scatter_back(self):
        stack, adoptions = make_instance(8, num_users=6)
        params, _ = fit_mle(stack, adoptions, np.arange(adoptions.num_apps),
                            term_users=[0, 2, 4])
        assert params.susceptibility.shape == (6,)
        assert params.susceptibility[1] == 0.0
        assert params.susceptibility[3] == 0.0
        assert params.susceptibility[5] == 0.0

    def test_term_users_empty_rejected(self):
        stack, adoptions = make_instance(9, num_users=4)
        with pytest.raises(ValueError):
            fit_mle(stack, adoptions, [0, 1], term_users=[])

    def test_max_iters_flags_non_convergence(self):
        stack, adoptions = make_instance(10)
        _, res = fit_mle(stack, adoptions, np.arange(adoptions.num_apps),
                         FitConfig(max_iters=1))
        assert not res.converged
        assert res.iterations == 1

    def test_overflowing_start_raises_solver_error(self):
        stack, adoptions = make_instance(11)
        with np.errstate(over="ignore", invalid="ignore"):
            with pytest.raises(SolverError):
                fit_mle(stack, adoptions, np.arange(adoptions.num_apps),
                        FitConfig(init_susceptibility=1e308, init_net_weight=1e308))

    def test_result_serializes(self):
        import json

        res = FitResult(iterations=5, final_objective=-2.5, converged=True,
                        grad_norm=1e-8)
        obj = json.loads(res.to_json())
        assert obj["iterations"] == 5 and obj["converged"] is True


class TestFitConfigValidation:
    def test_bad_max_iters(self):
        with pytest.raises(ValueError, match="max_iters"):
            FitConfig(max_iters=0)

    def test_bad_tolerance(self):
        with pytest.raises(ValueError, match="tolerances"):
            FitConfig(grad_tol=0.0)

    def test_negative_init(self):
        with pytest.raises(ValueError, match="init_susceptibility"):
            FitConfig(init_susceptibility=-0.1)


class TestRegression:
    def test_coefficients_are_nonnegative(self):
        stack, adoptions = make_instance(20)
        reg = fit_regression(stack, adoptions, np.arange(adoptions.num_apps))
        assert isinstance(reg, RegressionParams)
        assert np.all(reg.net_coefs >= 0.0)
        assert reg.pop_coef >= 0.0
        assert reg.activity_coef >= 0.0
        assert reg.intercept >= 0.0

    def test_constant_target_fits_exactly(self):
        # everyone installs everything: the intercept/activity columns alone
        # can reach zero residual, so the fitted plane must predict 1 exactly
        U, A = 5, 6
        stack = NetworkStack(
            networks=(CandidateNetwork(num_users=U, weights=np.zeros((U, U))),),
            popularity=np.full(A, 2.0),
        )
        adoptions = AdoptionMatrix(num_users=U, num_apps=A,
                                   installed=np.ones((U, A), dtype=bool))
        reg = fit_regression(stack, adoptions, np.arange(A))
        pred = (reg.pop_coef * 2.0 + reg.activity_coef * A + reg.intercept)
        assert pred == pytest.approx(1.0, abs=1e-5)

    def test_empty_train_apps_rejected(self):
        stack, adoptions = make_instance(21)
        with pytest.raises(ValueError, match="empty"):
            fit_regression(stack, adoptions, [])


class TestRandomBaseline:
    def test_deterministic_per_seed(self):
        a = random_baseline(10, seed=3)
        b = random_baseline(10, seed=3)
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, random_baseline(10, seed=4))

    def test_range_and_validation(self):
        s = random_baseline(100, seed=0)
        assert np.all((s >= 0.0) & (s < 1.0))
        with pytest.raises(ValueError):
            random_baseline(0, seed=0)
