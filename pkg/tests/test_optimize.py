import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import perturbix as px
from perturbix.constraint_space import feasible_basis, project_optimize
from perturbix.functionals import kl_weight
from perturbix.optimize import (
    feasible_support_search,
    kl_design_matrix,
    probability_floor_mask,
)
from perturbix.results import LinearCoefficients

from conftest import random_chain, random_valid_p, sample_feasible

M3 = np.array([[0.5, 0.2, 0.3], [0.3, 0.7, 0.1], [0.2, 0.1, 0.6]])
M2 = np.array([[0.8, 0.3], [0.2, 0.7]])
ROTATION = np.array([[0.1, 0.1, 0.8], [0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])

# Optima from an independent SLSQP solve of the constrained problem
# (20 random restarts, ftol 1e-15) and, for two states, a 2e5-point scan
# of the one-parameter feasible family.
LINEAR_MAX_M3 = 1.2284143145161983  # f = (1, 0, -1)
KL_MAX_M3 = 2.5667348157690055
KL_MAX_M2 = 13.0 / 6.0
EP_MIN_M4 = -0.3819980275796281  # M4 from default_rng(4), see m4()


def m4():
    a = np.random.default_rng(4).uniform(0.1, 1, (4, 4))
    return a / a.sum(0)


def setup(a):
    u = px.invariant_vector(a)
    return u, px.response_operator(a, u)


def assert_constraints(res, m, measure_preserving=False, u=None):
    p = res.p
    mask = np.asarray(m) > 0
    assert np.abs(p.sum(axis=0)).max() <= 1e-10
    assert np.all(p[~mask] == 0)
    assert abs(np.linalg.norm(p) - 1) <= 1e-10
    if measure_preserving:
        assert np.abs(p @ u).max() <= 1e-10


class TestLinear:
    def test_oracle_value(self):
        u, g = setup(M3)
        res = px.maximize_linear_functional(M3, u, g, [1.0, 0.0, -1.0])
        assert res.objective_gradient == pytest.approx(LINEAR_MAX_M3, abs=1e-9)
        assert res.method_tag == "closed_form"
        assert_constraints(res, M3)

    def test_constant_f_degenerate(self):
        u, g = setup(M3)
        with pytest.raises(px.DegenerateObjective):
            px.maximize_linear_functional(M3, u, g, np.ones(3))

    def test_beats_sampling(self):
        rng = np.random.default_rng(0)
        u, g = setup(M3)
        f = np.array([1.0, 0.0, -1.0])
        res = px.maximize_linear_functional(M3, u, g, f)
        ps = sample_feasible(M3, u, 10**4, rng)
        vals = np.einsum("i,kij,j->k", g.apply_transpose(f), ps, u)
        assert res.objective_gradient >= vals.max()

    def test_scale_and_direction(self, rng):
        a = random_chain(8, rng, density=0.5)
        u, g = setup(a)
        f = rng.standard_normal(8)
        p = px.maximize_linear_functional(a, u, g, f).p
        np.testing.assert_allclose(px.maximize_linear_functional(a, u, g, 3.7 * f).p, p, atol=1e-12)
        np.testing.assert_allclose(px.maximize_linear_functional(a, u, g, f, "min").p, -p, atol=1e-15)

    def test_first_order_optimality(self, rng):
        a = random_chain(10, rng, density=0.4)
        u, g = setup(a)
        f = rng.standard_normal(10)
        p = px.maximize_linear_functional(a, u, g, f).p
        basis = feasible_basis(a, u, include_measure_preservation=False)
        grad = basis.reduce(np.outer(g.apply_transpose(f), u))
        proj = basis.vectors @ (basis.vectors.T @ grad)
        pv = basis.reduce(p)
        resid = proj - (proj @ pv) * pv
        assert np.linalg.norm(resid) <= 1e-8

    def test_finite_horizon(self, rng):
        a = random_chain(6, rng)
        u = px.invariant_vector(a)
        f = rng.standard_normal(6)
        g2 = px.response_operator(a, u, 2)
        res = px.maximize_linear_functional(a, u, g2, f)
        ps = sample_feasible(a, u, 2000, rng)
        vals = [f @ g2.apply(q @ u) for q in ps]
        assert res.objective_gradient >= max(vals)

    def test_mask_restricts_support(self, rng):
        a = random_chain(6, rng)
        u, g = setup(a)
        mask = probability_floor_mask(a, 0.15)
        res = px.maximize_linear_functional(a, u, g, rng.standard_normal(6), mask=mask)
        assert np.all(res.p[~mask] == 0)
        assert np.abs(res.p.sum(axis=0)).max() <= 1e-12

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 25))
    def test_constraints_property(self, seed, n):
        r = np.random.default_rng(seed)
        a = random_chain(n, r, density=0.5)
        u, g = setup(a)
        assert_constraints(px.maximize_linear_functional(a, u, g, r.standard_normal(n)), a)


class TestKL:
    def test_two_state_brute_force(self):
        u, g = setup(M2)
        res = px.maximize_kl(M2, u, g)
        assert res.objective_gradient == pytest.approx(KL_MAX_M2, abs=1e-9)
        assert res.objective_gradient == pytest.approx(0.5 * res.extras["singular_value"] ** 2, rel=1e-12)

    def test_oracle_value(self):
        u, g = setup(M3)
        res = px.maximize_kl(M3, u, g)
        assert res.objective_gradient == pytest.approx(KL_MAX_M3, abs=1e-9)
        assert_constraints(res, M3)

    def test_basis_and_gram_agree(self, rng):
        a = random_chain(12, rng, density=0.4)
        u, g = setup(a)
        r1 = px.maximize_kl(a, u, g, method="basis")
        r2 = px.maximize_kl(a, u, g, method="gram")
        assert r1.objective_gradient == pytest.approx(r2.objective_gradient, rel=1e-10)
        np.testing.assert_allclose(r1.p, r2.p, atol=1e-8)

    def test_design_matrix_route(self, rng):
        a = random_chain(5, rng, density=0.7)
        u, g = setup(a)
        d = kl_weight(u)
        big = kl_design_matrix(a, u, g, d)
        basis = feasible_basis(a, u, include_measure_preservation=False)
        emb = np.zeros((25, basis.dim))
        emb[basis.support_index] = basis.vectors
        s = np.linalg.svd(big @ emb, compute_uv=False)
        assert px.maximize_kl(a, u, g).extras["singular_value"] == pytest.approx(s[0], rel=1e-12)

    def test_beats_sampling(self):
        rng = np.random.default_rng(1)
        u, g = setup(M3)
        res = px.maximize_kl(M3, u, g)
        d = kl_weight(u)
        vals = [px.kl_quadratic_response(d, g, q, u) for q in sample_feasible(M3, u, 10**4, rng)]
        assert res.objective_gradient >= max(vals)

    def test_target_mode(self, rng):
        a = random_chain(6, rng)
        u, g = setup(a)
        r0 = px.maximize_kl(a, u, g)
        r1 = px.maximize_kl(a, u, g, target=u.copy())
        np.testing.assert_allclose(r0.p, r1.p, atol=1e-12)
        w = np.full(6, 1 / 6)
        r2 = px.maximize_kl(a, u, g, target=w)
        assert r2.objective_gradient == pytest.approx(px.kl_quadratic_response(np.sqrt(w), g, r2.p, u))

    def test_sign_convention(self, rng):
        a = random_chain(6, rng)
        u, g = setup(a)
        p = px.maximize_kl(a, u, g).p
        first = p.ravel(order="F")[np.abs(p.ravel(order="F")) > 1e-12][0]
        assert first > 0


class TestEntropyProduction:
    def test_coefficients_rotation(self):
        u = np.full(3, 1 / 3)
        c = px.entropy_production_coefficients(ROTATION, u).c
        # direct evaluation of u_j log(u_j M_ij / (u_i M_ji)) - u_i M_ji / M_ij
        assert c[1, 0] == pytest.approx(np.log(8) / 3 - 0.1 / 0.8 / 3, abs=1e-15)
        assert c[0, 1] == pytest.approx(-np.log(8) / 3 - 0.8 / 0.1 / 3, abs=1e-14)
        assert c[0, 0] == pytest.approx(-1 / 3, abs=1e-15)

    def test_asymmetric(self):
        a = np.array([[0.5, 0.0, 0.5], [0.5, 0.5, 0.0], [0.0, 0.5, 0.5]])
        with pytest.raises(px.AsymmetricMask):
            px.entropy_production_coefficients(a, np.full(3, 1 / 3))

    def test_oracle_value_and_derivative(self):
        a = m4()
        u = px.invariant_vector(a)
        c = px.entropy_production_coefficients(a, u)
        res = px.minimize_measure_preserving(a, u, c)
        assert res.objective_gradient == pytest.approx(EP_MIN_M4, abs=1e-9)
        assert_constraints(res, a, True, u)
        h = 1e-6
        fd = (px.entropy_production(a + h * res.p, u) - px.entropy_production(a - h * res.p, u)) / (2 * h)
        assert fd == pytest.approx(res.objective_gradient, abs=1e-7)

    def test_reversible_chain_has_zero_gradient(self, rng):
        s = rng.uniform(0.1, 1.0, (5, 5))
        a = (s + s.T) / (s + s.T).sum(axis=0)
        u = px.invariant_vector(a)
        c = px.entropy_production_coefficients(a, u)
        for q in sample_feasible(a, u, 20, rng, measure_preserving=True):
            assert abs(c.value(q)) <= 1e-12

    def test_beats_sampling(self):
        rng = np.random.default_rng(2)
        a = m4()
        u = px.invariant_vector(a)
        c = px.entropy_production_coefficients(a, u)
        res = px.minimize_measure_preserving(a, u, c)
        vals = np.einsum("ij,kij->k", c.c, sample_feasible(a, u, 10**4, rng, True))
        assert res.objective_gradient <= vals.min()

    def test_matches_projection(self, rng):
        a = random_chain(30, rng, density=0.4, symmetric_mask=True)
        u = px.invariant_vector(a)
        c = px.entropy_production_coefficients(a, u)
        p1 = px.minimize_measure_preserving(a, u, c).p
        p2 = project_optimize(c, feasible_basis(a, u), "min").p
        assert np.linalg.norm(p1 - p2) <= 1e-6

    def test_generic_coefficients_and_direction(self, rng):
        a = random_chain(7, rng, density=0.6)
        u = px.invariant_vector(a)
        c = LinearCoefficients(rng.standard_normal((7, 7)), a > 0)
        lo = px.minimize_measure_preserving(a, u, c, "min")
        hi = px.minimize_measure_preserving(a, u, c, "max")
        np.testing.assert_allclose(lo.p, -hi.p, atol=1e-15)
        assert_constraints(hi, a, True, u)

    def test_first_order_optimality(self, rng):
        a = random_chain(9, rng, density=0.5)
        u = px.invariant_vector(a)
        c = LinearCoefficients(rng.standard_normal((9, 9)), a > 0)
        p = px.minimize_measure_preserving(a, u, c, "max").p
        basis = feasible_basis(a, u)
        grad = basis.reduce(c.c)
        proj = basis.vectors @ (basis.vectors.T @ grad)
        pv = basis.reduce(p)
        assert np.linalg.norm(proj - (proj @ pv) * pv) <= 1e-8

    def test_disconnected_mask_gauge(self, rng):
        a = random_chain(12, rng, density=0.8, symmetric_mask=True)
        u = px.invariant_vector(a)
        c = px.entropy_production_coefficients(a, u)
        mask = probability_floor_mask(a, np.quantile(a[a > 0], 0.6), symmetric=True)
        res = px.minimize_measure_preserving(a, u, LinearCoefficients(c.c, mask))
        assert np.all(res.p[~mask] == 0)
        assert np.abs(res.p @ u).max() <= 1e-10
        assert np.abs(res.p.sum(axis=0)).max() <= 1e-10


class TestReversibilization:
    def test_reversible_gives_zero(self, rng):
        s = rng.uniform(0.1, 1.0, (4, 4))
        a = (s + s.T) / (s + s.T).sum(axis=0)
        u = px.invariant_vector(a)
        assert np.abs(px.additive_reversibilization(a, u)).max() <= 1e-15
        assert np.all(px.additive_reversibilization(a, u, normalize=True) == 0)

    def test_rotation(self):
        u = np.full(3, 1 / 3)
        pr = px.additive_reversibilization(ROTATION, u)
        mr = ROTATION + pr
        assert abs(px.entropy_production(mr, u)) <= 1e-10
        assert np.abs(mr @ u - u).sum() <= 1e-10

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), n=st.integers(2, 30))
    def test_property(self, seed, n):
        a = random_chain(n, np.random.default_rng(seed), density=0.5, symmetric_mask=True)
        u = px.invariant_vector(a)
        pr = px.additive_reversibilization(a, u)
        assert np.abs(pr.sum(axis=0)).max() <= 1e-12
        assert np.abs((a + pr) @ u - u).sum() <= 1e-10
        assert abs(px.entropy_production(a + pr, u)) <= 1e-10
        norm = np.linalg.norm(px.additive_reversibilization(a, u, True))
        # two-state chains are always reversible, so P_r vanishes
        expected = 0.0 if np.linalg.norm(pr) < 1e-14 else 1.0
        assert abs(norm - expected) <= 1e-12


class TestSupportSearch:
    def test_full_support_first(self):
        u, g = setup(M3)
        res, floor = feasible_support_search(lambda mk: px.maximize_kl(M3, u, g, mask=mk), M3, 0.01)
        assert floor == 0.0

    def test_tiny_entries_need_a_floor(self, rng):
        a = random_chain(20, rng, density=0.6)
        a[a < 0.02] *= 1e-4
        a /= a.sum(axis=0)
        u, g = setup(a)
        f = np.log(u)
        assert px.maximize_linear_functional(a, u, g, f).feasible_epsilon < 0.05
        res, floor = feasible_support_search(lambda mk: px.maximize_linear_functional(a, u, g, f, mask=mk), a, 0.05)
        assert floor > 0 and res.feasible_epsilon >= 0.05
        assert res.extras["support_floor"] == floor
        px.perturbed_invariant(a, res.p, 0.05)

    def test_impossible(self):
        u, g = setup(M3)
        with pytest.raises(px.InfeasibleEpsilon):
            feasible_support_search(lambda mk: px.maximize_kl(M3, u, g, mask=mk), M3, 100.0)

    def test_floor_mask(self):
        a = np.array([[0.5, 0.05], [0.5, 0.95]])
        assert probability_floor_mask(a, 0.1).tolist() == [[True, False], [True, True]]
        assert probability_floor_mask(a, 0.1, symmetric=True).tolist() == [[True, False], [False, True]]
