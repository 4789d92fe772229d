import math

import numpy as np
import pytest

from expalign.errors import DomainError
from expalign.gaco import joint_softmax
from expalign.variational import (
    GibbsProblem,
    free_energy,
    free_energy_gradient,
    gibbs_closed_form,
    kl_divergence,
    minimize_free_energy_numeric,
    random_simplex,
)


def random_problem(rng, n=None):
    n = n or int(rng.integers(2, 65))
    return GibbsProblem(
        energy=rng.normal(size=n),
        geometry=rng.normal(size=n) * (rng.random(size=n) < 0.5),
        tau=float(np.exp(rng.normal() * 0.3)),
        lam=float(np.abs(rng.normal())),
    )


class TestFreeEnergy:
    def test_uniform_reference_drops_the_kl_term(self):
        prob = random_problem(np.random.default_rng(0), n=12)
        u = np.full(12, 1 / 12)
        expected = prob.energy.mean() - prob.lam * prob.geometry.mean()
        assert abs(free_energy(u, prob) - expected) <= 1e-12

    def test_pure_entropy_case(self):
        prob = GibbsProblem(energy=np.zeros(6), tau=0.7)
        u = np.full(6, 1 / 6)
        assert abs(free_energy(u, prob)) <= 1e-15
        q = np.array([0.5, 0.1, 0.1, 0.1, 0.1, 0.1])
        assert free_energy(q, prob) > 0.0

    def test_two_point_value(self):
        # 0.2 + KL([.8,.2] || [.5,.5]) = 0.2 + .8 ln 1.6 + .2 ln 0.4
        prob = GibbsProblem(energy=np.array([0.0, 1.0]), tau=1.0, lam=0.0)
        expected = 0.2 + 0.8 * math.log(1.6) + 0.2 * math.log(0.4)
        value = free_energy(np.array([0.8, 0.2]), prob)
        assert abs(value - expected) <= 1e-12
        assert abs(value - 0.392745) <= 1e-6

    def test_off_simplex_rejected(self):
        prob = GibbsProblem(energy=np.zeros(3))
        with pytest.raises(DomainError):
            free_energy(np.array([0.5, 0.5, 0.1]), prob)
        with pytest.raises(DomainError):
            free_energy(np.array([1.2, -0.2, 0.0]), prob)

    def test_zero_entries_use_zero_log_zero(self):
        prob = GibbsProblem(energy=np.arange(3.0))
        value = free_energy(np.array([1.0, 0.0, 0.0]), prob)
        assert np.isfinite(value)
        assert abs(value - (0.0 + 1.0 * math.log(3.0))) <= 1e-12


class TestClosedForm:
    def test_flat_energy_gives_uniform(self):
        prob = GibbsProblem(energy=np.full(7, 2.5), tau=0.3)
        np.testing.assert_allclose(gibbs_closed_form(prob), 1 / 7, atol=1e-15)

    def test_direct_evaluation(self):
        prob = GibbsProblem(energy=np.array([0.0, math.log(2.0)]), tau=1.0)
        np.testing.assert_allclose(gibbs_closed_form(prob), [2 / 3, 1 / 3], atol=1e-15)

    def test_geometry_weight_raises_target_mass(self):
        rng = np.random.default_rng(1)
        e = rng.normal(size=10)
        a = np.zeros(10)
        a[4] = 1.0
        base = gibbs_closed_form(GibbsProblem(e, a, tau=1.0, lam=0.0))
        boosted = gibbs_closed_form(GibbsProblem(e, a, tau=1.0, lam=0.8))
        assert boosted[4] > base[4]

    def test_additive_shift_invariance(self):
        rng = np.random.default_rng(2)
        prob = random_problem(rng, n=20)
        shifted = GibbsProblem(prob.energy + 11.0, prob.geometry, prob.tau, prob.lam)
        assert np.abs(gibbs_closed_form(shifted) - gibbs_closed_form(prob)).max() <= 1e-12

    def test_temperature_absorption(self):
        e = np.random.default_rng(3).normal(size=15)
        a = 2.7
        q1 = gibbs_closed_form(GibbsProblem(a * e, tau=a))
        q2 = gibbs_closed_form(GibbsProblem(e, tau=1.0))
        assert np.abs(q1 - q2).max() <= 1e-12

    def test_high_temperature_limit(self):
        prob = GibbsProblem(energy=np.random.default_rng(4).normal(size=30), tau=1e8)
        assert np.abs(gibbs_closed_form(prob) - 1 / 30).max() <= 1e-6

    def test_low_temperature_limit(self):
        rng = np.random.default_rng(5)
        e = rng.normal(size=30)
        a = rng.normal(size=30) * (rng.random(30) < 0.5)
        lam = 0.6
        prob = GibbsProblem(e, a, tau=1e-6, lam=lam)
        best = int(np.argmin(e - lam * a))
        assert gibbs_closed_form(prob)[best] >= 1.0 - 1e-6

    def test_matches_pair_distribution_on_shifted_logits(self):
        rng = np.random.default_rng(6)
        up_map = rng.normal(size=(2, 4, 4))
        adv = rng.normal(size=(2, 4, 4)) * (rng.random(size=(2, 4, 4)) < 0.4)
        lam = 0.9
        q = gibbs_closed_form(GibbsProblem(-up_map, adv, tau=1.0, lam=lam))
        assert np.abs(q - joint_softmax(up_map + lam * adv)).max() <= 1e-12

    def test_lambda_zero_recovers_energy_only_posterior(self):
        rng = np.random.default_rng(7)
        e = rng.normal(size=12)
        a = rng.normal(size=12)
        q = gibbs_closed_form(GibbsProblem(e, a, tau=0.8, lam=0.0))
        q_ref = gibbs_closed_form(GibbsProblem(e, None, tau=0.8, lam=0.0))
        assert np.abs(q - q_ref).max() <= 1e-15


class TestNumericMinimizer:
    def test_flat_energy_converges_immediately(self):
        prob = GibbsProblem(energy=np.zeros(9), tau=0.5)
        res = minimize_free_energy_numeric(prob)
        assert res.converged and res.iterations == 1
        np.testing.assert_allclose(res.q, 1 / 9, atol=1e-15)

    def test_matches_closed_form(self):
        rng = np.random.default_rng(8)
        for _ in range(10):
            prob = random_problem(rng, n=10)
            res = minimize_free_energy_numeric(prob, max_iters=500, tol=1e-14)
            assert res.converged
            assert kl_divergence(res.q, gibbs_closed_form(prob)) <= 1e-8

    def test_never_beats_closed_form(self):
        rng = np.random.default_rng(9)
        prob = random_problem(rng, n=16)
        res = minimize_free_energy_numeric(prob, max_iters=50, tol=1e-14)
        assert free_energy(res.q, prob) >= free_energy(gibbs_closed_form(prob), prob) - 1e-10

    def test_nonconvergence_reported_not_raised(self):
        prob = GibbsProblem(energy=np.random.default_rng(10).normal(size=40) * 5, tau=0.05)
        res = minimize_free_energy_numeric(prob, max_iters=2, tol=1e-16)
        assert not res.converged
        assert res.iterations == 2
        assert np.isfinite(res.residual) and res.residual > 1e-16

    def test_gradient_matches_finite_differences(self):
        from expalign.gradients import finite_difference_gradient
        rng = np.random.default_rng(11)
        prob = GibbsProblem(energy=rng.normal(size=6), geometry=rng.normal(size=6), tau=0.8, lam=0.4)
        q = 0.3 * random_simplex(rng, 6)[0] + 0.7 / 6
        analytic = free_energy_gradient(q, prob)
        numeric = finite_difference_gradient(lambda x: free_energy(x, prob, validate=False), q)
        proj = lambda g: g - g.mean()
        assert np.abs(proj(analytic) - proj(numeric)).max() <= 1e-6


class TestRandomSimplex:
    def test_on_simplex(self):
        qs = random_simplex(np.random.default_rng(12), 9, count=100)
        assert (qs >= 0).all()
        np.testing.assert_allclose(qs.sum(axis=1), 1.0, atol=1e-12)

    def test_optimality_certificate(self):
        rng = np.random.default_rng(13)
        prob = random_problem(rng, n=10)
        f_star = free_energy(gibbs_closed_form(prob), prob)
        for q in random_simplex(rng, 10, count=1000):
            assert free_energy(q, prob) >= f_star - 1e-12


class TestProblemValidation:
    def test_bad_temperature(self):
        with pytest.raises(DomainError):
            GibbsProblem(energy=np.zeros(3), tau=0.0)

    def test_negative_lambda(self):
        with pytest.raises(DomainError):
            GibbsProblem(energy=np.zeros(3), lam=-0.1)

    def test_nonfinite_energy(self):
        with pytest.raises(DomainError):
            GibbsProblem(energy=np.array([0.0, np.inf]))
