import numpy as np
import pytest
from scipy.stats import chisquare, poisson

from matpoisson import linalg, phpoisson, simulate
from matpoisson.errors import SamplingError
from tests.conftest import tridiagonal_example


def feasible_physical(rng=None):
    """Small model whose survival probability is large enough for rejection."""
    alpha = np.array([0.7, 0.3])
    P = np.array([[0.55, 0.35], [0.25, 0.65]])
    return phpoisson.PhysicalRep(nu=1.6, alpha=alpha, P=P)


def stochastic_physical(nu=3.0):
    alpha = np.array([0.4, 0.6])
    P = np.array([[0.3, 0.7], [0.8, 0.2]])
    return phpoisson.PhysicalRep(nu=nu, alpha=alpha, P=P)


class TestAcceptanceProbability:
    def test_stochastic_chain_always_survives(self):
        assert simulate.acceptance_probability(stochastic_physical()) == pytest.approx(1.0, abs=1e-12)

    def test_matches_direct_formula(self):
        phys = feasible_physical()
        direct = float(phys.alpha
                       @ linalg.matexp(phys.nu * phys.P)
                       @ np.ones(2)) * np.exp(-phys.nu)
        assert simulate.acceptance_probability(phys) == pytest.approx(direct, rel=1e-12)


class TestRejectionSampler:
    def test_deterministic_given_seed(self):
        config = simulate.SimConfig(phys=feasible_physical(), n_samples=500, seed=42)
        a = simulate.draw_conditional(config, method="rejection")
        b = simulate.draw_conditional(config, method="rejection")
        assert np.array_equal(a.samples, b.samples)
        assert a.acceptance_rate == b.acceptance_rate

    def test_stochastic_chain_is_poisson(self):
        nu = 3.0
        config = simulate.SimConfig(phys=stochastic_physical(nu), n_samples=100_000, seed=7)
        result = simulate.draw_conditional(config, method="rejection")
        assert result.acceptance_rate == 1.0
        top = int(result.samples.max())
        observed = np.bincount(result.samples, minlength=top + 1).astype(float)
        expected = poisson.pmf(np.arange(top + 1), nu) * result.samples.size
        # pool the sparse tail so the chi-square approximation is sound
        keep = expected >= 5.0
        observed_pooled = np.append(observed[keep], observed[~keep].sum())
        expected_pooled = np.append(expected[keep], expected[~keep].sum())
        stat = chisquare(observed_pooled, expected_pooled * observed_pooled.sum()
                         / expected_pooled.sum())
        assert stat.pvalue > 0.001

    def test_acceptance_rate_within_three_sigma(self):
        phys = feasible_physical()
        p = simulate.acceptance_probability(phys)
        config = simulate.SimConfig(phys=phys, n_samples=100_000, seed=11)
        result = simulate.draw_conditional(config, method="rejection")
        se = np.sqrt(p * (1.0 - p) / result.attempts)
        assert abs(result.acceptance_rate - p) <= 3.0 * se

    def test_law_matches_analytic_pmf(self):
        phys = feasible_physical()
        config = simulate.SimConfig(phys=phys, n_samples=200_000, seed=3)
        result = simulate.draw_conditional(config, method="rejection")
        rep = phpoisson.from_physical(phys)
        top = int(result.samples.max())
        empirical = np.bincount(result.samples, minlength=top + 1) / result.samples.size
        analytic = phpoisson.pmf_values(rep, top)
        l1 = float(np.abs(empirical - analytic).sum()) + phpoisson.pmf_tail_bound(rep, top)
        assert l1 < 0.02

    def test_exhausted_budget_aborts_with_diagnostic(self):
        # survival is so unlikely that a tiny budget must fail
        phys = phpoisson.PhysicalRep(nu=12.0, alpha=np.array([1.0]), P=np.array([[0.05]]))
        config = simulate.SimConfig(phys=phys, n_samples=50, seed=1, max_rejections=3)
        with pytest.raises(SamplingError) as excinfo:
            simulate.draw_conditional(config, method="rejection")
        assert "acceptance probability" in str(excinfo.value)

    def test_transition_frequencies_converge(self):
        # stochastic P: accepted-path jump frequencies estimate P itself
        phys = stochastic_physical(nu=4.0)
        config = simulate.SimConfig(phys=phys, n_samples=120_000, seed=5)
        result = simulate.draw_conditional(config, method="rejection",
                                           record_transitions=True)
        counts = result.transition_counts
        assert counts.sum() == result.samples.sum()
        for i in range(2):
            row_total = counts[i].sum()
            for j in range(2):
                p_hat = counts[i, j] / row_total
                se = np.sqrt(phys.P[i, j] * (1.0 - phys.P[i, j]) / row_total)
                assert abs(p_hat - phys.P[i, j]) <= 4.0 * se
        inits = result.initial_counts
        assert inits.sum() == result.samples.size

    def test_immediate_absorption_mass_rejected(self):
        # alpha deficit is instant absorption: acceptance must reflect it
        phys = phpoisson.PhysicalRep(nu=0.8, alpha=np.array([0.5, 0.0]),
                                     P=np.array([[0.9, 0.05], [0.1, 0.8]]))
        p = simulate.acceptance_probability(phys)
        config = simulate.SimConfig(phys=phys, n_samples=50_000, seed=13)
        result = simulate.draw_conditional(config, method="rejection")
        se = np.sqrt(p * (1.0 - p) / result.attempts)
        assert abs(result.acceptance_rate - p) <= 3.0 * se


class TestConditionalSampler:
    def test_used_automatically_when_rejection_hopeless(self):
        phys = phpoisson.to_physical(tridiagonal_example())
        assert simulate.acceptance_probability(phys) < 1e-6
        config = simulate.SimConfig(phys=phys, n_samples=1000, seed=2)
        result = simulate.draw_conditional(config)
        assert result.method == "conditional"
        assert result.acceptance_rate == pytest.approx(
            simulate.acceptance_probability(phys), rel=1e-12)

    def test_law_matches_analytic_pmf(self):
        phys = phpoisson.to_physical(tridiagonal_example())
        rep = phpoisson.from_physical(phys)
        config = simulate.SimConfig(phys=phys, n_samples=300_000, seed=9)
        result = simulate.draw_conditional(config, method="conditional")
        top = int(result.samples.max())
        empirical = np.bincount(result.samples, minlength=top + 1) / result.samples.size
        analytic = phpoisson.pmf_values(rep, top)
        assert float(np.abs(empirical - analytic).sum()) < 0.02

    def test_deterministic_given_seed(self):
        phys = phpoisson.to_physical(tridiagonal_example())
        config = simulate.SimConfig(phys=phys, n_samples=2000, seed=77)
        a = simulate.draw_conditional(config, method="conditional")
        b = simulate.draw_conditional(config, method="conditional")
        assert np.array_equal(a.samples, b.samples)

    def test_agrees_with_rejection_on_feasible_model(self):
        # both mechanisms target the same law
        phys = feasible_physical()
        config = simulate.SimConfig(phys=phys, n_samples=150_000, seed=21)
        rej = simulate.draw_conditional(config, method="rejection")
        cond = simulate.draw_conditional(config, method="conditional")
        top = int(max(rej.samples.max(), cond.samples.max()))
        e1 = np.bincount(rej.samples, minlength=top + 1) / rej.samples.size
        e2 = np.bincount(cond.samples, minlength=top + 1) / cond.samples.size
        assert float(np.abs(e1 - e2).sum()) < 0.02


class TestEventCountMatrices:
    def test_zero_events(self):
        phys = feasible_physical()
        out = simulate.mmk_check(phys, 0, 1.0)
        assert np.allclose(out, np.exp(-phys.nu) * np.eye(2), rtol=1e-12)

    def test_series_sums_to_survival_vector(self):
        phys = feasible_physical()
        total = sum(simulate.mmk_check(phys, k, 1.0) @ np.ones(2) for k in range(201))
        expected = linalg.matexp_action(phys.nu * (phys.P - np.eye(2)), np.ones(2))
        assert np.allclose(total, expected, atol=1e-10)

    def test_scalar_stochastic_is_poisson_weight(self):
        phys = phpoisson.PhysicalRep(nu=2.4, alpha=np.array([1.0]), P=np.array([[1.0]]))
        for k in (0, 1, 5, 11):
            got = simulate.mmk_check(phys, k, 1.0)[0, 0]
            assert got == pytest.approx(poisson.pmf(k, 2.4), rel=1e-12)

    def test_monte_carlo_mean_matches_analytic(self):
        phys = feasible_physical()
        rep = phpoisson.from_physical(phys)
        mean, variance = phpoisson.mean_variance(rep)
        config = simulate.SimConfig(phys=phys, n_samples=200_000, seed=17)
        result = simulate.draw_conditional(config, method="rejection")
        se = np.sqrt(variance / result.samples.size)
        assert abs(result.samples.mean() - mean) <= 4.0 * se
