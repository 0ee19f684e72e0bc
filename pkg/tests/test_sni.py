import math

import numpy as np
import pytest
from scipy import integrate
from scipy import stats as sps
from scipy.linalg import sqrtm

from snijoint import sni
from snijoint.errors import DomainError, InvalidParams
from snijoint.sni import MixingFamily, MixingSpec, SniParams

from conftest import random_spd

SN = MixingSpec.skew_normal()


def random_params(rng, dim, mixing=SN, lam_scale=1.5):
    return SniParams(
        mu=rng.normal(size=dim),
        sigma=random_spd(rng, dim, scale=0.5),
        lam=rng.normal(scale=lam_scale, size=dim),
        mixing=mixing,
    )


class TestMixingSpecValidation:
    def test_skew_t_needs_nu_above_two(self):
        with pytest.raises(InvalidParams):
            MixingSpec.skew_t(2.0)

    def test_slash_needs_nu_above_half(self):
        with pytest.raises(InvalidParams):
            MixingSpec.skew_slash(0.5)

    def test_contaminated_ranges(self):
        with pytest.raises(InvalidParams):
            MixingSpec.skew_contaminated(1.0, 0.5)
        with pytest.raises(InvalidParams):
            MixingSpec.skew_contaminated(0.5, 1.0)


class TestMixingLogpdf:
    def test_skew_normal_point_mass(self):
        assert sni.mixing_logpdf(1.0, SN) == 0.0
        assert sni.mixing_logpdf(2.0, SN) == -math.inf

    def test_slash_values(self):
        ssl = MixingSpec.skew_slash(2.0)
        assert sni.mixing_logpdf(1.0, ssl) == pytest.approx(math.log(2.0))
        assert sni.mixing_logpdf(0.5, ssl) == pytest.approx(math.log(2.0 * 0.5))

    def test_skew_t_matches_gamma(self):
        st = MixingSpec.skew_t(4.0)
        want = sps.gamma.logpdf(0.5, 2.0, scale=0.5)  # Gamma(2, rate 2) oracle
        assert sni.mixing_logpdf(0.5, st) == pytest.approx(want, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(DomainError):
            sni.mixing_logpdf(0.0, SN)
        with pytest.raises(DomainError):
            sni.mixing_logpdf(1.5, MixingSpec.skew_slash(2.0))

    def test_contaminated_masses(self):
        scn = MixingSpec.skew_contaminated(0.3, 0.25)
        assert sni.mixing_logpdf(0.25, scn) == pytest.approx(math.log(0.3))
        assert sni.mixing_logpdf(1.0, scn) == pytest.approx(math.log(0.7))
        assert sni.mixing_logpdf(0.5, scn) == -math.inf


class TestMixingSample:
    def test_skew_normal_degenerate(self, rng):
        assert sni.mixing_sample(SN, rng) == 1.0
        assert np.all(sni.mixing_sample(SN, rng, size=100) == 1.0)

    def test_contaminated_zero_weight(self, rng):
        scn = MixingSpec.skew_contaminated(0.0, 0.25)
        assert np.all(sni.mixing_sample(scn, rng, size=1000) == 1.0)

    def test_skew_t_mean_one(self, rng):
        draws = sni.mixing_sample(MixingSpec.skew_t(4.0), rng, size=100_000)
        se = math.sqrt(0.5 / draws.size)  # Var Gamma(2, rate 2) = 1/2
        assert abs(draws.mean() - 1.0) < 3 * se

    def test_slash_beta_mean(self, rng):
        nu = 2.0
        draws = sni.mixing_sample(MixingSpec.skew_slash(nu), rng, size=100_000)
        mean = nu / (nu + 1.0)
        var = nu / ((nu + 1.0) ** 2 * (nu + 2.0))
        assert abs(draws.mean() - mean) < 3 * math.sqrt(var / draws.size)

    def test_contaminated_frequencies(self, rng):
        scn = MixingSpec.skew_contaminated(0.3, 0.25)
        draws = sni.mixing_sample(scn, rng, size=100_000)
        frac = np.mean(draws == 0.25)
        assert abs(frac - 0.3) < 3 * math.sqrt(0.3 * 0.7 / draws.size)


class TestExpectedInvSqrtU:
    def test_skew_normal(self):
        assert sni.expected_inv_sqrt_u(SN) == 1.0

    def test_skew_t_closed_form_and_monte_carlo(self, rng):
        got = sni.expected_inv_sqrt_u(MixingSpec.skew_t(4.0))
        assert got == pytest.approx(math.sqrt(2.0) * math.gamma(1.5) / math.gamma(2.0))
        draws = rng.gamma(2.0, 0.5, size=1_000_000) ** (-0.5)
        assert abs(got - draws.mean()) < 3 * draws.std() / math.sqrt(draws.size)

    def test_slash_closed_form_and_monte_carlo(self, rng):
        nu = 2.0
        got = sni.expected_inv_sqrt_u(MixingSpec.skew_slash(nu))
        assert got == pytest.approx(nu / (nu - 0.5))
        draws = rng.beta(nu, 1.0, size=1_000_000) ** (-0.5)
        assert abs(got - draws.mean()) < 3 * draws.std() / math.sqrt(draws.size)

    def test_contaminated_two_point(self):
        got = sni.expected_inv_sqrt_u(MixingSpec.skew_contaminated(0.3, 0.25))
        assert got == pytest.approx(0.3 * 2.0 + 0.7)


class TestSnLogpdf:
    def test_zero_skew_is_standard_normal(self):
        p = SniParams(mu=[0.0], sigma=[[1.0]], lam=[0.0], mixing=SN)
        assert sni.sn_logpdf([0.0], p) == pytest.approx(math.log(1 / math.sqrt(2 * math.pi)))

    def test_cdf_half_cancels_factor_two(self):
        for lam in [-3.0, 0.7, 5.0]:
            p = SniParams(mu=[0.0], sigma=[[1.0]], lam=[lam], mixing=SN)
            assert sni.sn_logpdf([0.0], p) == pytest.approx(sps.norm.logpdf(0.0))

    def test_matches_direct_formula_oracle(self, rng):
        # independently coded: scipy mvn pdf * normal cdf of the skew argument
        for _ in range(10):
            p = random_params(rng, 2)
            y = rng.normal(size=2)
            root_inv = np.linalg.inv(np.real(sqrtm(p.sigma)))
            want = (
                math.log(2.0)
                + sps.multivariate_normal.logpdf(y, p.mu, p.sigma)
                + sps.norm.logcdf(float(p.lam @ root_inv @ (y - p.mu)))
            )
            assert sni.sn_logpdf(y, p) == pytest.approx(want, abs=1e-10)

    def test_zero_skew_equals_mvn_100_cases(self, rng):
        for _ in range(100):
            dim = int(rng.integers(1, 5))
            p = SniParams(
                mu=rng.normal(size=dim),
                sigma=random_spd(rng, dim),
                lam=np.zeros(dim),
                mixing=SN,
            )
            y = rng.normal(size=dim)
            want = sps.multivariate_normal.logpdf(y, p.mu, p.sigma)
            assert abs(sni.sn_logpdf(y, p) - want) < 1e-12 * max(1.0, abs(want))


class TestSniLogpdf:
    def test_contaminated_zero_weight_collapses(self, rng):
        scn = MixingSpec.skew_contaminated(0.0, 0.25)
        p = random_params(rng, 2, mixing=scn)
        p_sn = SniParams(p.mu, p.sigma, p.lam, SN)
        y = rng.normal(size=2)
        assert sni.sni_logpdf(y, p) == pytest.approx(sni.sn_logpdf(y, p_sn), abs=1e-14)

    def test_skew_t_zero_skew_is_student_t(self):
        p = SniParams([0.0], [[1.0]], [0.0], MixingSpec.skew_t(4.0))
        want = sps.t.logpdf(0.0, 4.0)
        assert sni.sni_logpdf([0.0], p) == pytest.approx(want, abs=1e-8)
        assert math.exp(want) == pytest.approx(
            math.gamma(2.5) / (math.sqrt(4 * math.pi) * math.gamma(2.0))
        )

    def test_skew_t_matches_azzalini_closed_form(self):
        # f(x) = 2 t_nu(x) T_{nu+1}(lam x sqrt((nu+1)/(nu+x^2)))
        nu, lam = 5.0, 1.3
        p = SniParams([0.0], [[1.0]], [lam], MixingSpec.skew_t(nu))
        for x in [-2.0, -0.5, 0.0, 0.8, 2.5]:
            want = (
                math.log(2.0)
                + sps.t.logpdf(x, nu)
                + sps.t.logcdf(lam * x * math.sqrt((nu + 1) / (nu + x * x)), nu + 1)
            )
            assert sni.sni_logpdf([x], p) == pytest.approx(want, abs=1e-7)

    @pytest.mark.parametrize(
        "mixing",
        [
            SN,
            MixingSpec.skew_t(4.0),
            MixingSpec.skew_slash(2.0),
            MixingSpec.skew_contaminated(0.3, 0.25),
        ],
        ids=["sn", "st", "ssl", "scn"],
    )
    def test_univariate_density_normalizes(self, mixing, rng):
        p = SniParams([0.4], [[2.0]], [1.1], mixing)
        width = 50.0 * math.sqrt(2.0)
        val, _ = integrate.quad(
            lambda x: math.exp(sni.sni_logpdf([x], p)),
            0.4 - width,
            0.4 + width,
            limit=400,
        )
        assert abs(val - 1.0) < 1e-6


class TestSniSample:
    def test_zero_skew_normal_covariance(self, rng):
        sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
        p = SniParams([0.0, 0.0], sigma, [0.0, 0.0], SN)
        draws = sni.sni_sample(p, rng, size=100_000)
        cov = np.cov(draws.T)
        for i in range(2):
            for j in range(2):
                se = math.sqrt(
                    (sigma[i, i] * sigma[j, j] + sigma[i, j] ** 2) / draws.shape[0]
                )
                assert abs(cov[i, j] - sigma[i, j]) < 3 * se

    def test_univariate_mean_formula(self, rng):
        lam = 1.1
        delta = lam / math.sqrt(1 + lam * lam)
        p = SniParams([0.0], [[1.0]], [lam], SN)
        draws = sni.sni_sample(p, rng, size=1_000_000)[:, 0]
        mean = math.sqrt(2 / math.pi) * delta
        se = math.sqrt((1 - mean * mean) / draws.size)
        assert abs(draws.mean() - mean) < 3 * se

    def test_skew_normal_ks_against_owen_cdf(self, rng):
        lam = 1.4
        p = SniParams([0.0], [[1.0]], [lam], SN)
        draws = sni.sni_sample(p, rng, size=100_000)[:, 0]
        from scipy.special import owens_t

        cdf = lambda z: sps.norm.cdf(z) - 2 * owens_t(z, lam)
        res = sps.kstest(draws, cdf)
        assert res.pvalue > 0.001

    def test_skew_t_ks_against_numeric_cdf(self, rng):
        p = SniParams([0.0], [[1.0]], [1.0], MixingSpec.skew_t(4.0))
        draws = sni.sni_sample(p, rng, size=100_000)[:, 0]
        grid = np.linspace(-25, 25, 4001)
        pdf = np.exp([sni.sni_logpdf([g], p) for g in grid])
        cdf_grid = integrate.cumulative_trapezoid(pdf, grid, initial=0.0)
        cdf_grid /= cdf_grid[-1]
        res = sps.kstest(draws, lambda z: np.interp(z, grid, cdf_grid))
        assert res.pvalue > 0.001


class TestMarginalParams:
    def test_zero_skew_block_diagonal(self):
        sigma = np.block([
            [np.array([[2.0, 0.3], [0.3, 1.0]]), np.zeros((2, 1))],
            [np.zeros((1, 2)), np.array([[4.0]])],
        ])
        p = SniParams(np.zeros(3), sigma, np.zeros(3), SN)
        res = sni.marginal_params(p, 2)
        assert np.allclose(res.params.lam, 0.0)
        assert np.allclose(res.sigma_22_1, [[4.0]])

    def test_skew_only_in_kept_block(self):
        sigma = np.diag([2.0, 1.0, 3.0])
        lam = np.array([1.2, -0.4, 0.0])
        p = SniParams(np.zeros(3), sigma, lam, SN)
        res = sni.marginal_params(p, 2)
        # with sigma block-diagonal and v2 = 0 the formula collapses
        assert np.allclose(res.params.lam, lam[:2], atol=1e-12)
        root_inv = np.diag(1.0 / np.sqrt(np.diag(sigma)))
        assert np.allclose(res.v_tilde, (root_inv @ lam)[:2], atol=1e-12)

    @pytest.mark.parametrize(
        "mixing", [SN, MixingSpec.skew_t(5.0)], ids=["sn", "st"]
    )
    def test_quadrature_marginalization_oracle(self, mixing, rng):
        p = random_params(rng, 2, mixing=mixing, lam_scale=1.0)
        res = sni.marginal_params(p, 1)
        sd2 = math.sqrt(p.sigma[1, 1])
        for y1 in np.linspace(p.mu[0] - 2, p.mu[0] + 2, 5):
            joint, _ = integrate.quad(
                lambda y2: math.exp(sni.sni_logpdf([y1, y2], p)),
                p.mu[1] - 40 * sd2,
                p.mu[1] + 40 * sd2,
                limit=300,
            )
            marg = math.exp(sni.sni_logpdf([y1], res.params))
            assert abs(joint - marg) < 1e-6


class TestConditional:
    def test_zero_skew_reduces_to_gaussian_conditional(self, rng):
        sigma = random_spd(rng, 3)
        mu = rng.normal(size=3)
        p = SniParams(mu, sigma, np.zeros(3), SN)
        y1 = rng.normal(size=2)
        y2 = rng.normal(size=1)
        got = sni.conditional_logpdf(y2, y1, 1.0, p)
        s11, s12 = sigma[:2, :2], sigma[:2, 2:]
        mu_c = mu[2:] + s12.T @ np.linalg.solve(s11, y1 - mu[:2])
        var_c = sigma[2:, 2:] - s12.T @ np.linalg.solve(s11, s12)
        want = sps.norm.logpdf(y2[0], mu_c[0], math.sqrt(var_c[0, 0]))
        assert got == pytest.approx(want, abs=1e-10)

    @pytest.mark.parametrize("u", [1.0, 0.35, 2.2])
    def test_chain_rule_identity(self, u, rng):
        for _ in range(12):
            p = random_params(rng, 3, lam_scale=1.0)
            y = rng.normal(size=3) + p.mu
            marg = sni.marginal_params(p, 2)
            lhs = sni.sn_logpdf_free(y, p.mu, p.sigma / u, p.lam)
            rhs = (
                sni.sn_logpdf_free(y[:2], p.mu[:2], marg.params.sigma / u, marg.params.lam)
                + sni.conditional_logpdf(y[2:], y[:2], u, p)
            )
            assert lhs == pytest.approx(rhs, abs=1e-10)

    def test_conditional_normalizes(self, rng):
        p = random_params(rng, 2, lam_scale=1.0)
        y1 = np.array([p.mu[0] + 0.7])
        u = 0.8
        val, _ = integrate.quad(
            lambda y2: math.exp(sni.conditional_logpdf([y2], y1, u, p)),
            -20.0,
            20.0,
            limit=400,
        )
        assert abs(val - 1.0) < 1e-6

    def test_conditional_mean_no_skew_in_dropped_block(self, rng):
        # sigma block diagonal and lam zero in the dropped slot => v2 = 0
        sigma = np.diag([1.5, 2.5])
        p = SniParams([0.1, -0.4], sigma, [0.9, 0.0], SN)
        got = sni.conditional_mean([1.0], 1.3, p)
        assert np.allclose(got, [-0.4])

    def test_conditional_mean_zero_skew_gaussian(self, rng):
        sigma = random_spd(rng, 2)
        mu = rng.normal(size=2)
        p = SniParams(mu, sigma, np.zeros(2), SN)
        y1 = np.array([0.3])
        got = sni.conditional_mean(y1, 1.0, p)
        want = mu[1] + sigma[1, 0] / sigma[0, 0] * (y1[0] - mu[0])
        assert got[0] == pytest.approx(want, abs=1e-12)

    def test_conditional_mean_matches_rejection_sampler(self, rng):
        for _ in range(3):
            p = random_params(rng, 2, lam_scale=1.0)
            u = float(rng.uniform(0.5, 1.5))
            y1 = np.array([p.mu[0] + rng.normal()])
            got = sni.conditional_mean(y1, u, p)[0]

            marg = sni.marginal_params(p, 1)
            s221 = marg.sigma_22_1[0, 0]
            s11 = p.sigma[:1, :1]
            mu_c = p.mu[1] + p.sigma[1, 0] / s11[0, 0] * (y1[0] - p.mu[0])
            v = np.linalg.inv(np.real(sqrtm(p.sigma))) @ p.lam
            n = 1_000_000
            cand = rng.normal(mu_c, math.sqrt(s221 / u), size=n)
            resid = np.column_stack([np.full(n, y1[0] - p.mu[0]), cand - p.mu[1]])
            acc_p = sps.norm.cdf(math.sqrt(u) * resid @ v)
            keep = rng.random(n) < acc_p
            sample = cand[keep]
            se = sample.std() / math.sqrt(sample.size)
            assert abs(got - sample.mean()) < 3 * se
