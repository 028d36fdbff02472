import math

import numpy as np
import pytest
from scipy.integrate import quad

from fleet_sp.density import (DensityError, KdeModel, ParamModel, ScenarioSet,
                              kde_fit, kde_pdf, kde_sample, make_scenarios,
                              parametric_fit, parametric_pdf,
                              parametric_sample, read_densities,
                              read_scenarios, round_half_away,
                              write_densities, write_scenarios)


class TestKdeFit:
    def test_fixed_bandwidth(self):
        model = kde_fit([-1.0, 1.0], bandwidth=1.0)
        assert model.bandwidth == 1.0
        assert model.samples == (-1.0, 1.0)

    def test_silverman_formula(self):
        # 50 symmetric pairs scaled so the sample std (ddof=1) is exactly
        # 1 and IQR/1.34 exceeds it: h = 0.9 * 1 * 100^(-1/5).
        a = math.sqrt(99.0 / 100.0)
        samples = [-a] * 50 + [a] * 50
        assert np.std(samples, ddof=1) == pytest.approx(1.0, abs=1e-12)
        assert (np.percentile(samples, 75) - np.percentile(samples, 25)) / 1.34 >= 1.0
        model = kde_fit(samples, "silverman")
        expected = 0.9 * 1.0 * 100 ** (-0.2)
        assert model.bandwidth == pytest.approx(expected, abs=1e-12)
        assert model.bandwidth == pytest.approx(0.35831, abs=1e-4)

    def test_silverman_iqr_zero_falls_back_to_std(self):
        samples = [5.0] * 40 + [9.0, 1.0]
        model = kde_fit(samples, "silverman")
        expected = 0.9 * np.std(samples, ddof=1) * 42 ** (-0.2)
        assert model.bandwidth == pytest.approx(expected, rel=1e-12)

    def test_degenerate_samples_rejected(self):
        with pytest.raises(DensityError):
            kde_fit([5.0, 5.0, 5.0], "silverman")
        with pytest.raises(DensityError):
            kde_fit([1.0], "silverman")
        with pytest.raises(DensityError):
            kde_fit([1.0, 2.0], bandwidth=0.0)
        with pytest.raises(DensityError):
            kde_fit([1.0, 2.0], "scott")


class TestKdePdf:
    def test_single_point_standard_normal(self):
        model = KdeModel(samples=(0.0,), bandwidth=1.0)
        assert kde_pdf(model, 0.0) == pytest.approx(1.0 / math.sqrt(2 * math.pi),
                                                    abs=1e-12)

    def test_symmetric_pair(self):
        model = KdeModel(samples=(-1.0, 1.0), bandwidth=1.0)
        phi1 = math.exp(-0.5) / math.sqrt(2 * math.pi)
        assert kde_pdf(model, 0.0) == pytest.approx(phi1, abs=1e-12)

    def test_nonnegative_and_vectorized(self):
        model = KdeModel(samples=(0.0, 10.0), bandwidth=1.0)
        xs = np.linspace(-20, 30, 301)
        vals = kde_pdf(model, xs)
        assert vals.shape == xs.shape
        assert (vals >= 0).all()

    def test_quadrature_normalization(self):
        model = KdeModel(samples=(0.0, 10.0), bandwidth=1.0)
        total, _ = quad(lambda v: kde_pdf(model, v), -50.0, 60.0, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)


class TestKdeSample:
    def test_degenerate_kernel_concentrates(self):
        model = KdeModel(samples=(4.25,), bandwidth=1e-9)
        draws = kde_sample(model, 4, seed=7)
        assert np.abs(draws - 4.25).max() < 1e-6

    def test_moment_identities(self):
        model = KdeModel(samples=(-1.0, 1.0), bandwidth=1.0)
        n = 100_000
        draws = kde_sample(model, n, seed=1234)
        # law: mean = sample mean, variance = population variance + h^2
        sigma = math.sqrt(model.variance)
        assert draws.mean() == pytest.approx(0.0, abs=3 * sigma / math.sqrt(n))
        assert model.variance == pytest.approx(2.0)
        assert draws.var() == pytest.approx(model.variance, rel=0.05)

    def test_seed_reproducibility(self):
        model = KdeModel(samples=(3.0, 8.0, 9.0), bandwidth=0.5)
        a = kde_sample(model, 64, seed=99)
        b = kde_sample(model, 64, seed=99)
        assert np.array_equal(a, b)
        c = kde_sample(model, 64, seed=100)
        assert not np.array_equal(a, c)


def test_kde_captures_bimodal_demand_where_gaussian_cannot():
    # Two-peaked daily demand (quiet weekdays, busy weekends): the KDE
    # keeps both modes while a single gaussian averages them away.
    rng = np.random.default_rng(8)
    weekday = rng.normal(10.0, 1.5, 250)
    weekend = rng.normal(30.0, 2.0, 100)
    samples = np.concatenate([weekday, weekend])
    kde = kde_fit(samples, "silverman")
    gauss = parametric_fit(samples, "gaussian")
    xs = np.linspace(0, 45, 901)

    def local_maxima(vals):
        return sum(1 for k in range(1, len(vals) - 1)
                   if vals[k] > vals[k - 1] and vals[k] > vals[k + 1])

    assert local_maxima(kde_pdf(kde, xs)) == 2
    assert local_maxima(parametric_pdf(gauss, xs)) == 1
    # the valley between the modes is nearly empty in the KDE but carries
    # the gaussian's bulk
    valley = 20.0
    assert kde_pdf(kde, valley) < 0.2 * parametric_pdf(gauss, valley)


class TestParametricFit:
    def test_gaussian_closed_form(self):
        model = parametric_fit([1.0, 2.0, 3.0], "gaussian")
        assert model.params == pytest.approx((2.0, 2.0 / 3.0))

    def test_laplace_median_and_mad(self):
        model = parametric_fit([1.0, 2.0, 4.0], "laplace")
        assert model.params == pytest.approx((2.0, 1.0))

    def test_lognormal_is_gaussian_on_logs(self):
        data = [1.0, math.e, math.e ** 2]
        model = parametric_fit(data, "lognormal")
        assert model.params == pytest.approx((1.0, 2.0 / 3.0))

    def test_exponential_rate(self):
        model = parametric_fit([1.0, 3.0], "exponential")
        assert model.params == pytest.approx((0.5,))

    def test_positivity_requirements(self):
        with pytest.raises(DensityError):
            parametric_fit([-1.0, 2.0], "exponential")
        with pytest.raises(DensityError):
            parametric_fit([0.0, 2.0], "lognormal")
        with pytest.raises(DensityError):
            parametric_fit([3.0, 3.0], "gaussian")
        with pytest.raises(DensityError):
            parametric_fit([1.0, 2.0], "weibull")

    def test_pdfs_normalize(self):
        for model, lo, hi in (
                (parametric_fit([2.0, 4.0, 5.0], "gaussian"), -40, 50),
                (parametric_fit([2.0, 4.0, 5.0], "laplace"), -60, 70),
                (parametric_fit([2.0, 4.0, 5.0], "lognormal"), 1e-9, 1e3),
                (parametric_fit([2.0, 4.0, 5.0], "exponential"), 0, 200)):
            total, _ = quad(lambda v: parametric_pdf(model, v), lo, hi, limit=300)
            assert total == pytest.approx(1.0, abs=1e-5), model.family


class TestParametricSample:
    def test_gaussian_clt_mean(self):
        model = ParamModel("gaussian", (5.0, 1.0))
        n = 100_000
        draws = parametric_sample(model, n, seed=21)
        assert draws.mean() == pytest.approx(5.0, abs=3.0 / math.sqrt(n))

    def test_exponential_mean(self):
        model = ParamModel("exponential", (2.0,))
        draws = parametric_sample(model, 100_000, seed=22)
        assert draws.mean() == pytest.approx(0.5, rel=0.05)

    def test_seed_reproducibility(self):
        model = ParamModel("laplace", (1.0, 2.0))
        assert np.array_equal(parametric_sample(model, 50, 3),
                              parametric_sample(model, 50, 3))


class TestMakeScenarios:
    def test_rounding_of_constant(self):
        models = {5: KdeModel(samples=(4.4,), bandwidth=1e-9)}
        scen = make_scenarios(models, 3, seed=42)
        assert scen.locations == (5,)
        assert (scen.demands == 4).all()
        assert scen.probabilities == pytest.approx([1 / 3] * 3)

    def test_single_scenario_probability_one(self):
        models = {1: ParamModel("gaussian", (3.0, 1.0))}
        scen = make_scenarios(models, 1, seed=0)
        assert scen.probabilities == pytest.approx([1.0])

    def test_negative_draws_clamped(self):
        models = {1: ParamModel("gaussian", (-10.0, 1.0))}
        scen = make_scenarios(models, 100, seed=9)
        assert (scen.demands == 0).all()

    def test_invariants_on_mixed_models(self):
        models = {
            1: KdeModel(samples=(2.0, 6.0, 9.0), bandwidth=1.5),
            7: ParamModel("laplace", (4.0, 2.0)),
            9: ParamModel("exponential", (0.3,)),
        }
        scen = make_scenarios(models, 257, seed=77)
        assert scen.demands.shape == (257, 3)
        assert (scen.demands >= 0).all()
        assert abs(scen.probabilities.sum() - 1.0) <= 1e-12
        again = make_scenarios(models, 257, seed=77)
        assert np.array_equal(scen.demands, again.demands)

    def test_round_half_away(self):
        vals = round_half_away([0.5, 1.5, -0.5, -1.5, 2.4, -2.4])
        assert list(vals) == [1.0, 2.0, -1.0, -2.0, 2.0, -2.0]


class TestScenarioSetValidation:
    def test_probability_sum_enforced(self):
        with pytest.raises(DensityError):
            ScenarioSet(locations=(1,), demands=np.array([[1], [2]]),
                        probabilities=np.array([0.5, 0.6]))

    def test_negative_demand_rejected(self):
        with pytest.raises(DensityError):
            ScenarioSet(locations=(1,), demands=np.array([[-1]]),
                        probabilities=np.array([1.0]))

    def test_shape_mismatch_rejected(self):
        with pytest.raises(DensityError):
            ScenarioSet(locations=(1, 2), demands=np.array([[1]]),
                        probabilities=np.array([1.0]))


class TestSerialization:
    def test_scenario_round_trip(self, tmp_path):
        scen = ScenarioSet(locations=(7, 12), demands=np.array([[3, 1], [0, 9]]),
                           probabilities=np.array([0.5, 0.5]))
        path = tmp_path / "scenarios.csv"
        write_scenarios(scen, path)
        back = read_scenarios(path)
        assert back.locations == scen.locations
        assert np.array_equal(back.demands, scen.demands)
        assert np.array_equal(back.probabilities, scen.probabilities)

    def test_density_round_trip(self, tmp_path):
        models = {
            7: KdeModel(samples=(1.0, 4.0, 6.0), bandwidth=0.8),
            12: ParamModel("gaussian", (5.0, 2.0)),
            15: ParamModel("exponential", (0.25,)),
        }
        path = tmp_path / "densities.csv"
        write_densities(models, path, samples_path="train.csv")

        def loader(ref):
            assert ref == "train.csv"
            return {7: np.array([1.0, 4.0, 6.0])}

        back = read_densities(path, loader)
        assert back[7].samples == models[7].samples
        assert back[7].bandwidth == models[7].bandwidth
        assert back[12].params == models[12].params
        assert back[15].params == models[15].params
