import math

import numpy as np
import pytest
from scipy import stats

from mlwls.indexsets import DownwardClosedSet, total_degree_set
from mlwls.sampling import (ENVELOPE, SamplingError, SamplingSpec, WeightedSampleSet,
                            arcsine_transform, arcsine_weight, density_bounds_check,
                            estimate_mis_bound, make_rng, mis_burn_in, mis_sample,
                            optimal_density, optimal_weight, sample, sample_arcsine,
                            sample_optimal, sample_perturbed, sample_squared_legendre,
                            stability_margin, stability_threshold)

from oracles import arcsine_cdf, bin_probabilities, sum_of_squares


class TestArcsine:
    def test_center(self):
        assert arcsine_transform(np.zeros(3)).tolist() == [0.5, 0.5, 0.5]

    def test_weight_center(self):
        assert arcsine_weight(np.array([[0.5]]))[0] == pytest.approx(math.pi / 2)

    def test_ks(self):
        s = sample_arcsine(1, 10 ** 5, seed=3)
        res = stats.kstest(s.points[:, 0], arcsine_cdf)
        assert res.pvalue > 0.01

    def test_moments(self):
        Y = sample_arcsine(2, 10 ** 6, seed=4).points
        se_mean = math.sqrt(1 / 8 / len(Y))
        assert np.all(np.abs(Y.mean(axis=0) - 0.5) < 5 * se_mean)
        # fourth central moment of the arcsine law on [0,1] is 3/128
        se_var = math.sqrt((3 / 128 - 1 / 64) / len(Y))
        assert np.all(np.abs(Y.var(axis=0) - 1 / 8) < 5 * se_var)

    def test_open_interval(self):
        Y = arcsine_transform(np.array([-np.pi / 2, np.pi / 2]))
        assert np.all((Y > 0) & (Y < 1))

    def test_deterministic(self):
        a = sample_arcsine(3, 100, 9, 1, 2).points
        b = sample_arcsine(3, 100, 9, 1, 2).points
        c = sample_arcsine(3, 100, 9, 1, 3).points
        assert np.array_equal(a, b) and not np.array_equal(a, c)


class TestOptimal:
    def test_constants_uniform(self):
        s = sample_optimal(DownwardClosedSet([(0, 0)]), 2000, seed=1)
        assert np.all(s.weights == 1.0)
        assert stats.kstest(s.points[:, 0], "uniform").pvalue > 0.01

    def test_weight_identity(self):
        space = total_degree_set(2, 4)
        s = sample_optimal(space, 500, seed=2)
        assert np.allclose(s.weights * optimal_density(space, s.points), 1.0, rtol=1e-12)

    def test_chi_square_degree2(self):
        space = total_degree_set(1, 2)
        s = sample_optimal(space, 10 ** 5, seed=5)
        edges = np.linspace(0, 1, 51)
        probs = bin_probabilities(lambda x: sum_of_squares(space, x[:, None]) / 3, edges)
        counts, _ = np.histogram(s.points[:, 0], edges)
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert stats.chisquare(counts, probs * len(s)).pvalue > 0.01

    def test_proposal_stats_recorded(self):
        s = sample_optimal(total_degree_set(1, 3), 1000, seed=0)
        acc, prop = s.stats["proposals"][3]
        assert 0 < acc <= prop

    def test_cap_raises(self):
        with pytest.raises(SamplingError):
            sample_squared_legendre(5, 50, make_rng(0), max_proposals=1)


class TestWeights:
    def test_constants(self):
        assert optimal_weight(DownwardClosedSet([(0,)]), np.array([0.3])) == 1.0

    def test_linear_center(self):
        assert optimal_weight(total_degree_set(1, 1), np.array([0.5])) == pytest.approx(2.0)

    def test_density_identity(self):
        space = total_degree_set(3, 3)
        Y = make_rng(0).uniform(size=(1000, 3))
        assert np.allclose(optimal_weight(space, Y) * optimal_density(space, Y), 1.0)


class TestMis:
    def test_burn_in_examples(self):
        assert mis_burn_in(1.0, 1) == 4
        assert mis_burn_in(0.5, 2) == 10

    def test_bad_g(self):
        with pytest.raises(ValueError):
            mis_burn_in(0.0, 3)

    def test_bound_positive(self):
        assert 0 < estimate_mis_bound(total_degree_set(1, 1)) <= 1

    def test_stats_and_weights(self):
        space = total_degree_set(1, 1)
        s = mis_sample(space, 200, seed=1, g=0.5)
        assert s.stats["burn_in"] == 10
        assert np.allclose(s.weights, optimal_weight(space, s.points))


class TestPerturbedAndDispatch:
    def test_dispatch_kinds(self):
        space = total_degree_set(2, 2)
        for kind in ("optimal", "arcsine", "mis"):
            s = sample(SamplingSpec(kind, 2, space), 50, 0)
            assert s.points.shape == (50, 2) and np.all(s.weights > 0)

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            SamplingSpec("optimal", 2)
        with pytest.raises(ValueError):
            SamplingSpec("perturbed", 1, total_degree_set(1, 1), contamination=1.0)

    def test_perturbed_keeps_optimal_weights(self):
        space = total_degree_set(1, 3)
        s = sample_perturbed(space, 300, 0.2, seed=0)
        assert np.allclose(s.weights, optimal_weight(space, s.points))


class TestDiagnostics:
    def test_threshold_formula(self):
        assert stability_threshold(1, math.inf) == pytest.approx(1 / 6)
        assert stability_threshold(4, 2) == pytest.approx(1 / 48)

    def test_exact_density_passes(self):
        res = stability_margin(total_degree_set(2, 3), lambda Y: np.ones(len(Y)))
        assert res.margin == 0 and res.passed

    def test_contamination_margin_quadrature_vs_mc(self):
        space = total_degree_set(1, 2)
        eps = 0.01

        def ratio(Y):
            return (1 - eps) + eps / optimal_density(space, Y)

        quad = stability_margin(space, ratio, p=1).margin
        Y = sample_optimal(space, 10 ** 6, seed=3).points
        mc = np.mean(np.abs(1 - ratio(Y)))
        assert quad == pytest.approx(mc, rel=0.02)

    def test_density_bounds_constants(self):
        lo, hi = density_bounds_check(DownwardClosedSet([(0, 0)]), 101)
        assert lo == pytest.approx(1.0)
        assert hi <= (math.pi / 2) ** 2 + 1e-12

    def test_density_bounds_d1(self):
        assert density_bounds_check(total_degree_set(1, 10))[1] <= ENVELOPE

    def test_density_bounds_d2(self):
        lo, hi = density_bounds_check(total_degree_set(2, 4), 400)
        assert lo > 0 and hi <= ENVELOPE ** 2


def test_text_round_trip():
    s = sample_arcsine(2, 5, seed=0)
    pts, w = WeightedSampleSet.read_text(s.to_text())
    assert np.array_equal(pts, s.points) and np.array_equal(w, s.weights)
