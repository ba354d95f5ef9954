import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import eval_legendre

from mlwls.indexsets import total_degree_set
from mlwls.polybasis import (DomainError, LegendreFeatures, TensorLegendreBasis, eval_tensor,
                             eval_univariate, gauss_rule, legendre_table)


def scipy_orthonormal(n, x):
    return math.sqrt(2 * n + 1) * eval_legendre(n, 2 * np.asarray(x) - 1)


class TestUnivariate:
    def test_constant(self):
        assert eval_univariate(0, 0.37) == 1.0

    def test_odd_symmetry(self):
        assert eval_univariate(1, 0.5) == 0.0

    def test_endpoint(self):
        assert eval_univariate(2, 1.0) == pytest.approx(math.sqrt(5), abs=1e-12)

    def test_domain(self):
        with pytest.raises(DomainError):
            eval_univariate(3, 1.2)

    @given(st.integers(0, 40), st.floats(0, 1))
    def test_matches_scipy(self, n, x):
        assert eval_univariate(n, x) == pytest.approx(scipy_orthonormal(n, x), abs=1e-9)

    def test_normalization_by_quadrature(self):
        rule = gauss_rule(1, 30)
        T = legendre_table(20, rule.nodes[:, 0])
        G = T.T @ (rule.weights[:, None] * T)
        assert np.allclose(G, np.eye(21), atol=1e-12)


class TestTensor:
    def test_product(self):
        y = [0.2, 0.7, 0.9]
        assert eval_tensor((1, 0, 3), y) == pytest.approx(
            eval_univariate(1, 0.2) * eval_univariate(3, 0.9))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            eval_tensor((1, 2), [0.5])

    def test_basis_matches_pointwise(self):
        space = total_degree_set(3, 4)
        Y = np.random.default_rng(0).uniform(size=(7, 3))
        B = TensorLegendreBasis(space).evaluate(Y)
        for j, eta in enumerate(space):
            for i in range(len(Y)):
                assert B[i, j] == pytest.approx(eval_tensor(eta, Y[i]), rel=1e-12, abs=1e-12)

    def test_duplicates_rejected(self):
        with pytest.raises(ValueError):
            TensorLegendreBasis([(0, 1), (0, 1)])

    def test_sum_of_squares(self):
        space = total_degree_set(2, 3)
        Y = np.random.default_rng(1).uniform(size=(50, 2))
        b = TensorLegendreBasis(space)
        assert np.allclose(b.sum_of_squares(Y, chunk=7), (b.evaluate(Y) ** 2).sum(axis=1))


class TestQuadrature:
    def test_weights_sum(self):
        for d in (1, 2, 3):
            assert gauss_rule(d, 5).weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_exactness(self):
        rule = gauss_rule(2, 4)  # degree 7 per axis
        vals = rule.nodes[:, 0] ** 7 * rule.nodes[:, 1] ** 6
        assert rule.integrate(vals) == pytest.approx(1 / 8 * 1 / 7, rel=1e-13)


class TestFeatures:
    def test_transform_shape(self):
        X = np.random.default_rng(0).uniform(size=(5, 2))
        F = LegendreFeatures(degree=3).fit_transform(X)
        assert F.shape == (5, 10)
        assert np.allclose(F[:, 0], 1.0)

    def test_rejects_outside(self):
        with pytest.raises(ValueError):
            LegendreFeatures().fit(np.array([[0.5, 1.5]]))

    def test_get_params(self):
        assert LegendreFeatures(degree=4).get_params()["degree"] == 4
