"""Independent reference computations shared by the tests."""

import math

import numpy as np
from scipy.special import eval_legendre


def orthonormal_legendre(n, x):
    """Orthonormal shifted Legendre values from scipy's classical polynomials."""
    return math.sqrt(2 * n + 1) * eval_legendre(n, 2 * np.asarray(x, dtype=float) - 1)


def sum_of_squares(exponents, Y):
    """``sum_eta prod_j P_{eta_j}(y_j)^2`` without the package's basis code."""
    Y = np.atleast_2d(Y)
    out = np.zeros(len(Y))
    for eta in exponents:
        term = np.ones(len(Y))
        for j, n in enumerate(eta):
            term *= orthonormal_legendre(n, Y[:, j])
        out += term ** 2
    return out


def bin_probabilities(density, edges, q=40):
    """Integrate a 1-D Lebesgue density over each bin with ``q``-point Gauss rules."""
    x, w = np.polynomial.legendre.leggauss(q)
    probs = []
    for a, b in zip(edges[:-1], edges[1:]):
        pts = (b - a) / 2 * x + (a + b) / 2
        probs.append((b - a) / 2 * np.dot(w, density(pts)))
    return np.array(probs)


def arcsine_cdf(y):
    return 2.0 / np.pi * np.arcsin(np.sqrt(y))
