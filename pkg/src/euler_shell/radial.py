"""Chebyshev collocation on a radial interval.

Nodes are Chebyshev-Gauss-Lobatto points ordered by increasing radius.  The
helpers here are the radial half of every tensor-product grid in the package.
"""

from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev as C


def lobatto_nodes(a, b, n):
    """n+1 Chebyshev-Gauss-Lobatto points on [a, b], increasing."""
    if n < 1:
        raise ValueError("need at least two radial nodes")
    j = np.arange(n + 1)
    # sine form keeps the nodes symmetric to roundoff
    return 0.5 * (a + b) + 0.5 * (b - a) * np.sin(np.pi * (2 * j - n) / (2 * n))


def _bary_weights(n):
    w = (-1.0) ** np.arange(n + 1)
    w[0] *= 0.5
    w[-1] *= 0.5
    return w


class ChebInterval:
    """Spectral calculus on [a, b] sampled at n+1 Lobatto nodes."""

    def __init__(self, a, b, n):
        if not b > a:
            raise ValueError("interval must satisfy a < b")
        self.a, self.b, self.n = float(a), float(b), int(n)
        self.nodes = lobatto_nodes(a, b, n)
        self.bary = _bary_weights(n)

    @property
    def size(self):
        return self.n + 1

    def _t(self, x):
        return (2.0 * np.asarray(x, dtype=float) - self.a - self.b) / (self.b - self.a)

    @cached_property
    def diff_matrix(self):
        w = self.bary
        # node differences from the half-angle identity avoid cancellation
        ang = np.pi * (2 * np.arange(self.n + 1) - self.n) / (2 * self.n)
        s, c = 0.5 * (ang[:, None] - ang[None, :]), 0.5 * (ang[:, None] + ang[None, :])
        dx = (self.b - self.a) * np.cos(c) * np.sin(s)
        np.fill_diagonal(dx, 1.0)
        D = (w[None, :] / w[:, None]) / dx
        np.fill_diagonal(D, 0.0)
        # negative-sum trick keeps constants in the null space to roundoff
        np.fill_diagonal(D, -D.sum(axis=1))
        return D

    @cached_property
    def diff2_matrix(self):
        return self.diff_matrix @ self.diff_matrix

    @cached_property
    def _vander_inv(self):
        V = C.chebvander(self._t(self.nodes), self.n)
        return np.linalg.inv(V)

    def coefficients(self, values):
        """Chebyshev coefficients (first axis) of nodal values."""
        return np.tensordot(self._vander_inv, values, axes=(1, 0))

    @cached_property
    def weights(self):
        """Clenshaw-Curtis quadrature weights."""
        n = self.n
        theta = np.pi * np.arange(n + 1) / n
        w = np.zeros(n + 1)
        v = np.ones(n - 1)
        if n % 2 == 0:
            w[0] = w[n] = 1.0 / (n * n - 1)
            for k in range(1, n // 2):
                v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
            v -= np.cos(n * theta[1:-1]) / (n * n - 1)
        else:
            w[0] = w[n] = 1.0 / (n * n)
            for k in range(1, (n - 1) // 2 + 1):
                v -= 2.0 * np.cos(2 * k * theta[1:-1]) / (4 * k * k - 1)
        w[1:-1] = 2.0 * v / n
        return w * 0.5 * (self.b - self.a)

    @cached_property
    def cumulative_matrix(self):
        """Matrix S with (S f)(x_i) = integral of f from a to x_i."""
        n = self.n
        eye = np.eye(n + 1)
        ci = C.chebint(eye, lbnd=-1.0, axis=0) * (0.5 * (self.b - self.a))
        Vx = C.chebvander(self._t(self.nodes), n + 1)
        return Vx @ ci @ self._vander_inv

    def derivative(self, values, order=1):
        D = self.diff_matrix if order == 1 else self.diff2_matrix
        if order not in (1, 2):
            D = np.linalg.matrix_power(self.diff_matrix, order)
        return np.tensordot(D, values, axes=(1, 0))

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))

    def cumulative(self, values):
        return np.tensordot(self.cumulative_matrix, values, axes=(1, 0))

    def interp_matrix(self, x):
        """Barycentric interpolation rows for the points x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        d = x[:, None] - self.nodes[None, :]
        exact = np.isclose(d, 0.0, atol=1e-15 * max(1.0, abs(self.b)))
        d = np.where(exact, 1.0, d)
        M = self.bary[None, :] / d
        M /= M.sum(axis=1, keepdims=True)
        rows = np.nonzero(exact.any(axis=1))[0]
        for i in rows:
            M[i] = exact[i].astype(float)
        return M

    def interpolate(self, values, x):
        return np.tensordot(self.interp_matrix(x), values, axes=(1, 0))
