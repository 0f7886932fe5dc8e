"""Real spherical harmonics on a Gauss-Legendre grid.

Basis: orthonormal real harmonics without the Condon-Shortley phase,
    Y_{n,0} = P_n0,  Y_{n,m} = sqrt2 P_nm cos(m phi),  Y_{n,-m} = sqrt2 P_nm sin(m phi),
with P_nm the associated Legendre functions normalized so that the Y are unit
vectors in L2(S^2).  Coefficient of (n, m) lives at index n*n + n + m.

Tangent fields are stored as Cartesian 3-vectors at the grid points; the
spectral view of a tangent field is its pair of Hodge potentials.
"""

from functools import cached_property

import numpy as np

FOUR_PI = 4.0 * np.pi


def index(n, m):
    if abs(m) > n:
        raise ValueError(f"|m| must not exceed n (got n={n}, m={m})")
    return n * n + n + m


def degrees(L):
    """Degree n of every coefficient slot up to L."""
    return np.concatenate([np.full(2 * n + 1, n) for n in range(L + 1)])


def orders(L):
    return np.concatenate([np.arange(-n, n + 1) for n in range(L + 1)])


def legendre_table(L, theta):
    """Normalized P_nm(cos theta) and d/dtheta, shape (len(theta), L+1, L+1).

    Indexing is [point, n, m] with zeros for m > n.  The derivative uses the
    sin(theta) division, so theta must stay away from the poles.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    x, s = np.cos(theta), np.sin(theta)
    P = np.zeros((theta.size, L + 1, L + 1))
    P[:, 0, 0] = 1.0 / np.sqrt(FOUR_PI)
    for m in range(1, L + 1):
        P[:, m, m] = np.sqrt((2 * m + 1) / (2.0 * m)) * s * P[:, m - 1, m - 1]
    for m in range(0, L):
        P[:, m + 1, m] = np.sqrt(2 * m + 3.0) * x * P[:, m, m]
    for m in range(0, L + 1):
        for n in range(m + 2, L + 1):
            a = np.sqrt((4.0 * n * n - 1) / (n * n - m * m))
            b = np.sqrt(((n - 1.0) ** 2 - m * m) / (4.0 * (n - 1) ** 2 - 1))
            P[:, n, m] = a * (x * P[:, n - 1, m] - b * P[:, n - 2, m])
    dP = np.zeros_like(P)
    for n in range(1, L + 1):
        for m in range(0, n + 1):
            c = np.sqrt((2 * n + 1.0) / (2 * n - 1) * (n * n - m * m))
            dP[:, n, m] = (n * x * P[:, n, m] - c * P[:, n - 1, m]) / s
    return P, dP


def basis(L, theta, phi, derivatives=False):
    """Real harmonics at points; optionally d/dtheta and (d/dphi)/sin(theta)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    P, dP = legendre_table(L, theta)
    K = (L + 1) ** 2
    Y = np.empty((theta.size, K))
    if derivatives:
        Yt = np.empty_like(Y)
        Yp = np.empty_like(Y)
        s = np.sin(theta)
    r2 = np.sqrt(2.0)
    for n in range(L + 1):
        Y[:, index(n, 0)] = P[:, n, 0]
        if derivatives:
            Yt[:, index(n, 0)] = dP[:, n, 0]
            Yp[:, index(n, 0)] = 0.0
        for m in range(1, n + 1):
            cm, sm = np.cos(m * phi), np.sin(m * phi)
            Y[:, index(n, m)] = r2 * P[:, n, m] * cm
            Y[:, index(n, -m)] = r2 * P[:, n, m] * sm
            if derivatives:
                Yt[:, index(n, m)] = r2 * dP[:, n, m] * cm
                Yt[:, index(n, -m)] = r2 * dP[:, n, m] * sm
                Yp[:, index(n, m)] = -m * r2 * P[:, n, m] * sm / s
                Yp[:, index(n, -m)] = m * r2 * P[:, n, m] * cm / s
    if derivatives:
        return Y, Yt, Yp
    return Y


def frame(theta, phi):
    """Unit normal, e_theta and e_phi as Cartesian rows."""
    st, ct, sp, cp = np.sin(theta), np.cos(theta), np.sin(phi), np.cos(phi)
    n = np.stack([st * cp, st * sp, ct], axis=-1)
    et = np.stack([ct * cp, ct * sp, -st], axis=-1)
    ep = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
    return n, et, ep


def to_angles(X):
    X = np.asarray(X, dtype=float)
    r = np.linalg.norm(X, axis=-1)
    theta = np.arccos(np.clip(X[..., 2] / r, -1.0, 1.0))
    phi = np.arctan2(X[..., 1], X[..., 0])
    return theta, phi


class SphereGrid:
    """Gauss-Legendre colatitudes times uniform longitudes, flattened.

    The default sizes nlat = L+2, nlon = 2(L+2) integrate products of two
    degree-L fields exactly with one degree of margin.
    """

    def __init__(self, L, nlat=None, nlon=None):
        self.L = int(L)
        self.nlat = int(nlat) if nlat is not None else self.L + 2
        self.nlon = int(nlon) if nlon is not None else 2 * (self.L + 2)
        if self.nlat < self.L + 1 or self.nlon < 2 * self.L + 1:
            raise ValueError(
                f"grid {self.nlat}x{self.nlon} too coarse for L_max={self.L}")
        z, wz = np.polynomial.legendre.leggauss(self.nlat)
        order = np.argsort(-z)
        z, wz = z[order], wz[order]
        lon = 2.0 * np.pi * np.arange(self.nlon) / self.nlon
        th = np.arccos(z)
        T, Ph = np.meshgrid(th, lon, indexing="ij")
        self.theta = T.ravel()
        self.phi = Ph.ravel()
        self.weights = np.repeat(wz, self.nlon) * (2.0 * np.pi / self.nlon)
        self.normal, self.e_theta, self.e_phi = frame(self.theta, self.phi)
        self.degree = degrees(self.L)
        self.order = orders(self.L)
        self.eig = self.degree * (self.degree + 1.0)

    @property
    def size(self):
        return self.theta.size

    @property
    def ncoef(self):
        return (self.L + 1) ** 2

    @cached_property
    def _tables(self):
        return basis(self.L, self.theta, self.phi, derivatives=True)

    @property
    def Y(self):
        return self._tables[0]

    @cached_property
    def analysis_matrix(self):
        return (self.Y * self.weights[:, None]).T

    @cached_property
    def grad_basis(self):
        """Cartesian surface gradient of every basis function, (Na, K, 3)."""
        _, Yt, Yp = self._tables
        return (Yt[:, :, None] * self.e_theta[:, None, :]
                + Yp[:, :, None] * self.e_phi[:, None, :])

    @cached_property
    def rotgrad_basis(self):
        """n x grad Y for every basis function, (Na, K, 3)."""
        return np.cross(self.normal[:, None, :], self.grad_basis)

    def _check(self, f, axis_len):
        if f.shape[-1] != axis_len:
            raise ValueError(
                f"last axis has length {f.shape[-1]}, expected {axis_len}")

    def analyze(self, f):
        """Grid values (..., Na) to coefficients (..., K)."""
        f = np.asarray(f, dtype=float)
        self._check(f, self.size)
        return f @ self.analysis_matrix.T

    def synthesize(self, c):
        c = np.asarray(c, dtype=float)
        self._check(c, self.ncoef)
        return c @ self.Y.T

    def project(self, f):
        return self.synthesize(self.analyze(f))

    def integrate(self, f):
        return np.asarray(f) @ self.weights

    def mean_zero(self, f):
        return f - self.integrate(f)[..., None] / FOUR_PI

    def laplacian_coeffs(self, c):
        return -self.eig * np.asarray(c)

    def laplacian(self, f):
        return self.synthesize(self.laplacian_coeffs(self.analyze(f)))

    def inverse_laplacian_coeffs(self, c):
        """Mean-zero solution of Delta u = c; the n = 0 slot of c is ignored."""
        out = np.zeros_like(np.asarray(c, dtype=float))
        out[..., 1:] = -np.asarray(c)[..., 1:] / self.eig[1:]
        return out

    def grad_coeffs(self, c):
        """Cartesian surface gradient (..., Na, 3) of a coefficient vector."""
        return np.einsum("...k,akj->...aj", c, self.grad_basis)

    def grad(self, f):
        return self.grad_coeffs(self.analyze(f))

    def rotgrad_coeffs(self, c):
        return np.einsum("...k,akj->...aj", c, self.rotgrad_basis)

    def tangent_part(self, W):
        n = self.normal
        return W - np.sum(W * n, axis=-1)[..., None] * n

    def div_coeffs(self, W):
        """Coefficients of div_S W by projection against -grad Y."""
        return -np.einsum("...aj,akj,a->...k", W, self.grad_basis, self.weights)

    def curl_coeffs(self, W):
        """Coefficients of n . curl W (scalar vorticity of a tangent field)."""
        return -np.einsum("...aj,akj,a->...k", W, self.rotgrad_basis, self.weights)

    def div(self, W):
        return self.synthesize(self.div_coeffs(W))

    def curl(self, W):
        return self.synthesize(self.curl_coeffs(W))

    def hodge_potentials(self, W):
        """Mean-zero (grad potential, rot potential) of a tangent field."""
        return (self.inverse_laplacian_coeffs(self.div_coeffs(W)),
                self.inverse_laplacian_coeffs(self.curl_coeffs(W)))

    def from_potentials(self, a, b):
        return self.grad_coeffs(a) + self.rotgrad_coeffs(b)

    def evaluate(self, c, theta, phi):
        """Synthesize coefficients at arbitrary points."""
        return np.asarray(c) @ basis(self.L, theta, phi).T

    def evaluate_cartesian(self, c, X):
        theta, phi = to_angles(X)
        return self.evaluate(c, theta, phi)

    def rotate_longitudes(self, f, shift):
        """Values of f after a rotation by shift*2pi/nlon about the z axis."""
        g = np.asarray(f).reshape(f.shape[:-1] + (self.nlat, self.nlon))
        return np.roll(g, shift, axis=-1).reshape(f.shape)


class SolvabilityError(ValueError):
    pass


class TangentForm:
    """A 1-form on the unit sphere, held as its dual Cartesian tangent field."""

    def __init__(self, grid: SphereGrid, W):
        self.grid = grid
        self.W = np.asarray(W, dtype=float)

    @property
    def components(self):
        """Covariant (omega_theta, omega_phi) on the unit sphere."""
        g = self.grid
        wt = np.sum(self.W * g.e_theta, axis=-1)
        wp = np.sum(self.W * g.e_phi, axis=-1) * np.sin(g.theta)
        return wt, wp

    @classmethod
    def from_components(cls, grid, wt, wp):
        s = np.sin(grid.theta)
        W = wt[..., None] * grid.e_theta + (wp / s)[..., None] * grid.e_phi
        return cls(grid, W)

    def potentials(self):
        return self.grid.hodge_potentials(self.W)

    def d(self):
        """Scalar density of the 2-form d omega."""
        return self.grid.curl(self.W)

    def codifferential(self):
        """d* omega = -div omega."""
        return -self.grid.div(self.W)


def div_curl_solve(grid: SphereGrid, chi, psi, tol=1e-10):
    """The tangent 1-form omega with d omega = chi vol and d* omega = psi.

    Both data must have zero mean; the solution is the sum of the gradient of
    the potential solving -Delta a = psi and the rotated gradient of b with
    Delta b = chi.
    """
    chi = np.asarray(chi, dtype=float)
    psi = np.asarray(psi, dtype=float)
    scale = max(1.0, float(np.max(np.abs(chi))), float(np.max(np.abs(psi))))
    mc, mp = grid.integrate(chi), grid.integrate(psi)
    if abs(mc) > tol * scale or abs(mp) > tol * scale:
        raise SolvabilityError(
            f"solvability violated: integral of chi = {mc:.3e}, of psi = {mp:.3e}")
    a = grid.inverse_laplacian_coeffs(-grid.analyze(psi))
    b = grid.inverse_laplacian_coeffs(grid.analyze(chi))
    return TangentForm(grid, grid.from_potentials(a, b))


def form_vector_convert(form: TangentForm, scale=1.0):
    """Raise the index of a 1-form with the metric scale**2 * g.

    Returns contravariant (v^theta, v^phi).  scale is the embedding radius.
    """
    wt, wp = form.components
    s2 = np.sin(form.grid.theta) ** 2
    k = float(scale) ** 2
    return wt / k, wp / (k * s2)


def vector_form_convert(grid: SphereGrid, vt, vp, scale=1.0):
    """Lower the index of (v^theta, v^phi) with the metric scale**2 * g."""
    k = float(scale) ** 2
    s2 = np.sin(grid.theta) ** 2
    return TangentForm.from_components(grid, k * vt, k * s2 * vp)


def write_coeffs_csv(path, c, L):
    with open(path, "w") as fh:
        fh.write("n,m,value\n")
        for n in range(L + 1):
            for m in range(-n, n + 1):
                fh.write(f"{n},{m},{c[index(n, m)]:.17g}\n")


def read_coeffs_csv(path):
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    L = int(rows[:, 0].max())
    c = np.zeros((L + 1) ** 2)
    for n, m, v in rows:
        c[index(int(n), int(m))] = v
    return c, L
