"""Characteristics of the flow and transport equations D_u E + a E = f.

Along a streamline, parametrized by the radial grid coordinate y, the unit
direction X obeys dX/dy = rate(y, X) and a transported scalar obeys
dE/dy = (f - a E) / u_y.  Solutions are built level by level: from every grid
direction on level k+1 the streamline is traced back to level k with RK4 and
the value there is read off by spectral interpolation on the sphere.
"""

from dataclasses import dataclass

import numpy as np

from .gas_core import DomainError, ShellField, ShellGrid
from .sphere import SphereGrid, basis, to_angles


class StagnationError(DomainError):
    pass


class TransportVelocity:
    """Streamline data on a shell grid.

    u_y: rate of change of the grid radius along the flow, (Nr+1, Na).
    rate: dX/dy of the unit direction, Cartesian tangent vectors (Nr+1, Na, 3).
    """

    def __init__(self, grid: ShellGrid, u_y, rate, delta_rel=1e-6):
        self.grid = grid
        self.u_y = np.asarray(u_y, dtype=float)
        self.rate = np.asarray(rate, dtype=float)
        delta = delta_rel * np.abs(self.u_y).max()
        if not np.all(self.u_y >= delta) or delta <= 0:
            raise StagnationError(
                f"stagnation: radial velocity drops below {delta:.3e} "
                f"(min {self.u_y.min():.3e})")
        # one degree above the field truncation keeps Cartesian components of
        # degree-L tangent fields exact on the default quadrature
        s = grid.sphere
        self.interp_sphere = SphereGrid(s.L + 1, s.nlat, s.nlon)
        self._rate_c = self.interp_sphere.analyze(np.moveaxis(self.rate, -1, 1))
        self._inv_c = self.interp_sphere.analyze(1.0 / self.u_y)

    @classmethod
    def from_field(cls, field: ShellField, delta_rel=1e-6):
        """Physical flow, on a plain shell or on a front-mapped shell."""
        g = field.grid
        calc = field.calculus
        x = calc.x
        u0, V = field.u0, field.V
        if field.psi is None:
            u_y = u0
        else:
            rb, r1 = g.radial.a, g.radial.b
            psi = field.psi[None, :]
            gpsi = g.sphere.grad(field.psi)[None, :, :]
            vg = np.sum(V * gpsi, axis=-1)
            u_y = (u0 - (r1 - x) / (r1 - psi) * vg / x) * (r1 - rb) / (r1 - psi)
        with np.errstate(divide="ignore", invalid="ignore"):
            rate = V / (x * u_y)[..., None]
        if not np.all(np.isfinite(rate)):
            raise StagnationError("stagnation: zero radial velocity")
        return cls(g, u_y, rate, delta_rel)

    def _weights(self, s):
        return self.grid.radial.interp_matrix([s])[0]

    def eval(self, s, X, extra=()):
        """rate and 1/u_y at radius s and unit vectors X, plus extra coefficient fields."""
        w = self._weights(s)
        th, ph = to_angles(X)
        B = basis(self.interp_sphere.L, th, ph)
        rc = np.tensordot(w, self._rate_c, axes=(0, 0))  # (3, K)
        rate = B @ rc.T
        rate -= np.sum(rate * X, axis=-1, keepdims=True) * X
        inv = B @ (w @ self._inv_c)
        out = [B @ np.tensordot(w, c, axes=(0, 0)).T for c in extra]
        return rate, inv, out


def _rk4_path(vel: TransportVelocity, X, y_from, y_to, steps, alpha_c=None, phi_c=None):
    """Integrate streamlines from y_from to y_to (either direction).

    With coefficient fields alpha_c, phi_c (levels, K, nf) also integrates
    beta' = -alpha / u_y and Q' = -exp(-beta) phi / u_y from zero, so that a
    solution of dE/dy = (phi - alpha E)/u_y satisfies
        E(y_from) = exp(-beta) E(y_to) + Q.
    """
    h = (y_to - y_from) / steps
    X = X.copy()
    nf = 0 if alpha_c is None else alpha_c.shape[-1]
    beta = np.zeros(X.shape[:-1] + (nf,))
    Q = np.zeros_like(beta)
    extra = () if nf == 0 else (np.moveaxis(alpha_c, -1, 1), np.moveaxis(phi_c, -1, 1))

    def stage(s, Xs):
        rate, inv, ex = vel.eval(s, Xs, extra)
        if nf == 0:
            return rate, None, None
        # ex[k] has shape (Na, nf) after the basis product
        return rate, ex[0] * inv[:, None], ex[1] * inv[:, None]

    def unit(V):
        return V / np.linalg.norm(V, axis=-1, keepdims=True)

    s = y_from
    for _ in range(steps):
        k1, al1, ph1 = stage(s, X)
        k2, al2, ph2 = stage(s + 0.5 * h, unit(X + 0.5 * h * k1))
        k3, al3, ph3 = stage(s + 0.5 * h, unit(X + 0.5 * h * k2))
        k4, al4, ph4 = stage(s + h, unit(X + h * k3))
        if nf:
            b2 = beta - 0.5 * h * al1
            b3 = beta - 0.5 * h * al2
            b4 = beta - h * al3
            q = (np.exp(-beta) * ph1 + 2 * np.exp(-b2) * ph2 + 2 * np.exp(-b3) * ph3
                 + np.exp(-b4) * ph4)
            Q = Q - h / 6 * q
            beta = beta - h / 6 * (al1 + 2 * al2 + 2 * al3 + al4)
        X = unit(X + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4))
        s += h
    return X, beta, Q


def trace_points(vel: TransportVelocity, X, y_from, y_to, steps):
    """Streamline end points from unit vectors X at y_from to radius y_to."""
    return _rk4_path(vel, np.asarray(X, dtype=float), y_from, y_to, steps)[0]


def _substeps(vel, h, substeps):
    if substeps is not None:
        return int(substeps)
    rmax = np.abs(vel.rate).max()
    # keep the angular displacement per RK4 step small
    return max(1, int(np.ceil(abs(h) * rmax / 0.02)))


def solve_transport(vel: TransportVelocity, a, f, boundary_data, from_surface="inner",
                    substeps=None):
    """Solve D_u E + a E = f with E given on one bounding surface.

    a, f: arrays broadcastable to (Nr+1, Na, nf) giving the coefficients per
    unit time; boundary_data: (Na,) or (Na, nf).  Returns (Nr+1, Na) or
    (Nr+1, Na, nf).
    """
    g = vel.grid
    s = g.sphere
    Nr1, Na = g.shape
    data = np.asarray(boundary_data, dtype=float)
    squeeze = data.ndim == 1
    data = data.reshape(Na, -1)
    nf = data.shape[1]
    a = np.broadcast_to(np.asarray(a, dtype=float).reshape(np.shape(a) + (1,) * (3 - np.ndim(a)))
                        if np.ndim(a) < 3 else np.asarray(a, float), (Nr1, Na, nf))
    f = np.broadcast_to(np.asarray(f, dtype=float).reshape(np.shape(f) + (1,) * (3 - np.ndim(f)))
                        if np.ndim(f) < 3 else np.asarray(f, float), (Nr1, Na, nf))
    trivial_src = not np.any(a) and not np.any(f)
    isph = vel.interp_sphere
    alpha_c = phi_c = None
    if not trivial_src:
        alpha_c = isph.analyze(np.moveaxis(a, -1, 1)).transpose(0, 2, 1)  # (Nr1, K, nf)
        phi_c = isph.analyze(np.moveaxis(f, -1, 1)).transpose(0, 2, 1)
    y = g.r
    order = range(Nr1) if from_surface == "inner" else range(Nr1 - 1, -1, -1)
    order = list(order)
    if from_surface not in ("inner", "outer"):
        raise DomainError("from_surface must be 'inner' or 'outer'")
    out = np.empty((Nr1, Na, nf))
    out[order[0]] = data
    X0 = s.normal
    for prev, cur in zip(order[:-1], order[1:]):
        n_sub = _substeps(vel, y[cur] - y[prev], substeps)
        Xf, beta, Q = _rk4_path(vel, X0, y[cur], y[prev], n_sub, alpha_c, phi_c)
        th, ph = to_angles(Xf)
        B = basis(isph.L, th, ph)
        foot = B @ isph.analyze(out[prev].T).T
        if trivial_src:
            out[cur] = foot
        else:
            out[cur] = np.exp(-beta) * foot + Q
    return out[..., 0] if squeeze else out


@dataclass
class CharacteristicMap:
    """Foot points on the data surface for every grid node."""

    feet: np.ndarray  # (Nr+1, Na, 3)
    from_surface: str

    def displacement(self, grid: ShellGrid):
        return np.linalg.norm(self.feet - grid.sphere.normal[None], axis=-1)


def trace_characteristics(vel: TransportVelocity, from_surface="inner", substeps=None):
    X = vel.grid.sphere.normal
    comps = solve_transport(vel, 0.0, 0.0, X, from_surface, substeps)
    comps /= np.linalg.norm(comps, axis=-1, keepdims=True)
    return CharacteristicMap(comps, from_surface)


def pullback_initial(vel: TransportVelocity, surface_data, from_surface="inner", substeps=None):
    """surface_data composed with the inverse streamline map, on the whole shell."""
    return solve_transport(vel, 0.0, 0.0, surface_data, from_surface, substeps)
