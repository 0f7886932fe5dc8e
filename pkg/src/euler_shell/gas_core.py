"""Polytropic gas algebra, shell grids and the steady Euler residual."""

import json
from dataclasses import dataclass

import numpy as np

from .radial import ChebInterval
from .sphere import SphereGrid


class DomainError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GasConstants:
    gamma: float = 1.4
    c_v: float = 1.0
    k0: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1.0:
            raise DomainError(f"gamma must exceed 1, got {self.gamma}")
        if not (self.c_v > 0 and self.k0 > 0):
            raise DomainError("c_v and k0 must be positive")

    def entropy_from_A(self, A):
        return self.c_v * np.log(np.asarray(A) / self.k0)

    def A_from_entropy(self, s):
        return self.k0 * np.exp(np.asarray(s) / self.c_v)


@dataclass(frozen=True)
class FlowState:
    """Pointwise state: radial velocity u0, tangential velocity ut, p, rho."""

    u0: float
    ut: tuple = (0.0, 0.0)
    p: float = 1.0
    rho: float = 1.0

    def __post_init__(self):
        if not (self.p > 0 and self.rho > 0):
            raise DomainError(f"need p > 0 and rho > 0, got p={self.p}, rho={self.rho}")

    @property
    def speed2(self):
        return self.u0 ** 2 + float(np.dot(self.ut, self.ut))

    def mach(self, gas):
        return np.sqrt(self.speed2) / sound_speed(self, gas)


def _positive(p, rho):
    p, rho = np.asarray(p, dtype=float), np.asarray(rho, dtype=float)
    if np.any(p <= 0) or np.any(rho <= 0):
        raise DomainError("pressure and density must be positive")
    return p, rho


def sound_speed2(p, rho, gamma):
    p, rho = _positive(p, rho)
    return gamma * p / rho


def sound_speed(state: FlowState, gas: GasConstants):
    return float(np.sqrt(sound_speed2(state.p, state.rho, gas.gamma)))


def bernoulli(state: FlowState, gas: GasConstants):
    c2 = sound_speed2(state.p, state.rho, gas.gamma)
    return float(0.5 * state.speed2 + c2 / (gas.gamma - 1.0))


def entropy_function(state: FlowState, gas: GasConstants):
    return float(entropy_A(state.p, state.rho, gas.gamma))


def entropy_A(p, rho, gamma):
    p, rho = _positive(p, rho)
    return p * rho ** (-gamma)


def density_from_entropy(A, p, gamma):
    """Inverse of A = p rho^-gamma at fixed p."""
    A, p = _positive(A, p)
    return (p / A) ** (1.0 / gamma)


def sound_speed2_from_pA(p, A, gamma):
    return gamma * p ** ((gamma - 1.0) / gamma) * A ** (1.0 / gamma)


class ShellGrid:
    """Tensor grid: Lobatto radial nodes on [r_lo, r_hi] times a sphere grid."""

    def __init__(self, r_lo, r_hi, n_r, L_max, nlat=None, nlon=None):
        if n_r < 2:
            raise ConfigurationError("need at least 3 radial nodes")
        self.radial = ChebInterval(r_lo, r_hi, n_r)
        self.sphere = SphereGrid(L_max, nlat, nlon)

    @property
    def r(self):
        return self.radial.nodes

    @property
    def L(self):
        return self.sphere.L

    @property
    def shape(self):
        return (self.radial.size, self.sphere.size)

    def weights(self):
        return self.radial.weights[:, None] * self.sphere.weights[None, :]

    def meta(self):
        return {"r_lo": self.radial.a, "r_hi": self.radial.b, "n_r": self.radial.n,
                "L_max": self.L, "nlat": self.sphere.nlat, "nlon": self.sphere.nlon}


class ShellCalculus:
    """Physical derivatives of fields stored on a (possibly mapped) shell grid.

    Without a front the grid radius is the physical radius.  With a front psi
    on the sphere the grid coordinate y in [r_b, r1] maps to the physical radius
        x = (r1 - psi)/(r1 - r_b) * (y - r_b) + psi,
    so the inner grid surface is the front and the outer one stays at r1.
    """

    def __init__(self, grid: ShellGrid, psi=None):
        self.grid = grid
        y = grid.r[:, None]
        self.y = np.broadcast_to(y, grid.shape)
        ones = np.ones((1, grid.sphere.size))
        if psi is None:
            self.psi = None
            self.x = y * ones
            self.x_y = ones.repeat(grid.radial.size, 0)
            self.grad_x = np.zeros(grid.shape + (3,))
        else:
            psi = np.asarray(psi, dtype=float)
            rb, r1 = grid.radial.a, grid.radial.b
            self.psi = psi
            slope = (r1 - psi)[None, :] / (r1 - rb)
            self.x = slope * (y - rb) + psi[None, :]
            self.x_y = slope * ones.repeat(grid.radial.size, 0)
            gpsi = grid.sphere.grad(psi)
            self.grad_x = ((r1 - y) / (r1 - rb))[..., None] * gpsi[None, :, :]
        self.normal = grid.sphere.normal

    def dy(self, f):
        return self.grid.radial.derivative(f)

    def d_r(self, f):
        """Radial derivative at fixed direction."""
        f = np.asarray(f)
        xy = self.x_y if f.ndim == 2 else self.x_y[..., None]
        return self.dy(f) / xy

    def grad_S(self, f):
        """Unit-sphere surface gradient at fixed physical radius.

        Scalars (Nr, Na) give (Nr, Na, 3); vectors (Nr, Na, 3) give
        (Nr, Na, 3, 3) indexed [.., component, derivative direction].
        """
        sph = self.grid.sphere
        f = np.asarray(f, dtype=float)
        if f.ndim == 2:
            g = sph.grad(f)
            if self.psi is not None:
                g = g - (self.dy(f) / self.x_y)[..., None] * self.grad_x
            return g
        ft = np.moveaxis(f, -1, 1)
        g = np.moveaxis(sph.grad(ft), 1, 2)
        if self.psi is not None:
            df = self.dy(f) / self.x_y[..., None]
            g = g - df[..., :, None] * self.grad_x[..., None, :]
        return g

    def grad(self, f):
        """Cartesian gradient of a scalar, or Jacobian [.., i, j] = d_j f_i."""
        f = np.asarray(f, dtype=float)
        n = self.normal
        if f.ndim == 2:
            return self.d_r(f)[..., None] * n + self.grad_S(f) / self.x[..., None]
        return (self.d_r(f)[..., :, None] * n[None, :, None, :]
                + self.grad_S(f) / self.x[..., None, None])

    def div(self, F):
        J = self.grad(F)
        return np.trace(J, axis1=-2, axis2=-1)

    def curl(self, F):
        J = self.grad(F)
        return np.stack([J[..., 2, 1] - J[..., 1, 2],
                         J[..., 0, 2] - J[..., 2, 0],
                         J[..., 1, 0] - J[..., 0, 1]], axis=-1)

    def volume_weights(self):
        return self.grid.weights() * self.x ** 2 * self.x_y


@dataclass
class ShellField:
    """Flow on a shell grid: u0 (Nr, Na), tangential V (Nr, Na, 3), p, rho."""

    grid: ShellGrid
    u0: np.ndarray
    V: np.ndarray
    p: np.ndarray
    rho: np.ndarray
    gamma: float = 1.4
    psi: np.ndarray = None

    def __post_init__(self):
        shp = self.grid.shape
        for name in ("u0", "p", "rho"):
            a = np.asarray(getattr(self, name), dtype=float)
            if a.shape != shp:
                raise ConfigurationError(f"{name} has shape {a.shape}, grid is {shp}")
            if not np.all(np.isfinite(a)):
                raise ConfigurationError(f"{name} has non-finite entries")
            setattr(self, name, a)
        V = np.asarray(self.V, dtype=float)
        if V.shape != shp + (3,):
            raise ConfigurationError(f"V has shape {V.shape}, expected {shp + (3,)}")
        self.V = V

    @property
    def calculus(self):
        return ShellCalculus(self.grid, self.psi)

    @property
    def velocity(self):
        return self.u0[..., None] * self.grid.sphere.normal + self.V

    @property
    def c2(self):
        return sound_speed2(self.p, self.rho, self.gamma)

    @property
    def E(self):
        g = self.gamma
        return 0.5 * np.sum(self.velocity ** 2, axis=-1) + self.c2 / (g - 1.0)

    @property
    def A(self):
        return entropy_A(self.p, self.rho, self.gamma)

    @property
    def mach(self):
        return np.sqrt(np.sum(self.velocity ** 2, axis=-1) / self.c2)

    def tangential_components(self):
        s = self.grid.sphere
        return np.sum(self.V * s.e_theta, -1), np.sum(self.V * s.e_phi, -1)

    def to_csv(self, path):
        g = self.grid
        s = g.sphere
        ut, up = self.tangential_components()
        x = self.calculus.x
        with open(path, "w") as fh:
            fh.write("r,theta,phi,u0,u1,u2,p,rho\n")
            for i in range(g.radial.size):
                for a in range(s.size):
                    fh.write(",".join(f"{v:.17g}" for v in (
                        x[i, a], s.theta[a], s.phi[a], self.u0[i, a], ut[i, a],
                        up[i, a], self.p[i, a], self.rho[i, a])) + "\n")
        meta = {"gamma": self.gamma, **g.meta()}
        if self.psi is not None:
            meta["psi"] = [float(v) for v in self.psi]
        with open(str(path) + ".json", "w") as fh:
            json.dump(meta, fh, indent=1)

    @classmethod
    def from_csv(cls, path):
        with open(str(path) + ".json") as fh:
            meta = json.load(fh)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        grid = ShellGrid(meta["r_lo"], meta["r_hi"], meta["n_r"], meta["L_max"],
                         meta["nlat"], meta["nlon"])
        shp = grid.shape
        if data.shape != (shp[0] * shp[1], 8):
            raise ConfigurationError(
                f"field file has {data.shape[0]} rows of {data.shape[1]} columns; "
                f"grid needs {shp[0] * shp[1]} rows of 8")
        s = grid.sphere
        cols = [data[:, k].reshape(shp) for k in range(8)]
        V = cols[4][..., None] * s.e_theta + cols[5][..., None] * s.e_phi
        psi = np.asarray(meta["psi"]) if "psi" in meta else None
        return cls(grid, cols[3], V, cols[6], cols[7], meta["gamma"], psi)


def _norms(res, w):
    r2 = res ** 2 if res.ndim == w.ndim else np.sum(res ** 2, axis=-1)
    return {"linf": float(np.sqrt(r2.max())), "l2": float(np.sqrt(np.sum(w * r2)))}


def euler_residual(field: ShellField, calc: ShellCalculus = None):
    """Steady conservation-form residuals of mass, momentum and energy.

    div(rho u), div(rho u (x) u) + grad p, div(rho u E) on the grid, with norms.
    """
    g = field.grid
    if g.radial.n < 2 or g.L < 1:
        raise ConfigurationError("grid too coarse to differentiate")
    calc = calc or field.calculus
    u = field.velocity
    m = field.rho[..., None] * u
    mass = calc.div(m)
    flux = m[..., :, None] * u[..., None, :]
    mom = np.stack([calc.div(flux[..., i, :]) for i in range(3)], axis=-1)
    mom = mom + calc.grad(field.p)
    energy = calc.div(m * field.E[..., None])
    w = calc.volume_weights()
    return {"mass": mass, "momentum": mom, "energy": energy,
            "norms": {"mass": _norms(mass, w), "momentum": _norms(mom, w),
                      "energy": _norms(energy, w)}}


def residual_summary(res):
    n = res["norms"]
    return {"linf": max(v["linf"] for v in n.values()),
            "l2": float(np.sqrt(sum(v["l2"] ** 2 for v in n.values())))}


class PreconditionReport(Exception):
    pass


def vorticity_identity_check(field: ShellField, tol=1e-8, calc=None):
    """max |u^m omega_km| over the grid, the Lamb vector of the flow.

    With constant Bernoulli constant and entropy this vanishes for steady
    solutions; otherwise a PreconditionReport carries the measured spreads.
    """
    E, A = field.E, field.A
    dE = float(np.ptp(E) / max(abs(E).max(), 1e-300))
    dA = float(np.ptp(A) / max(abs(A).max(), 1e-300))
    if dE > tol or dA > tol:
        raise PreconditionReport(
            f"E spread {dE:.3e}, A spread {dA:.3e} exceed {tol:.1e}; identity not asserted")
    calc = calc or field.calculus
    u = field.velocity
    w = calc.curl(u)
    return float(np.abs(np.cross(u, w)).max())
