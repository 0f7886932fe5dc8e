"""Pointwise derivative data of a flow and the pressure-equation algebra built on it.

A FlowJet holds, at every grid node, the primitive fields and their Cartesian
first derivatives (plus the pressure Hessian).  The pressure is split as
p = p_b(x) + p_hat with the background part differentiated exactly, so that
every expression below is plain algebra on the same derivative data.
"""

from dataclasses import dataclass

import numpy as np

from .background import RadialProfile
from .coeffs import linearization_coeffs
from .gas_core import DomainError, ShellCalculus


class TrustRegionExceeded(DomainError):
    pass


def _sym(H):
    return 0.5 * (H + np.swapaxes(H, -1, -2))


def _dot(a, b):
    return np.sum(a * b, axis=-1)


@dataclass
class FlowJet:
    gamma: float
    x: np.ndarray
    n: np.ndarray
    # background pressure and exact radial derivatives at x
    pb: np.ndarray
    dpb: np.ndarray
    d2pb: np.ndarray
    # perturbation pressure with Cartesian gradient and Hessian
    ph: np.ndarray
    gph: np.ndarray
    Hph: np.ndarray
    E: np.ndarray
    gE: np.ndarray
    A: np.ndarray
    gA: np.ndarray
    V: np.ndarray
    JV: np.ndarray  # [.., i, j] = d_j V_i

    # --- pressure
    @property
    def p(self):
        return self.pb + self.ph

    @property
    def gp(self):
        return self.dpb[..., None] * self.n + self.gph

    @property
    def Hp(self):
        n = self.n
        nn = n[..., :, None] * n[..., None, :]
        P = np.eye(3) - nn
        Hb = self.d2pb[..., None, None] * nn + (self.dpb / self.x)[..., None, None] * P
        return Hb + self.Hph

    @property
    def p_r(self):
        return _dot(self.gp, self.n)

    @property
    def p_rr(self):
        H = self.Hp
        return np.einsum("...i,...ij,...j->...", self.n, H, self.n)

    @property
    def lap_S_p(self):
        """Unit-sphere Laplacian of p at fixed radius."""
        H = self.Hp
        return self.x ** 2 * (np.trace(H, axis1=-2, axis2=-1) - self.p_rr - 2 * self.p_r / self.x)

    # --- thermodynamics
    @property
    def rho(self):
        return (self.p / self.A) ** (1.0 / self.gamma)

    @property
    def c2(self):
        return self.gamma * self.p / self.rho

    @property
    def grho(self):
        g = self.gamma
        return (self.rho / g)[..., None] * (self.gp / self.p[..., None] - self.gA / self.A[..., None])

    @property
    def gc2(self):
        g = self.gamma
        return self.c2[..., None] * ((g - 1) / g * self.gp / self.p[..., None]
                                     + self.gA / (g * self.A[..., None]))

    # --- velocity
    @property
    def V2(self):
        return _dot(self.V, self.V)

    @property
    def u0(self):
        q = 2 * self.E - 2 * self.c2 / (self.gamma - 1) - self.V2
        if np.any(q <= 0):
            raise TrustRegionExceeded("state has no positive radial velocity")
        return np.sqrt(q)

    @property
    def gu0(self):
        JVtV = np.einsum("...ij,...i->...j", self.JV, self.V)
        return (self.gE - self.gc2 / (self.gamma - 1) - JVtV) / self.u0[..., None]

    @property
    def u(self):
        return self.u0[..., None] * self.n + self.V

    @property
    def Ju(self):
        n = self.n
        P = np.eye(3) - n[..., :, None] * n[..., None, :]
        return (n[..., :, None] * self.gu0[..., None, :]
                + (self.u0 / self.x)[..., None, None] * P + self.JV)


def build_jet(calc: ShellCalculus, branch: RadialProfile, ph, E, A, V):
    """Jet of the state (p_b + ph, E, A, V) on a (possibly mapped) shell."""
    x = calc.x
    gph = calc.grad(ph)
    Hph = _sym(calc.grad(gph))
    n = np.broadcast_to(calc.normal, x.shape + (3,))
    return FlowJet(branch.gamma, x, n, branch.p(x), branch.dp(x), branch.d2p(x),
                   np.asarray(ph, float), gph, Hph, np.asarray(E, float), calc.grad(E),
                   np.asarray(A, float), calc.grad(A), np.asarray(V, float), calc.grad(V))


def background_jet(calc: ShellCalculus, branch: RadialProfile):
    x = calc.x
    z = np.zeros(x.shape)
    return FlowJet(branch.gamma, x, np.broadcast_to(calc.normal, x.shape + (3,)),
                   branch.p(x), branch.dp(x), branch.d2p(x), z, np.zeros(x.shape + (3,)),
                   np.zeros(x.shape + (3, 3)), np.full(x.shape, branch.E),
                   np.zeros(x.shape + (3,)), np.full(x.shape, branch.A),
                   np.zeros(x.shape + (3,)), np.zeros(x.shape + (3,)),
                   np.zeros(x.shape + (3, 3)))


def slice_jet(j: FlowJet, idx):
    """Restriction of every array to grid level idx (or any leading index)."""
    kw = {k: (getattr(j, k)[idx] if isinstance(getattr(j, k), np.ndarray) else getattr(j, k))
          for k in j.__dataclass_fields__}
    return FlowJet(**kw)


# ---------------------------------------------------------------------------
# Pressure equation


def pressure_residual(j: FlowJet):
    """Second-order pressure equation of the steady Euler system.

    u.grad(D_u p/(gamma p)) - div(grad p/rho) - tr(Du Du) plus the lower-order
    multiples of the continuity, entropy and radial momentum equations.  Zero on
    smooth steady solutions.
    """
    g = j.gamma
    p, gp, H = j.p, j.gp, j.Hp
    u, J = j.u, j.Ju
    rho, grho = j.rho, j.grho
    u0, x = j.u0, j.x
    Dp = _dot(u, gp)
    gDp = np.einsum("...ij,...i->...j", J, gp) + np.einsum("...ij,...j->...i", H, u)
    term1 = _dot(u, gDp) / (g * p) - Dp * Dp / (g * p * p)
    divgp = np.trace(H, axis1=-2, axis2=-1) / rho - _dot(gp, grho) / rho ** 2
    trJJ = np.einsum("...ij,...ji->...", J, J)
    divu = np.trace(J, axis1=-2, axis2=-1)
    phibar1 = divu + Dp / (g * p)
    p_r = _dot(gp, j.n)
    DA = _dot(u, j.gA)
    phi0 = np.einsum("...ij,...j->...i", J, u) + gp / rho[..., None]
    phi0r = _dot(phi0, j.n)
    K = _dot(j.V, j.gu0) - j.V2 / x
    L3 = -(p_r / (g * p) + 2 * p_r / (rho * u0 ** 2) + 2 * K / u0 ** 2 + 2 / x) * phi0r \
        + phi0r ** 2 / u0 ** 2
    L2 = rho ** (g - 1) * p_r / (g * p * u0) * DA
    return term1 - divgp - trJJ + 2 * u0 / x * phibar1 + L2 + L3


def pressure_main(j: FlowJet):
    """Principal nonlinear pressure operator N in radial/spherical form."""
    g = j.gamma
    E, c2, p, x = j.E, j.c2, j.p, j.x
    p_r, p_rr, lap = j.p_r, j.p_rr, j.lap_S_p
    h = E - c2 / (g - 1)
    return ((2 * E - (g + 1) / (g - 1) * c2) * p_rr - c2 / x ** 2 * lap
            + 4 / x * (E - g * c2 / (g - 1)) * p_r
            - 2 / p * (h + c2 * c2 / (4 * g * h)) * p_r ** 2
            + 4 * g * p / x ** 2 * h)


def linear_operator(j: FlowJet, branch: RadialProfile):
    """Linearized pressure operator applied to (p_hat, E_hat, A_hat)."""
    g = j.gamma
    x = j.x
    t = branch.t(x)
    rho_b = branch.rho(x)
    b, e, d1, d2 = linearization_coeffs(g, t)
    n = j.n
    ph_r = _dot(j.gph, n)
    ph_rr = np.einsum("...i,...ij,...j->...", n, j.Hph, n)
    lap = x ** 2 * (np.trace(j.Hph, axis1=-2, axis2=-1) - ph_rr - 2 * ph_r / x)
    Eh = j.E - branch.E
    Ah = j.A - branch.A
    return (-lap / x ** 2 + (t - 1) * ph_rr + 4 / x * b * ph_r + e / x ** 2 * j.ph
            + rho_b / x ** 2 * d1 * Eh + rho_b ** g / x ** 2 * d2 * Ah)


# ---------------------------------------------------------------------------
# Coordinate (r, theta, phi) view used by the term-by-term transcriptions


class Chart:
    """Coordinate frame t_k = d/dx^k, its dual, and Christoffel symbols."""

    def __init__(self, j: FlowJet, theta):
        x = j.x
        shp = x.shape
        th = np.broadcast_to(theta, shp)
        st, ct = np.sin(th), np.cos(th)
        n = j.n
        ph_ = np.arctan2(n[..., 1], n[..., 0])
        et = np.stack([ct * np.cos(ph_), ct * np.sin(ph_), -st], -1)
        ep = np.stack([-np.sin(ph_), np.cos(ph_), np.zeros(shp)], -1)
        self.t = np.stack([n, x[..., None] * et, (x * st)[..., None] * ep], -2)  # [.., k, 3]
        self.tdual = np.stack([n, et / x[..., None], ep / (x * st)[..., None]], -2)
        G = np.zeros(shp + (3, 3, 3))  # [.., m, j, k] = Gamma^m_{jk}
        G[..., 0, 1, 1] = -x
        G[..., 0, 2, 2] = -x * st * st
        G[..., 1, 0, 1] = G[..., 1, 1, 0] = 1 / x
        G[..., 1, 2, 2] = -st * ct
        G[..., 2, 0, 2] = G[..., 2, 2, 0] = 1 / x
        G[..., 2, 1, 2] = G[..., 2, 2, 1] = ct / st
        self.Gamma = G
        self.x, self.st = x, st

    def d(self, grad):
        """Coordinate partials of a scalar from its Cartesian gradient."""
        return np.einsum("...kc,...c->...k", self.t, grad)

    def dd(self, grad, H):
        """Coordinate second partials d_j d_k f."""
        return (np.einsum("...jc,...cd,...kd->...jk", self.t, H, self.t)
                + np.einsum("...mjk,...m->...jk", self.Gamma, self.d(grad)))

    def components(self, u):
        return np.einsum("...kc,...c->...k", self.tdual, u)

    def d_components(self, u, J):
        """[.., l, j] = d_j u^l."""
        Jt = np.einsum("...cd,...jd->...cj", J, self.t)
        first = np.einsum("...lc,...cj->...lj", self.tdual, Jt)
        return first - np.einsum("...ljm,...m->...lj", self.Gamma, self.components(u))


def F1_transcribed(j: FlowJet, theta):
    """Term-by-term coordinate form of the remainder F1 = N - gamma p Phi."""
    g = j.gamma
    ch = Chart(j, theta)
    p, rho, c2, E, x, u0 = j.p, j.rho, j.c2, j.E, j.x, j.u0
    dp = ch.d(j.gp)
    ddp = ch.dd(j.gp, j.Hp)
    drho = ch.d(j.grho)
    dA = ch.d(j.gA)
    u = j.u
    uc = ch.components(u)
    du = ch.d_components(u, j.Ju)
    Gam = ch.Gamma
    V2 = j.V2
    p0 = dp[..., 0]
    p00 = ddp[..., 0, 0]
    # u^a d_a u^0 + u^a u^b Gamma^0_ab
    K = sum(uc[..., a] * du[..., 0, a] for a in (1, 2)) + sum(
        uc[..., a] * uc[..., b] * Gam[..., 0, a, b] for a in (1, 2) for b in (1, 2))
    denom1 = 2 * E - 2 * c2 / (g - 1)
    denom2 = 2 * E - V2 - 2 * c2 / (g - 1)
    H3 = -V2 * (p00 / (g * p) + 2 * p0 / (g * p * x) + 2 / x ** 2
                + p0 ** 2 / (g * p * p) * (-1 + c2 * c2 / g / denom1 / denom2))
    Ginv = [None, 1 / x ** 2, 1 / (x * ch.st) ** 2]
    out = g * p * H3
    out = out + (-p0 * K + rho ** (g - 1) * p0 * sum(uc[..., a] / u0 * dA[..., a] for a in (1, 2)))
    out = out - g * p * (K / u0 ** 2 + 2 * p0 / (rho * u0 ** 2) + 2 / x) * K
    out = out + sum(uc[..., a] * dp[..., a] for a in (1, 2)) * 2 * u0 / x
    out = out + g * p / rho ** 2 * sum(Ginv[a] * dp[..., a] * drho[..., a] for a in (1, 2))
    s1 = 0
    s2 = 0
    for k in range(3):
        for jj in range(3):
            if (k, jj) == (0, 0):
                continue
            s1 = s1 + (uc[..., k] * uc[..., jj] * ddp[..., jj, k]
                       + uc[..., k] * du[..., jj, k] * dp[..., jj]
                       - uc[..., k] * uc[..., jj] * dp[..., k] * dp[..., jj] / p)
    for l in range(3):
        for jj in range(3):
            if (l, jj) == (0, 0):
                continue
            t_ = du[..., l, jj] * du[..., jj, l]
            for b in (1, 2):
                t_ = t_ + 2 * Gam[..., l, jj, b] * uc[..., b] * du[..., jj, l]
                for a in (1, 2):
                    t_ = t_ + Gam[..., l, jj, a] * uc[..., a] * Gam[..., jj, l, b] * uc[..., b]
            s2 = s2 + t_
    out = out + s1 - g * p * s2
    return -out


def F1_identity(j: FlowJet, jb: FlowJet):
    return (pressure_main(j) - j.gamma * j.p * pressure_residual(j)
            - (pressure_main(jb) - jb.gamma * jb.p * pressure_residual(jb)))


def F2_identity(j: FlowJet, jb: FlowJet, branch: RadialProfile):
    cb2 = branch.gamma * jb.p / jb.rho
    return cb2 * linear_operator(j, branch) - (pressure_main(j) - pressure_main(jb))


def F2_transcribed(j: FlowJet, branch: RadialProfile):
    """Term-by-term form of F2; the O(1) remainder is the exact second-order
    part of the sound-speed expansion."""
    g = j.gamma
    x = j.x
    pb, dpb, d2pb = j.pb, j.dpb, j.d2pb
    rhob = branch.rho(x)
    cb2 = g * pb / rhob
    ub2 = branch.u(x) ** 2
    n = j.n
    ph = j.ph
    ph1 = _dot(j.gph, n)
    ph2 = np.einsum("...i,...ij,...j->...", n, j.Hph, n)
    lap = x ** 2 * (np.trace(j.Hph, axis1=-2, axis2=-1) - ph2 - 2 * ph1 / x)
    Eh = j.E - branch.E
    Ah = j.A - branch.A
    p = pb + ph
    c2 = j.c2
    u2 = 2 * (j.E - c2 / (g - 1))
    dc = c2 - cb2
    Rc = dc - (g - 1) / rhob * ph - rhob ** (g - 1) * Ah
    minus = (4 * g * ph / x ** 2 * (Eh - dc / (g - 1)) + 4 / x * ph1 * (Eh - g / (g - 1) * dc)
             - dc / x ** 2 * lap + (2 * Eh - (g + 1) / (g - 1) * dc) * ph2
             - ub2 / pb * ph1 ** 2 + (2 * dpb + ph1) * ph1 * (ub2 / pb - u2 / p)
             + dpb ** 2 * ph / pb * (u2 / p - ub2 / pb)
             - dpb ** 2 / (g * ub2) * (((c2 + cb2) / p - 2 * cb2 / pb) * dc
                                      - cb2 ** 2 / pb * ph * (1 / p - 1 / pb))
             - cb2 ** 2 / (g * pb * ub2) * ph1 ** 2
             - dpb ** 2 / g * (1 / u2 - 1 / ub2) * ((c2 ** 2 / p - cb2 ** 2 / pb)
                                                    + 2 * cb2 ** 2 / (pb * ub2) * (dc / (g - 1) - Eh))
             - (2 * dpb + ph1) * ph1 / g * (c2 ** 2 / (p * u2) - cb2 ** 2 / (pb * ub2)))
    bracket = (-4 * g / (g - 1) * pb / x ** 2 - 4 * g / (g - 1) * dpb / x
               - (g + 1) / (g - 1) * d2pb + 2 / (g - 1) * dpb ** 2 / pb
               - 2 * cb2 / (g * pb * ub2) * dpb ** 2 * (1 + cb2 / ((g - 1) * ub2)))
    return -minus - bracket * Rc


# ---------------------------------------------------------------------------
# Boundary functional: radial momentum combined with continuity


def exit_functional(j: FlowJet, with_radial=True):
    """rho u0/(M0^2-1) * (continuity + D_u p/(gamma p) - radial momentum/u0).

    Contains the radial derivative only through p_r, with unit coefficient.
    Zero on steady solutions.  with_radial=False drops the p_r part.
    """
    g = j.gamma
    p, rho, c2, x = j.p, j.rho, j.c2, j.x
    u0 = j.u0
    V = j.V
    M2 = u0 * u0 / c2
    p_r = _dot(j.gp, j.n) if with_radial else 0.0
    Vgp = _dot(V, j.gp)
    divV = np.trace(j.JV, axis1=-2, axis2=-1)
    bal = (2 * u0 / x + divV + (u0 * p_r + Vgp) / (g * p)
           - (_dot(V, j.gu0) - j.V2 / x + p_r / rho) / u0)
    return rho * u0 / (M2 - 1) * bal


def exit_terms_transcribed(j: FlowJet, branch: RadialProfile, theta):
    """G1, G2, G3 of the Robin condition in coordinate form.

    The Robin constant times p_hat is already folded into the G3 expression.
    """
    g = j.gamma
    ch = Chart(j, theta)
    rho, c2, x, u0, E = j.rho, j.c2, j.x, j.u0, j.E
    u = j.u
    uc = ch.components(u)
    dp = ch.d(j.gp)
    dA = ch.d(j.gA)
    dE = ch.d(j.gE)
    # d_delta |V|^2 from the Jacobian of V
    gV2 = 2 * np.einsum("...ij,...i->...j", j.JV, j.V)
    dV2 = ch.d(gV2)
    M2 = u0 * u0 / c2
    divV = np.trace(j.JV, axis1=-2, axis2=-1)
    G1 = -rho * u0 * divV / (M2 - 1)
    ua = [uc[..., 1], uc[..., 2]]
    G2 = (-(1 / (g - 1)) * sum(ua[a - 1] / u0 * dA[..., a] for a in (1, 2)) * rho ** g
          - rho / (2 * u0) * sum(ua[a - 1] * dV2[..., a] for a in (1, 2))
          + rho / u0 * sum(ua[a - 1] * dE[..., a] for a in (1, 2))
          - rho * j.V2 / x
          - u0 * (1 / c2 + 1 / u0 ** 2) * sum(ua[a - 1] * dp[..., a] for a in (1, 2))) / (M2 - 1)
    pb = j.pb
    rhob = branch.rho(x)
    cb2 = g * pb / rhob
    ub2 = branch.u(x) ** 2
    Eb = branch.E
    ph = j.ph
    Ah = j.A - branch.A
    dc = c2 - cb2
    Rc = dc - (g - 1) / rhob * ph - rhob ** (g - 1) * Ah
    u02 = u0 * u0
    G3 = -2 * g / x * ((u02 / (u02 - c2) - ub2 / (ub2 - cb2)) * ph
                       + pb * (ub2 * dc - cb2 * (u02 - ub2)) / (ub2 - cb2)
                       * (1 / (u02 - c2) - 1 / (ub2 - cb2))
                       - pb * cb2 / (ub2 - cb2) ** 2 * (2 * (E - Eb) - j.V2)
                       + 2 * pb * Eb / (ub2 - cb2) ** 2 * (Rc + rhob ** (g - 1) * Ah))
    return G1, G2, G3


def exit_data_identity(j: FlowJet, jb: FlowJet, gamma1_value):
    """gamma1 p_hat minus the non-radial part of the exit functional, relative to the background."""
    return (gamma1_value * j.ph - exit_functional(j, with_radial=False)
            + exit_functional(jb, with_radial=False))
