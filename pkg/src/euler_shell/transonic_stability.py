"""Free-boundary fixed-point solver for a transonic shock in the shell.

The downstream flow lives on the normalized shell [r_b, r1] in the radial
coordinate y, related to the physical radius by
    x = (r1 - psi)/(r1 - r_b) (y - r_b) + psi,
so the shock front x = psi maps to y = r_b.  Unknowns are the front psi and
the deviations (p_hat, E_hat, A_hat, V) from the background evaluated at the
physical radius.  One sweep of the mapping updates, in order: Bernoulli,
pressure (nonlocal elliptic problem with a Venttsel row), the front, entropy,
the tangential velocity on the front (div-curl system) and the tangential
velocity inside (transport).
"""

import json
import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from . import jet as J
from .background import (TransonicBackground, solve_transonic_background,
                         transonic_from_upstream)
from .coeffs import mu_constants
from .gas_core import (ConfigurationError, DomainError, ShellCalculus, ShellField, ShellGrid,
                       euler_residual, residual_summary)
from .jet import TrustRegionExceeded
from .radial import ChebInterval
from .spectral_elliptic import (SConditionViolated, VenttselSetup, check_s_condition)
from .sphere import FOUR_PI, SphereGrid, div_curl_solve
from .subsonic_stability import _seminorm, contraction
from .transport import TransportVelocity, solve_transport


class SupersonicityLost(DomainError):
    pass


class NoAdmissibleShock(DomainError):
    pass


# ---------------------------------------------------------------------------
# Supersonic inflow


@dataclass
class SupersonicInflow:
    """Upstream flow (p, E, A, V) on Chebyshev radii over [r0, r1]."""

    gamma: float
    radial: ChebInterval
    sphere: SphereGrid
    p: np.ndarray
    E: np.ndarray
    A: np.ndarray
    V: np.ndarray

    @property
    def rho(self):
        return (self.p / self.A) ** (1.0 / self.gamma)

    @property
    def c2(self):
        return self.gamma * self.p / self.rho

    @property
    def u0(self):
        return np.sqrt(2 * self.E - 2 * self.c2 / (self.gamma - 1) - np.sum(self.V ** 2, -1))

    def at(self, radii):
        """States at one radius per sphere node: dict of (Na,) arrays."""
        M = self.radial.interp_matrix(radii)
        out = {k: np.einsum("an,na->a", M, getattr(self, k)) for k in ("p", "E", "A")}
        out["V"] = np.einsum("an,nac->ac", M, self.V)
        g = self.gamma
        out["rho"] = (out["p"] / out["A"]) ** (1.0 / g)
        c2 = g * out["p"] / out["rho"]
        out["u0"] = np.sqrt(2 * out["E"] - 2 * c2 / (g - 1) - np.sum(out["V"] ** 2, -1))
        return out


def _march_rhs(r, Y, s: SphereGrid, gamma):
    Na = s.size
    p, E, A = Y[:Na], Y[Na:2 * Na], Y[2 * Na:3 * Na]
    V = Y[3 * Na:].reshape(Na, 3)
    g = gamma
    rho = (p / A) ** (1 / g)
    c2 = g * p / rho
    q = 2 * E - 2 * c2 / (g - 1) - np.sum(V * V, -1)
    if np.any(q <= 0):
        raise SupersonicityLost("radial velocity vanished while marching")
    u0 = np.sqrt(q)
    if np.any(u0 * u0 <= c2):
        raise SupersonicityLost("loss of supersonicity while marching the inflow")
    gp, gE, gA = s.grad(p) / r, s.grad(E) / r, s.grad(A) / r
    JV = np.moveaxis(s.grad(V.T), 0, 1) / r  # [a, i, j] = d_j V_i
    n = s.normal
    V2 = np.sum(V * V, -1)
    JVV = np.einsum("aij,aj->ai", JV, V)
    gc2 = c2[:, None] * ((g - 1) / g * gp / p[:, None] + gA / (g * A[:, None]))
    gu0 = (gE - gc2 / (g - 1) - np.einsum("aij,ai->aj", JV, V)) / u0[:, None]
    divV = s.div(V) / r
    M2 = u0 * u0 / c2
    R = rho * u0 / (M2 - 1) * (2 * u0 / r + divV + np.sum(V * gp, -1) / (g * p)
                               - (np.sum(V * gu0, -1) - V2 / r) / u0)
    dp = -R
    dE = -np.sum(V * gE, -1) / u0
    dA = -np.sum(V * gA, -1) / u0
    dV = (-JVV - (u0 / r)[:, None] * V - gp / rho[:, None] - (V2 / r)[:, None] * n) / u0[:, None]
    dV -= np.sum(dV * n, -1)[:, None] * n
    return np.concatenate([dp, dE, dA, dV.ravel()])


def solve_supersonic(tb: TransonicBackground, L_max=8, N_r=64, perturb=None, rtol=1e-13):
    """March the steady Euler system outward from r0.

    perturb: {field: [(n, m, amplitude)]} with field in p, rho, u0 (relative)
    or V (gradient potential, relative to the sound speed) applied at r0.
    """
    g = tb.gamma
    s = SphereGrid(L_max)
    radial = ChebInterval(tb.r0, tb.r1, N_r)
    u, p, rho = tb.supersonic.state(tb.r0)
    Na = s.size
    shapes = {}
    for key, items in (perturb or {}).items():
        coef = np.zeros(s.ncoef)
        for n_, m_, amp in items:
            n_, m_ = int(n_), int(m_)
            if not (0 <= n_ <= s.L and -n_ <= m_ <= n_):
                raise ConfigurationError(f"inflow perturbation ({n_},{m_}) outside degree {s.L}")
            coef[n_ * n_ + n_ + m_] += np.sqrt(4 * np.pi) * float(amp)
        shapes[key] = s.synthesize(coef)
    unknown = set(shapes) - {"p", "rho", "u0", "V"}
    if unknown:
        raise ConfigurationError(f"unknown inflow fields {sorted(unknown)}")
    p0 = p * (1 + shapes.get("p", 0.0)) * np.ones(Na)
    rho0 = rho * (1 + shapes.get("rho", 0.0)) * np.ones(Na)
    u00 = u * (1 + shapes.get("u0", 0.0)) * np.ones(Na)
    c0 = np.sqrt(g * p / rho)
    V0 = c0 * s.grad(shapes["V"]) if "V" in shapes else np.zeros((Na, 3))
    if np.any(u00 ** 2 <= g * p0 / rho0):
        raise SupersonicityLost("inflow data is not supersonic")
    E0 = 0.5 * (u00 ** 2 + np.sum(V0 ** 2, -1)) + g * p0 / ((g - 1) * rho0)
    A0 = p0 * rho0 ** (-g)
    Y0 = np.concatenate([p0, E0, A0, V0.ravel()])
    nodes = np.clip(radial.nodes, tb.r0, tb.r1)
    atol = np.concatenate([1e-15 * np.abs(Y0[:3 * Na]), np.full(3 * Na, 1e-15 * c0)])
    sol = solve_ivp(_march_rhs, (tb.r0, tb.r1), Y0, method="DOP853", rtol=rtol, atol=atol,
                    t_eval=nodes, args=(s, g))
    if sol.status != 0:
        raise SupersonicityLost(f"inflow marching failed: {sol.message}")
    Y = sol.y.T
    return SupersonicInflow(g, radial, s, Y[:, :Na], Y[:, Na:2 * Na], Y[:, 2 * Na:3 * Na],
                            Y[:, 3 * Na:].reshape(-1, Na, 3))


# ---------------------------------------------------------------------------
# Jump relations across an oblique front


def _front_normal(psi, grad_psi, n):
    """Unit normal of x = psi pointing downstream, and the unnormalized covector."""
    N = n - grad_psi / psi[:, None]
    return N / np.linalg.norm(N, axis=-1, keepdims=True), N


def exact_rh_solve(gamma, up, psi, grad_psi, n):
    """Downstream state of the oblique shock x = psi for the upstream states `up`.

    up: dict with u0, V, p, rho (arrays over front points).  Returns a dict
    with u0, V, p, rho, A, E, the mass flux m and the tangential 1-form omega
    (as a tangent field on the unit sphere).
    """
    g = gamma
    Nh, N = _front_normal(psi, grad_psi, n)
    u = up["u0"][:, None] * n + up["V"]
    w1 = np.sum(u * Nh, -1)
    ut = u - w1[:, None] * Nh
    p1, r1 = up["p"], up["rho"]
    c2 = g * p1 / r1
    if np.any(w1 * w1 <= c2):
        raise NoAdmissibleShock("normal upstream velocity is not supersonic")
    Mn2 = w1 * w1 / c2
    rho2 = r1 * (g + 1) * Mn2 / ((g - 1) * Mn2 + 2)
    p2 = p1 * (1 + 2 * g / (g + 1) * (Mn2 - 1))
    w2 = w1 * r1 / rho2
    if not np.all((p2 > p1) & (w2 * w2 < g * p2 / rho2)):
        raise NoAdmissibleShock("no admissible compressive root")
    u2 = ut + w2[:, None] * Nh
    u0 = np.sum(u2 * n, -1)
    V = u2 - u0[:, None] * n
    m = r1 * np.sum(u * N, -1)  # rho (u0 - V.grad psi / psi)
    omega = m[:, None] * psi[:, None] * (V - up["V"]) / (p2 - p1)[:, None]
    E = 0.5 * np.sum(u2 * u2, -1) + g * p2 / ((g - 1) * rho2)
    return {"u0": u0, "V": V, "p": p2, "rho": rho2, "A": p2 * rho2 ** (-g), "E": E,
            "m": m, "omega": omega, "normal": Nh}


def rh_bracket_oracle(gamma, u0, p, rho, tol=1e-14):
    """Downstream normal velocity from bracketing the scalar jump equation.

    Momentum and energy with fixed mass flux m give, for the downstream normal
    velocity w, the equation h(w) = E(w) - E_up = 0 with p(w) = p + m (u0 - w).
    The compressive root lies strictly between the sonic value and zero.
    """
    g = gamma
    m = rho * u0
    E_up = 0.5 * u0 * u0 + g * p / ((g - 1) * rho)

    def h(w):
        p2 = p + m * (u0 - w)
        return 0.5 * w * w + g * p2 * w / ((g - 1) * m) - E_up

    # the smaller root of the quadratic h lies below the critical speed
    w_star = g * (p / m + u0) / (g + 1)
    w = brentq(h, 1e-12 * u0, w_star, xtol=tol * u0, rtol=4 * np.finfo(float).eps)
    p2 = p + m * (u0 - w)
    return w, p2, m / w


def jump_residuals(gamma, up, down, psi, grad_psi, n):
    """Relative residuals of the conservation jumps across x = psi."""
    g = gamma
    _, N = _front_normal(psi, grad_psi, n)

    def fluxes(s):
        u = s["u0"][:, None] * n + s["V"]
        un = np.sum(u * N, -1)
        rho = s["rho"]
        mom = (rho * un)[:, None] * u + s["p"][:, None] * N
        E = 0.5 * np.sum(u * u, -1) + g * s["p"] / ((g - 1) * rho)
        return rho * un, mom, E

    m1, P1, E1 = fluxes(up)
    m2, P2, E2 = fluxes(down)
    scale_m = np.abs(m1).max()
    scale_P = np.abs(P1).max()
    return {"mass": float(np.abs(m1 - m2).max() / scale_m),
            "momentum": float(np.abs(P1 - P2).max() / scale_P),
            "energy": float(np.abs(E1 - E2).max() / np.abs(E1).max())}


# ---------------------------------------------------------------------------
# Front and normalized domain


@dataclass
class ShockFront:
    sphere: SphereGrid
    psi: np.ndarray

    @property
    def r_p(self):
        return float(self.sphere.integrate(self.psi) / FOUR_PI)

    @property
    def psi_p(self):
        return self.psi - self.r_p

    @property
    def coeffs(self):
        return self.sphere.analyze(self.psi)

    def check(self, tb: TransonicBackground):
        bound = min((tb.r_b - tb.r0) / 4, (tb.r1 - tb.r_b) / 4, tb.h_sharp)
        dev = float(np.abs(self.psi - tb.r_b).max())
        if not dev < bound:
            raise TrustRegionExceeded(f"front deviation {dev:.3e} exceeds {bound:.3e}")
        return dev


class DomainMap:
    """Affine radial map between the region behind the front and [r_b, r1]."""

    def __init__(self, psi, r_b, r1):
        self.psi = np.asarray(psi, dtype=float)
        self.r_b, self.r1 = float(r_b), float(r1)

    def to_y(self, x):
        return (x - self.psi) / (self.r1 - self.psi) * (self.r1 - self.r_b) + self.r_b

    def to_x(self, y):
        return (self.r1 - self.psi) / (self.r1 - self.r_b) * (y - self.r_b) + self.psi

    def radial_velocity(self, x, u0, V_dot_grad_psi):
        """y-component of the pushed-forward velocity; V.grad psi on the unit sphere."""
        return (self.r1 - self.r_b) / (self.r1 - self.psi) * (
            u0 - (self.r1 - x) / (self.r1 - self.psi) * V_dot_grad_psi / x)


def normalize_domain(front: ShockFront, tb: TransonicBackground):
    front.check(tb)
    return DomainMap(front.psi, tb.r_b, tb.r1)


# ---------------------------------------------------------------------------
# Problem data and state


class TransonicProblem:
    def __init__(self, tb: TransonicBackground, L_max=8, N_r=128, N_sup=None, mu=None,
                 check_s=True):
        self.tb = tb
        self.gamma = tb.gamma
        if check_s:
            rep = check_s_condition(tb, n_max=max(16, L_max), mu=mu)
            if not rep.holds:
                raise SConditionViolated("S-Condition violated for the background")
        self.mu = mu or mu_constants(tb)
        self.grid = ShellGrid(tb.r_b, tb.r1, N_r, L_max)
        self.sphere = self.grid.sphere
        self.setup = VenttselSetup(tb, self.grid, self.mu)
        self.N_sup = N_sup or N_r
        self.branch = tb.subsonic
        self.y = self.grid.r
        e1, e2, e3, e4, e5 = self.setup.e
        self.e5 = e5

    @classmethod
    def from_parameters(cls, gamma, r_b, p_s, rho_s, M_s, r0, r1, **kw):
        return cls(solve_transonic_background(gamma, r_b, p_s, rho_s, M_s, r0, r1), **kw)

    def calc(self, psi):
        return ShellCalculus(self.grid, psi)

    def background_state(self):
        shp = self.grid.shape
        br = self.branch
        return TransonicState(np.full(self.sphere.size, self.tb.r_b), np.zeros(shp),
                              np.full(shp, br.E), np.full(shp, br.A), np.zeros(shp + (3,)))

    def back_pressure(self, perturb=None):
        """Exit pressure on the sphere grid; amplitudes relative to p_b(r1)."""
        pb1 = float(self.branch.p(self.tb.r1))
        coef = np.zeros(self.sphere.ncoef)
        for n_, m_, amp in (perturb or []):
            n_, m_ = int(n_), int(m_)
            if not (0 <= n_ <= self.sphere.L and -n_ <= m_ <= n_):
                raise ConfigurationError(f"back-pressure mode ({n_},{m_}) outside degree")
            coef[n_ * n_ + n_ + m_] += np.sqrt(4 * np.pi) * float(amp)
        return pb1 * (1 + self.sphere.synthesize(coef))


@dataclass
class TransonicState:
    psi: np.ndarray
    ph: np.ndarray
    E: np.ndarray
    A: np.ndarray
    V: np.ndarray

    def jet(self, prob: TransonicProblem, calc=None):
        calc = calc or prob.calc(self.psi)
        return J.build_jet(calc, prob.branch, self.ph, self.E, self.A, self.V)

    def to_field(self, prob: TransonicProblem) -> ShellField:
        j = self.jet(prob)
        return ShellField(prob.grid, j.u0, self.V, j.p, j.rho, prob.gamma, psi=self.psi)

    def blend(self, other, theta):
        return TransonicState(*(theta * getattr(other, k) + (1 - theta) * getattr(self, k)
                                for k in ("psi", "ph", "E", "A", "V")))


def transonic_norm(prob: TransonicProblem, a: TransonicState, b: TransonicState):
    br = prob.branch
    tb = prob.tb
    c = float(np.sqrt(br.c2(tb.r_b)))
    return (float(np.abs(a.psi - b.psi).max()) / tb.r_b
            + _seminorm((a.ph - b.ph) / br.p(tb.r_b)) + _seminorm((a.E - b.E) / br.E)
            + _seminorm((a.A - b.A) / br.A) + _seminorm((a.V - b.V) / c))


# ---------------------------------------------------------------------------
# Higher-order boundary terms


@dataclass
class GTerms:
    g0: np.ndarray  # tangent field on the unit sphere
    g2: np.ndarray
    g4: np.ndarray
    g5: np.ndarray
    g6: np.ndarray
    g7: np.ndarray
    g8: np.ndarray
    up: dict
    rh: dict
    W: np.ndarray
    dyp: np.ndarray
    B: np.ndarray
    Gtilde: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k) for k in ("g0", "g2", "g4", "g5", "g6", "g7", "g8")}


def front_jet(j, rh, up):
    """Front level of the jet with p, A, E traces taken from the jump relations.

    The linear front constants assume these traces; derivatives are kept.
    """
    j0 = J.slice_jet(j, 0)
    return replace(j0, ph=rh["p"] - j0.pb, A=rh["A"], E=up["E"])


def g_terms(state: TransonicState, inflow: SupersonicInflow, prob: TransonicProblem,
            calc=None, j=None):
    """Boundary remainders as exact expressions minus their linear parts."""
    tb, mu, s = prob.tb, prob.mu, prob.sphere
    g = prob.gamma
    psi = state.psi
    rb = tb.r_b
    calc = calc or prob.calc(psi)
    j = j or state.jet(prob, calc)
    n = s.normal
    gpsi = s.grad(psi)
    up = inflow.at(psi)
    rh = exact_rh_solve(g, up, psi, gpsi, n)
    br = prob.branch
    pb_front = br.p(psi)
    dev = psi - rb
    g2 = rh["p"] - pb_front - mu[2] * dev
    g4 = rh["A"] - br.A - mu[4] * dev
    p_plus = pb_front + state.ph[0]
    jump = p_plus - up["p"]
    if np.any(jump <= 0):
        raise TrustRegionExceeded("pressure jump across the front is not positive")
    Vp = state.V[0]
    W = psi[:, None] * Vp
    omega = rh["m"][:, None] * psi[:, None] * (Vp - up["V"]) / jump[:, None]
    g0 = omega - mu[0] * W
    j0 = front_jet(j, rh, up)
    B = J.exit_functional(j0)
    dyp = calc.dy(state.ph)[0]
    dstarW = -s.div(W)
    dstarg0 = -s.div(g0)
    g3 = mu.gamma3
    g5 = dstarW - mu[5] * dyp - mu[6] * dev + B / g3
    Gt = g3 * (g5 - mu.gamma2 / g3 * g2)
    g6 = mu[0] * g5 + dstarg0
    g7 = mu[2] / (FOUR_PI * mu[6]) * s.integrate(g5) - g2
    g8 = -s.laplacian(g2) + mu[7] * g2 + mu[0] * mu[2] * g5 + mu[2] * dstarg0
    return GTerms(g0, g2, g4, g5, g6, g7, g8, up, rh, W, dyp, B, Gt)


def gtilde_transcribed(state: TransonicState, inflow: SupersonicInflow, prob: TransonicProblem):
    """Front remainder of the exit functional written out term by term.

    B minus its linear part dp_hat/dy + gamma2 p_hat - gamma3 d*(psi V), with
    the front traces of p, A, E taken from the jump relations.  Uses the
    closed form of B with the unit p_r coefficient split off, independent of
    g_terms' bookkeeping.
    """
    mu, s = prob.mu, prob.sphere
    g = prob.gamma
    psi = state.psi
    calc = prob.calc(psi)
    up = inflow.at(psi)
    rh = exact_rh_solve(g, up, psi, s.grad(psi), s.normal)
    j0 = front_jet(state.jet(prob, calc), rh, up)
    x = psi
    p, rho, c2, u0 = j0.p, j0.rho, j0.c2, j0.u0
    V = j0.V
    coef = rho * u0 / (u0 * u0 / c2 - 1)
    p_r = np.sum(j0.gp * j0.n, -1)
    divV = np.trace(j0.JV, axis1=-2, axis2=-1)
    Vgp = np.sum(V * j0.gp, -1)
    Vgu0 = np.sum(V * j0.gu0, -1)
    V2 = np.sum(V * V, -1)
    rest = coef * (2 * u0 / x + divV + Vgp / (g * p) - (Vgu0 - V2 / x) / u0)
    dyp = calc.dy(state.ph)[0]
    W = psi[:, None] * state.V[0]
    lin = dyp + mu.gamma2 * j0.ph + mu.gamma3 * s.div(W)
    return p_r + rest - lin


def g5_transcribed(state: TransonicState, inflow: SupersonicInflow, prob: TransonicProblem):
    """g5 assembled as G/gamma3 + (gamma2/gamma3) g2 from the transcribed remainder."""
    mu = prob.mu
    g2 = g_terms(state, inflow, prob).g2
    return gtilde_transcribed(state, inflow, prob) / mu.gamma3 + mu.gamma2 / mu.gamma3 * g2


# ---------------------------------------------------------------------------
# Iteration


@dataclass
class TransonicOptions:
    tol: float = 1e-10
    max_iter: int = 100
    theta: float = 1.0
    theta_min: float = 0.25
    substeps: int = None


@dataclass
class TransonicReport:
    corrections: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    contraction_ratio: float = float("nan")
    thetas: list = field(default_factory=list)
    step_residuals: list = field(default_factory=list)
    rh_residual: dict = field(default_factory=dict)
    jump_min: float = float("nan")
    psi_p_mean: float = float("nan")
    divcurl_mean: float = float("nan")
    bernoulli_jump: float = float("nan")
    residual: dict = field(default_factory=dict)
    message: str = ""
    runtime: float = 0.0

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    def to_json(self, path=None):
        s = json.dumps(self.as_dict(), indent=2, default=float)
        if path:
            with open(path, "w") as fh:
                fh.write(s + "\n")
        return s


@dataclass
class TransonicSolution:
    front: ShockFront
    state: TransonicState
    field: ShellField
    report: TransonicReport


def transonic_step(state: TransonicState, inflow: SupersonicInflow, p1, prob: TransonicProblem,
                   substeps=None):
    """One application of the six-step mapping; returns (new state, diagnostics)."""
    tb, mu, s = prob.tb, prob.mu, prob.sphere
    g = prob.gamma
    br = prob.branch
    ShockFront(s, state.psi).check(tb)
    calc = prob.calc(state.psi)
    j = state.jet(prob, calc)
    gt = g_terms(state, inflow, prob, calc, j)
    x = calc.x
    u0 = j.u0
    gpsi = s.grad(state.psi)
    u_y = DomainMap(state.psi, tb.r_b, tb.r1).radial_velocity(
        x, u0, np.sum(state.V * gpsi[None], -1))
    vel = TransportVelocity(prob.grid, u_y, state.V / (x * u_y)[..., None])

    # Bernoulli
    Eh = solve_transport(vel, 0.0, 0.0, gt.up["E"] - br.E, "inner", substeps)
    # pressure
    y = prob.y[:, None]
    cb2 = g * j.pb / br.rho(x)
    jb = J.background_jet(calc, br)
    phi = J.pressure_residual(j)
    phi_b = J.pressure_residual(jb)
    interior = prob.setup.apply(state.ph)[0]
    f = interior - prob.e5[:, None] * (state.E - br.E) \
        - y ** 2 * (g * j.p * phi - g * jb.p * phi_b) / cb2
    h1 = p1 - float(br.p(tb.r1))
    ph = prob.setup.solve(f + prob.e5[:, None] * Eh, gt.g8, h1)
    # front
    dyp = calc.dy(ph)[0]
    I_dyp = s.integrate(dyp)
    r_p = tb.r_b - (mu[5] * I_dyp + s.integrate(gt.g5)) / (FOUR_PI * mu[6])
    psi_p = (ph[0] - mu[8] * I_dyp + gt.g7) / mu[2]
    psi = psi_p + r_p
    # entropy
    Ah = solve_transport(vel, 0.0, 0.0, mu[4] * (psi - tb.r_b) + gt.g4, "inner", substeps)
    # tangential velocity on the front
    chi = -s.curl(gt.g0) / mu[0]
    dstar = mu[5] * dyp + mu[6] * psi_p + mu[6] * (r_p - tb.r_b) + gt.g5
    # zero whenever the Venttsel row holds; what is left is discretization error
    dc_mean = float(s.integrate(dstar))
    W = div_curl_solve(s, chi, dstar - dc_mean / FOUR_PI).W
    V0 = W / psi[:, None]
    # tangential velocity inside
    p = j.pb + ph
    A = br.A + Ah
    rho = (p / A) ** (1 / g)
    nrm = calc.normal
    gp = calc.grad(ph)
    gT = gp - np.sum(gp * nrm, -1)[..., None] * nrm
    src = -gT / rho[..., None] - (j.V2 / x)[..., None] * nrm
    V = solve_transport(vel, (u0 / x)[..., None], src, V0, "inner", substeps)
    V -= np.sum(V * nrm, -1)[..., None] * nrm
    new = TransonicState(psi, ph, br.E + Eh, A, V)
    diag = {"psi_p_mean": float(s.integrate(psi_p)), "divcurl_mean": dc_mean,
            "g_max": {k: float(np.abs(v).max()) for k, v in gt.as_dict().items()}}
    return new, diag


def front_diagnostics(state: TransonicState, inflow: SupersonicInflow, prob: TransonicProblem):
    s = prob.sphere
    g = prob.gamma
    calc = prob.calc(state.psi)
    j = state.jet(prob, calc)
    up = inflow.at(state.psi)
    j0 = J.slice_jet(j, 0)
    down = {"u0": j0.u0, "V": state.V[0], "p": j0.p, "rho": j0.rho}
    res = jump_residuals(g, up, down, state.psi, s.grad(state.psi), s.normal)
    return {"rh": res, "jump_min": float((j0.p - up["p"]).min()),
            "bernoulli_jump": float(np.abs(j0.E - up["E"]).max()),
            "psi_p_mean": float(s.integrate(state.psi - s.integrate(state.psi) / FOUR_PI))}


def iterate_transonic(inflow: SupersonicInflow, p1, prob: TransonicProblem,
                      opts: TransonicOptions = None, initial: TransonicState = None):
    opts = opts or TransonicOptions()
    t0 = time.perf_counter()
    rep = TransonicReport()
    state = initial or prob.background_state()
    theta = opts.theta
    prev = state
    for k in range(opts.max_iter):
        try:
            T, diag = transonic_step(state, inflow, p1, prob, opts.substeps)
        except TrustRegionExceeded as exc:
            rep.message = f"front left the trust region: {exc}"
            # diagnostics need a front inside the region
            state = prev
            break
        prev = state
        dU = transonic_norm(prob, T, state)
        # the entropy update sees the new front while the pressure sees the old
        # entropy, so corrections alternate; compare with two sweeps back
        c = rep.corrections
        if len(c) >= 2 and dU > c[-2] and theta > opts.theta_min:
            theta = max(theta / 2, opts.theta_min)
        new = state.blend(T, theta) if theta < 1 else T
        rep.corrections.append(dU)
        rep.thetas.append(theta)
        rep.step_residuals.append(diag)
        rep.iterations = k + 1
        state = new
        if dU < opts.tol:
            rep.converged = True
            rep.message = "converged"
            break
    else:
        rep.message = f"no convergence in {opts.max_iter} iterations"
    rep.contraction_ratio = contraction(rep.corrections, lag=2)
    fd = front_diagnostics(state, inflow, prob)
    rep.rh_residual = fd["rh"]
    rep.jump_min = fd["jump_min"]
    rep.bernoulli_jump = fd["bernoulli_jump"]
    rep.psi_p_mean = fd["psi_p_mean"]
    if rep.step_residuals:
        rep.divcurl_mean = rep.step_residuals[-1]["divcurl_mean"]
    fieldU = state.to_field(prob)
    rep.residual = residual_summary(euler_residual(fieldU))
    rep.runtime = time.perf_counter() - t0
    return TransonicSolution(ShockFront(prob.sphere, state.psi), state, fieldU, rep)


# ---------------------------------------------------------------------------
# Spherically symmetric oracle


def shock_radius_for_exit_pressure(tb: TransonicBackground, p_exit, bracket=None, xtol=1e-13):
    """Shock radius of the fixed-upstream family member with exit pressure p_exit."""
    up = tb.supersonic

    def mismatch(rb):
        t = transonic_from_upstream(up, rb, tb.r1, h_sharp=min(tb.h_sharp, 0.25 * (rb - tb.r0)))
        return float(t.subsonic.p(tb.r1)) - p_exit

    lo, hi = bracket or (tb.r_b - 0.5 * tb.h_sharp, tb.r_b + 0.5 * tb.h_sharp)
    return brentq(mismatch, lo, hi, xtol=xtol)
