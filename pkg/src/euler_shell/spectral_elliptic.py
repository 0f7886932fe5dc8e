"""Mode-wise radial boundary value problems on the shell.

Every solver here expands in spherical harmonics and treats each degree n
with a fundamental pair of the radial operator plus variation of parameters:

    v(y) = c1 phi1 + c2 phi2 + phi2(y) int phi1 g / W - phi1(y) int phi2 g / W.

The fundamental pairs come from a high-order adaptive integrator; integrals
of nodal data use Chebyshev cumulative quadrature on the solver's own nodes.
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import solve_ivp

from .background import RadialProfile, TransonicBackground, radial_rhs
from .coeffs import (ECoeffs, MuConstants, b_coeff, d2_coeff, e_coeff, gamma1,
                     mu_constants)
from .gas_core import DomainError, ShellGrid
from .radial import ChebInterval

IVP_RTOL = 1e-13


class SConditionViolated(DomainError):
    pass


class StabilityConditionViolated(DomainError):
    pass


@dataclass
class ModeBVP:
    """v'' + p v' + q v = r v(lo) + f on [lo, hi]; v'(lo) + a v(lo) = h; v(hi) = 0."""

    n: int
    p: Callable
    q: Callable
    r: Callable
    f: Callable
    a: float
    h: float
    lo: float
    hi: float

    @property
    def lam(self):
        return self.n * (self.n + 1)


def _pair_ivp(p, q, lo, hi, nodes):
    def rhs(y, s):
        w1, d1, w2, d2 = s
        pv, qv = p(y), q(y)
        return [d1, -pv * d1 - qv * w1, d2, -pv * d2 - qv * w2]

    sol = solve_ivp(rhs, (lo, hi), [1.0, 0.0, 0.0, 1.0], method="DOP853",
                    rtol=IVP_RTOL, atol=1e-14, t_eval=nodes, dense_output=True)
    if sol.status != 0:
        raise RuntimeError(f"fundamental pair integration failed: {sol.message}")
    return sol


def cauchy_pair(bvp: ModeBVP, n_nodes=64):
    """Fundamental solutions at Chebyshev nodes: (nodes, phi1, dphi1, phi2, dphi2)."""
    cheb = ChebInterval(bvp.lo, bvp.hi, n_nodes)
    sol = _pair_ivp(bvp.p, bvp.q, bvp.lo, bvp.hi, cheb.nodes)
    w1, d1, w2, d2 = sol.y
    return cheb, w1, d1, w2, d2


def wronskian(w1, d1, w2, d2):
    return w1 * d2 - d1 * w2


def _particular(cheb, w1, w2, W, g):
    """phi2 * int phi1 g / W - phi1 * int phi2 g / W, and its derivative weights."""
    I1 = cheb.cumulative((w1 / W)[:, None] * g)
    I2 = cheb.cumulative((w2 / W)[:, None] * g)
    return w2[:, None] * I1 - w1[:, None] * I2, I1, I2


def _vop_nonlocal(cheb, w1, d1, w2, d2, rvals, fvals, a, h):
    """Nonlocal Venttsel-type mode problem for several right-hand sides (columns)."""
    W = wronskian(w1, d1, w2, d2)
    fvals = np.atleast_2d(np.asarray(fvals, dtype=float).T).T
    vr = _particular(cheb, w1, w2, W, rvals[:, None])[0][:, 0]
    vf = _particular(cheb, w1, w2, W, fvals)[0]
    # c2 + a c1 = h ;  (phi1(hi) + vr(hi)) c1 + phi2(hi) c2 = -vf(hi)
    M = np.array([[a, 1.0], [w1[-1] + vr[-1], w2[-1]]])
    scale = np.abs(M).max()
    det = np.linalg.det(M)
    if abs(det) <= 1e-13 * scale * scale:
        raise SConditionViolated("S-Condition violated at this mode: singular 2x2 system")
    rhs = np.vstack([np.broadcast_to(h, vf.shape[1]), -vf[-1]])
    c1, c2 = np.linalg.solve(M, rhs)
    return (w1 + vr)[:, None] * c1 + w2[:, None] * c2 + vf


def mode_bvp_solve(bvp: ModeBVP, n_nodes=64):
    """Solve a single nonlocal mode problem; returns (nodes, values)."""
    cheb, w1, d1, w2, d2 = cauchy_pair(bvp, n_nodes)
    y = cheb.nodes
    v = _vop_nonlocal(cheb, w1, d1, w2, d2, np.asarray(bvp.r(y), float) * np.ones_like(y),
                      np.asarray(bvp.f(y), float) * np.ones_like(y), bvp.a, bvp.h)[:, 0]
    return cheb, v


def mode_residual(bvp: ModeBVP, cheb: ChebInterval, v, n_check=40):
    """Max residual of the nonlocal ODE and both boundary rows, relative to the data."""
    coarse = ChebInterval(bvp.lo, bvp.hi, n_check)
    vc = cheb.interpolate(v, coarse.nodes)
    y = coarse.nodes
    dv = coarse.derivative(vc)
    ddv = coarse.derivative(vc, 2)
    res = ddv + bvp.p(y) * dv + bvp.q(y) * vc - bvp.r(y) * vc[0] - bvp.f(y)
    scale = max(np.abs(ddv).max(), np.abs(bvp.f(y)).max() if np.ndim(bvp.f(y)) else abs(bvp.f(y)), 1e-300)
    dv0 = cheb.derivative(v)[0]
    return {"interior": float(np.abs(res).max() / scale),
            "inner": float(abs(dv0 + bvp.a * v[0] - bvp.h)),
            "outer": float(abs(v[-1]))}


def fd_mode_solve(bvp: ModeBVP, N=2000):
    """Second-order finite-difference oracle with the nonlocal term as a dense column."""
    y = np.linspace(bvp.lo, bvp.hi, N + 1)
    hgrid = y[1] - y[0]
    A = np.zeros((N + 1, N + 1))
    b = np.zeros(N + 1)
    p, q, r, f = (np.broadcast_to(np.asarray(fn(y), float), y.shape) for fn in (bvp.p, bvp.q, bvp.r, bvp.f))
    i = np.arange(1, N)
    A[i, i - 1] = 1 / hgrid ** 2 - p[i] / (2 * hgrid)
    A[i, i] = -2 / hgrid ** 2 + q[i]
    A[i, i + 1] = 1 / hgrid ** 2 + p[i] / (2 * hgrid)
    A[i, 0] -= r[i]
    b[i] = f[i]
    A[0, :3] = np.array([-1.5, 2.0, -0.5]) / hgrid
    A[0, 0] += bvp.a
    b[0] = bvp.h
    A[N, N] = 1.0
    return y, np.linalg.solve(A, b)


# ---------------------------------------------------------------------------
# Fundamental pairs along a background branch


def _branch_pairs(branch: RadialProfile, lo, hi, lams, nodes, source=None):
    """Integrate the background ODE together with Cauchy problems of
    e1 w'' + e2 w' + (e3 + lam) w = s(y) for every lam.

    Without a source the pair (1,0), (0,1) at lo is returned for each lam as
    arrays (k, nodes).  With source=(ratio, w0, dw0) only one solution per lam
    is integrated, with w(lo)=1 and w'(lo)=dw0[k]; the source is
    -ratio * rho^gamma * d2(t).
    """
    g = branch.gamma
    lams = np.asarray(lams, dtype=float)
    k = lams.size
    u, p, rho = branch.state(lo)
    if source is None:
        w0 = np.concatenate([np.ones(k), np.zeros(k)])
        dw0 = np.concatenate([np.zeros(k), np.ones(k)])
        lam_all = np.concatenate([lams, lams])
        ratio = 0.0
    else:
        ratio, dw0 = source
        w0 = np.ones(k)
        dw0 = np.asarray(dw0, dtype=float)
        lam_all = lams
    m = lam_all.size

    def rhs(y, s):
        bg = s[:3]
        w, dw = s[3:3 + m], s[3 + m:]
        uu, rr, pp = bg
        t = uu * uu * rr / (g * pp)
        e1 = y * y * (t - 1)
        e2 = 4 * y * b_coeff(g, t)
        e3 = e_coeff(g, t)
        src = -ratio * rr ** g * d2_coeff(g, t) if ratio else 0.0
        ddw = (src - e2 * dw - (e3 + lam_all) * w) / e1
        return np.concatenate([radial_rhs(y, bg, g), dw, ddw])

    s0 = np.concatenate([[u, rho, p], w0, dw0])
    atol = np.concatenate([1e-15 * np.abs(s0[:3]), np.full(2 * m, 1e-14)])
    sol = solve_ivp(rhs, (lo, hi), s0, method="DOP853", rtol=IVP_RTOL, atol=atol,
                    t_eval=np.clip(nodes, min(lo, hi), max(lo, hi)))
    if sol.status != 0:
        raise RuntimeError(f"mode integration failed: {sol.message}")
    w, dw = sol.y[3:3 + m], sol.y[3 + m:]
    if source is not None:
        return w, dw
    return w[:k], dw[:k], w[k:], dw[k:]


class VenttselSetup:
    """Precomputed per-degree data for the nonlocal problem with a Venttsel row.

    The interior operator is
        -Lap_S v + e1 v'' + e2 v' + e3 v + e4 v(r_b),
    with v = h1 on the outer surface and
        -Lap_S v + mu7 v + mu9 v' = h0 on the inner surface.
    """

    def __init__(self, tb: TransonicBackground, grid: ShellGrid, mu: MuConstants = None):
        if abs(grid.radial.a - tb.r_b) > 1e-12 or abs(grid.radial.b - tb.r1) > 1e-12:
            raise DomainError("grid must span [r_b, r1]")
        self.tb, self.grid = tb, grid
        self.mu = mu if mu is not None else mu_constants(tb)
        self.cheb = grid.radial
        y = self.cheb.nodes
        self.ec = ECoeffs(tb.subsonic, self.mu[4] / self.mu[2])
        self.e = self.ec(y)
        L = grid.L
        self.lams = np.array([n * (n + 1.0) for n in range(L + 1)])
        self.pairs = _branch_pairs(tb.subsonic, tb.r_b, tb.r1, self.lams, y)
        self.degree = grid.sphere.degree

    def solve(self, f, h0, h1=None):
        s = self.grid.sphere
        mu7, mu9 = self.mu[7], self.mu[9]
        f = np.asarray(f, dtype=float)
        h0 = np.asarray(h0, dtype=float)
        if h1 is not None and np.any(h1 != 0):
            h1 = np.asarray(h1, dtype=float)
            Lh1 = -s.laplacian(h1)
            e1, e2, e3, e4, e5 = self.e
            f = f - (Lh1[None, :] + (e3 + e4)[:, None] * h1[None, :])
            h0 = h0 + s.laplacian(h1) - mu7 * h1
        else:
            h1 = None
        F = s.analyze(f)
        H = s.analyze(h0)
        e1, e2, e3, e4, e5 = self.e
        V = np.zeros_like(F)
        w1s, d1s, w2s, d2s = self.pairs
        for n in range(self.grid.L + 1):
            cols = np.nonzero(self.degree == n)[0]
            a = (mu7 + self.lams[n]) / mu9
            V[:, cols] = _vop_nonlocal(self.cheb, w1s[n], d1s[n], w2s[n], d2s[n], -e4 / e1,
                                       F[:, cols] / e1[:, None], a, H[cols] / mu9)
        out = s.synthesize(V)
        if h1 is not None:
            out = out + h1[None, :]
        return out

    def apply(self, v, n_check=None):
        """(interior, outer trace, Venttsel row) of the operator applied to v."""
        s = self.grid.sphere
        cheb = self.cheb
        e1, e2, e3, e4, _ = self.e
        if n_check is not None:
            coarse = ChebInterval(cheb.a, cheb.b, n_check)
            v = cheb.interpolate(v, coarse.nodes)
            cheb = coarse
            e1, e2, e3, e4, _ = self.ec(coarse.nodes)
        dv = cheb.derivative(v)
        ddv = cheb.derivative(v, 2)
        lap = s.laplacian(v)
        interior = (-lap + e1[:, None] * ddv + e2[:, None] * dv + e3[:, None] * v
                    + e4[:, None] * v[0][None, :])
        mu7, mu9 = self.mu[7], self.mu[9]
        vent = -lap[0] + mu7 * v[0] + mu9 * dv[0]
        return interior, v[-1], vent


def venttsel_solve(f, h0, h1, setup: VenttselSetup):
    return setup.solve(f, h0, h1)


def venttsel_residuals(setup: VenttselSetup, v, f, h0, h1, n_check=48):
    """Quadrature-norm residuals of the three rows, relative to the data scale."""
    interior, outer, vent = setup.apply(v, n_check)
    coarse = ChebInterval(setup.cheb.a, setup.cheb.b, n_check)
    fc = setup.cheb.interpolate(f, coarse.nodes)
    s = setup.grid.sphere
    w = coarse.weights[:, None] * s.weights[None, :]
    scale = max(np.sqrt(np.sum(w * fc ** 2)), np.sqrt(np.sum(s.weights * h0 ** 2)), 1e-300)
    h1 = np.zeros_like(outer) if h1 is None else h1
    return {"interior": float(np.sqrt(np.sum(w * (interior - fc) ** 2)) / scale),
            "outer": float(np.sqrt(np.sum(s.weights * (outer - h1) ** 2)) / scale),
            "venttsel": float(np.sqrt(np.sum(s.weights * (vent - h0) ** 2)) / scale)}


# ---------------------------------------------------------------------------
# S-Condition


def theta_values(tb: TransonicBackground, ns, mu: MuConstants = None):
    """w(r1) for e1 w'' + e2 w' + (e3+lam) w = -e4, w(r_b)=1, w'(r_b)=-(mu7+lam)/mu9."""
    mu = mu if mu is not None else mu_constants(tb)
    ns = np.atleast_1d(ns)
    lams = ns * (ns + 1.0)
    dw0 = -(mu[7] + lams) / mu[9]
    w, _ = _branch_pairs(tb.subsonic, tb.r_b, tb.r1, lams, [tb.r1],
                         source=(mu[4] / mu[2], dw0))
    return w[:, -1]


def theta(n, tb: TransonicBackground, mu: MuConstants = None):
    return float(theta_values(tb, [n], mu)[0])


@dataclass
class SConditionReport:
    r_b: float
    thetas: np.ndarray
    n_eff: int
    n_max: int
    threshold: float
    violated: list = field(default_factory=list)

    @property
    def holds(self):
        return not self.violated

    @property
    def margin(self):
        return float(np.min(np.abs(self.thetas[:self.n_eff + 1])))

    def as_dict(self):
        return {"r_b": self.r_b, "verdict": "holds" if self.holds else "violated",
                "violated_n": [int(n) for n in self.violated], "n_eff": int(self.n_eff),
                "n_max": int(self.n_max), "margin": self.margin, "threshold": self.threshold}


def effective_degree(thetas):
    """Last degree inspected: stop once theta > 1 and increased for 3 consecutive n."""
    run = 0
    for n in range(1, len(thetas)):
        if thetas[n] > 1 and thetas[n] > thetas[n - 1]:
            run += 1
            if run >= 3:
                return n
        else:
            run = 0
    return len(thetas) - 1


def check_s_condition(tb: TransonicBackground, n_max=64, threshold=1e-8, mu=None):
    if n_max < 1:
        raise DomainError("n_max must be at least 1")
    th = theta_values(tb, np.arange(n_max + 1), mu)
    n_eff = effective_degree(th)
    tol = threshold * abs(th[0]) if th[0] != 0 else threshold
    bad = [n for n in range(n_eff + 1) if abs(th[n]) <= tol]
    return SConditionReport(tb.r_b, th, n_eff, n_max, threshold, bad)


def scan_s_condition(make_background, rb_grid, n_max=64, threshold=1e-8):
    """Reports for each r_b; make_background(r_b) builds the background."""
    return [check_s_condition(make_background(rb), n_max, threshold) for rb in rb_grid]


def sign_change_brackets(rb_grid, thetas):
    """Intervals of r_b where theta_n changes sign, per degree (columns)."""
    th = np.asarray(thetas)
    out = []
    for n in range(th.shape[1]):
        flips = np.nonzero(np.sign(th[:-1, n]) != np.sign(th[1:, n]))[0]
        out.extend((n, rb_grid[i], rb_grid[i + 1]) for i in flips)
    return out


# ---------------------------------------------------------------------------
# Dirichlet-Robin problem of the subsonic shell


class RobinDirichletSetup:
    """Per-degree data for (t-1)v'' + (4/x) b v' + (e + lam)/x^2 v = g on [r0, r1],
    v(r0) = D, v'(r1) + gamma1 v(r1) = G.
    """

    def __init__(self, branch: RadialProfile, grid: ShellGrid, gamma1_value=None):
        self.branch, self.grid = branch, grid
        self.cheb = grid.radial
        r0, r1 = self.cheb.a, self.cheb.b
        self.g1 = gamma1(branch, r1) if gamma1_value is None else float(gamma1_value)
        self.lams = np.array([n * (n + 1.0) for n in range(grid.L + 1)])
        y = self.cheb.nodes
        self.pairs = _branch_pairs(branch, r0, r1, self.lams, y)
        t = branch.t(y)
        self.e1 = y * y * (t - 1)
        self.degree = grid.sphere.degree
        w1, d1, w2, d2 = self.pairs
        self.robin2 = d2[:, -1] + self.g1 * w2[:, -1]
        scale = np.abs(d2[:, -1]) + abs(self.g1) * np.abs(w2[:, -1])
        bad = np.nonzero(np.abs(self.robin2) <= 1e-12 * scale)[0]
        if bad.size:
            raise StabilityConditionViolated(
                f"subsonic stability condition violated: singular mode n={int(bad[0])}")

    def solve_modes(self, n, g, D, G):
        """Columns of g (nodes, k) with boundary scalars D, G (k,)."""
        w1s, d1s, w2s, d2s = self.pairs
        w1, d1, w2, d2 = w1s[n], d1s[n], w2s[n], d2s[n]
        W = wronskian(w1, d1, w2, d2)
        x2g = (self.cheb.nodes ** 2)[:, None] * np.atleast_2d(np.asarray(g, float).T).T / self.e1[:, None]
        vg, I1, I2 = _particular(self.cheb, w1, w2, W, x2g)
        dvg_end = d2[-1] * I1[-1] - d1[-1] * I2[-1]
        D = np.broadcast_to(D, vg.shape[1])
        c2 = (G - D * (d1[-1] + self.g1 * w1[-1]) - (dvg_end + self.g1 * vg[-1])) / self.robin2[n]
        return w1[:, None] * D + w2[:, None] * c2 + vg

    def solve(self, g, D, G):
        """Grid solve: g (Nr+1, Na), D and G on the sphere grid."""
        s = self.grid.sphere
        Gc = s.analyze(g)
        Dc, GG = s.analyze(D), s.analyze(G)
        V = np.zeros_like(Gc)
        for n in range(self.grid.L + 1):
            cols = np.nonzero(self.degree == n)[0]
            V[:, cols] = self.solve_modes(n, Gc[:, cols], Dc[cols], GG[cols])
        return s.synthesize(V)


def robin_dirichlet_mode_solve(n, setup: RobinDirichletSetup, g, D=0.0, G=0.0):
    """Single-mode solve at the setup's radial nodes."""
    if n > setup.grid.L:
        raise DomainError("degree exceeds the setup truncation")
    return setup.solve_modes(n, np.asarray(g, float)[:, None], np.array([D]), np.array([G]))[:, 0]
