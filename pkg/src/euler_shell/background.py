"""Spherically symmetric backgrounds: subsonic flows, normal shocks and transonic shocks."""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .gas_core import DomainError, FlowState, GasConstants

RTOL = 1e-13
ATOL = 1e-15


class SonicError(DomainError):
    pass


class InvalidParameters(DomainError):
    pass


def radial_rhs(r, y, gamma):
    u, rho, p = y
    c2 = gamma * p / rho
    den = r * (u * u - c2)
    return np.array([2.0 * c2 * u / den,
                     -2.0 * rho * u * u / den,
                     -2.0 * gamma * p * u * u / den])


def _integrate(gamma, r_start, r_end, y0, mach_stop=None):
    """Radial ODE from r_start to r_end; stops at sonic or at a Mach bound."""

    def sonic(r, y, *_):
        return y[0] ** 2 - gamma * y[2] / y[1]
    sonic.terminal = True

    events = [sonic]
    if mach_stop is not None:
        def bound(r, y, *_):
            return y[0] ** 2 * y[1] / (gamma * y[2]) - mach_stop ** 2
        bound.terminal = True
        events.append(bound)
    scale = np.abs(np.asarray(y0))
    return solve_ivp(radial_rhs, (r_start, r_end), y0, method="DOP853", rtol=RTOL,
                     atol=ATOL * scale, dense_output=True, events=events, args=(gamma,))


class RadialProfile:
    """A radial flow branch on [r_lo, r_hi] with dense-output evaluation."""

    def __init__(self, gamma, pieces, r_lo, r_hi, kind):
        self.gamma = float(gamma)
        self._pieces = pieces  # list of (lo, hi, OdeSolution)
        self.r_lo, self.r_hi = float(r_lo), float(r_hi)
        self.kind = kind
        u, p, rho = self.state(self.r_lo)
        self.E = float(0.5 * u * u + gamma * p / ((gamma - 1.0) * rho))
        self.A = float(p * rho ** (-gamma))

    def _raw(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty((3,) + r.shape)
        flat = r.ravel()
        res = np.empty((3, flat.size))
        done = np.zeros(flat.size, bool)
        tol = 1e-12 * max(1.0, abs(self.r_hi))
        if np.any(flat < self.r_lo - tol) or np.any(flat > self.r_hi + tol):
            raise DomainError(
                f"radius outside [{self.r_lo}, {self.r_hi}] for this {self.kind} branch")
        for lo, hi, sol in self._pieces:
            sel = (~done) & (flat >= lo - tol) & (flat <= hi + tol)
            if np.any(sel):
                res[:, sel] = sol(np.clip(flat[sel], lo, hi))
                done |= sel
        out[:] = res.reshape((3,) + r.shape)
        return out

    def state(self, r):
        """(u, p, rho) at r."""
        u, rho, p = self._raw(r)
        return u, p, rho

    def u(self, r):
        return self._raw(r)[0]

    def rho(self, r):
        return self._raw(r)[1]

    def p(self, r):
        return self._raw(r)[2]

    def c2(self, r):
        _, rho, p = self._raw(r)
        return self.gamma * p / rho

    def t(self, r):
        u, rho, p = self._raw(r)
        return u * u * rho / (self.gamma * p)

    def mach(self, r):
        return np.sqrt(self.t(r))

    def derivatives(self, r):
        """(u', p', rho') from the ODE right-hand side."""
        r = np.asarray(r, dtype=float)
        y = self._raw(r)
        d = radial_rhs(r, y, self.gamma)
        return d[0], d[2], d[1]

    def dp(self, r):
        return self.derivatives(r)[1]

    def d2p(self, r):
        """Exact second derivative of the pressure along the branch."""
        r = np.asarray(r, dtype=float)
        g, t, p = self.gamma, self.t(r), self.p(r)
        return 2 * g * p * t * (2 * g * t * t + t * t - 4 * t + 5) / (r * r * (t - 1.0) ** 3)

    def flow_state(self, r):
        u, p, rho = self.state(r)
        return FlowState(float(u), (0.0, 0.0), float(p), float(rho))

    def table(self, r):
        u, p, rho = self.state(r)
        g = self.gamma
        M = np.sqrt(u * u * rho / (g * p))
        E = 0.5 * u * u + g * p / ((g - 1) * rho)
        A = p * rho ** (-g)
        return np.column_stack([r, u, p, rho, M, E, A])


def _branch(gamma, r_anchor, y_anchor, r_lo, r_hi, kind, mach_stop=None):
    pieces = []
    lo, hi = r_anchor, r_anchor
    if r_hi > r_anchor:
        sol = _integrate(gamma, r_anchor, r_hi, y_anchor, mach_stop)
        if sol.status != 0:
            return None, sol
        pieces.append((r_anchor, r_hi, sol.sol))
        hi = r_hi
    if r_lo < r_anchor:
        sol = _integrate(gamma, r_anchor, r_lo, y_anchor, mach_stop)
        if sol.status != 0:
            return None, sol
        pieces.append((r_lo, r_anchor, sol.sol))
        lo = r_lo
    return RadialProfile(gamma, pieces, lo, hi, kind), None


def sonic_entry_threshold(E1, A1, gamma):
    g = gamma
    k = g / (g - 1.0)
    return (2.0 / g * (g - 1.0) / (g + 1.0)) ** k * E1 ** k * A1 ** (-1.0 / (g - 1.0))


def solve_subsonic_background(p0, E1, s1, u0_at_r0_sign, r0, r1, gas: GasConstants):
    """Subsonic radial flow with pressure p0 at r0 and Bernoulli E1, entropy s1 at r1."""
    if u0_at_r0_sign <= 0:
        raise DomainError("the flow must enter through r0 (positive radial velocity)")
    if not r1 > r0 > 0:
        raise DomainError("need 0 < r0 < r1")
    g = gas.gamma
    A = float(gas.A_from_entropy(s1))
    if not p0 > sonic_entry_threshold(E1, A, g):
        raise SonicError("sonic-at-entry: entry pressure at or below the sonic threshold")
    rho0 = (p0 / A) ** (1.0 / g)
    u2 = 2.0 * E1 - 2.0 * g * p0 / ((g - 1.0) * rho0)
    if u2 <= 0:
        raise DomainError("entry pressure exceeds the stagnation pressure")
    prof, fail = _branch(g, r0, [np.sqrt(u2), rho0, p0], r0, r1, "subsonic")
    if prof is None:
        raise SonicError(f"subsonic branch turned sonic at r={fail.t[-1]:.6g}")
    return prof


def subsonic_from_mach(gamma, M0, r0, r1, p0=1.0, rho0=1.0):
    """Subsonic background fixed by the entry Mach number."""
    if not 0 < M0 < 1:
        raise SonicError("sonic-at-entry: entry Mach number must lie in (0, 1)")
    gas = GasConstants(gamma)
    c2 = gamma * p0 / rho0
    E = 0.5 * M0 * M0 * c2 + c2 / (gamma - 1.0)
    A = p0 * rho0 ** (-gamma)
    return solve_subsonic_background(p0, E, gas.entropy_from_A(A), 1, r0, r1, gas)


def supersonic_from_mach(gamma, M0, r0, r1, p0=1.0, rho0=1.0):
    """Supersonic radial flow entering at r0 with Mach M0 > 1, on [r0, r1]."""
    if not M0 > 1:
        raise DomainError("supersonic inflow needs M0 > 1")
    u0 = M0 * np.sqrt(gamma * p0 / rho0)
    prof, fail = _branch(gamma, r0, [u0, rho0, p0], r0, r1, "supersonic")
    if prof is None:
        raise SonicError(f"supersonic branch turned sonic at r={fail.t[-1]:.6g}")
    return prof


def mach_closed_form(gamma, M0, r0):
    """r(M) on the subsonic branch through (r0, M0), and the companion u(M)."""
    if not 0 < M0 < 1:
        raise DomainError("M0 must lie in (0, 1)")
    expo = 0.25 + 0.5 / (gamma - 1.0)

    def shape(M):
        M = np.asarray(M, dtype=float)
        if np.any(M <= 0):
            raise DomainError("Mach number must be positive")
        return (2.0 + (gamma - 1.0) * M * M) ** expo / np.sqrt(M)

    c1 = r0 / shape(M0)

    def r_of_M(M):
        return c1 * shape(M)

    def u_of_M(M, c2=1.0):
        M = np.asarray(M, dtype=float)
        return c2 * M / np.sqrt(2.0 + (gamma - 1.0) * M * M)

    r_of_M.exponent = expo
    r_of_M.u = u_of_M
    return r_of_M


def normal_shock_jump(upstream: FlowState, gas: GasConstants) -> FlowState:
    """Downstream state of a normal shock with supersonic upstream."""
    g = gas.gamma
    if abs(upstream.ut[0]) + abs(upstream.ut[1]) > 0:
        raise DomainError("normal shock expects zero tangential velocity")
    u1, p1, r1 = upstream.u0, upstream.p, upstream.rho
    c2 = g * p1 / r1
    if not u1 * u1 > c2:
        raise DomainError("upstream state is not supersonic")
    m = r1 * u1
    E = 0.5 * u1 * u1 + c2 / (g - 1.0)
    # (g+1) w^2 - 2g (p1/m + u1) w + 2(g-1) E = 0 has roots u1 and the shocked w
    a, b, c = g + 1.0, -2.0 * g * (p1 / m + u1), 2.0 * (g - 1.0) * E
    disc = b * b - 4 * a * c
    if disc < 0:
        raise DomainError("no admissible root of the jump relations")
    roots = np.array([(-b - np.sqrt(disc)) / (2 * a), (-b + np.sqrt(disc)) / (2 * a)])
    w = roots[np.argmin(roots)]
    w = c / (a * u1) if abs(w - u1) < 1e-12 * u1 else w
    rho2 = m / w
    p2 = p1 + m * (u1 - w)
    if not (p2 > p1 and w * w < g * p2 / rho2):
        raise DomainError("jump root is not compressive")
    return FlowState(float(w), (0.0, 0.0), float(p2), float(rho2))


def inverse_normal_shock(downstream: FlowState, gas: GasConstants) -> FlowState:
    """Unique supersonic pre-image of a subsonic downstream state."""
    g = gas.gamma
    u2, p2, r2 = downstream.u0, downstream.p, downstream.rho
    c2 = g * p2 / r2
    if not 0 < u2 * u2 < c2:
        raise DomainError("downstream state must be subsonic with positive velocity")
    m = r2 * u2
    E = 0.5 * u2 * u2 + c2 / (g - 1.0)
    u1 = 2.0 * (g - 1.0) * E / ((g + 1.0) * u2)
    return FlowState(float(u1), (0.0, 0.0), float(p2 - m * (u1 - u2)), float(m / u1))


def jump_residual(up: FlowState, down: FlowState, gamma):
    """Relative residuals of mass, momentum and energy across a normal shock."""
    gas = GasConstants(gamma)
    from .gas_core import bernoulli
    m1, m2 = up.rho * up.u0, down.rho * down.u0
    P1, P2 = m1 * up.u0 + up.p, m2 * down.u0 + down.p
    E1, E2 = bernoulli(up, gas), bernoulli(down, gas)
    return max(abs(m1 - m2) / abs(m1), abs(P1 - P2) / abs(P1), abs(E1 - E2) / abs(E1))


@dataclass
class TransonicBackground:
    supersonic: RadialProfile
    subsonic: RadialProfile
    r_b: float
    h_sharp: float
    r0: float
    r1: float
    gamma: float

    def upstream(self):
        return self.supersonic.flow_state(self.r_b)

    def downstream(self):
        return self.subsonic.flow_state(self.r_b)

    def rh_residual(self):
        return jump_residual(self.upstream(), self.downstream(), self.gamma)

    def pressure_jump(self):
        return self.downstream().p - self.upstream().p


def solve_transonic_background(gamma, r_b, p_s, rho_s, M_s, r0, r1, h_sharp=None):
    """Transonic shock at r_b with downstream (p_s, rho_s, M_s)."""
    if not 0 < M_s < 1:
        raise InvalidParameters("downstream Mach number must lie in (0, 1)")
    if M_s > 0.999:
        raise InvalidParameters("downstream Mach number too close to 1")
    if not r0 < r_b < r1:
        raise InvalidParameters("need r0 < r_b < r1")
    if not (p_s > 0 and rho_s > 0):
        raise InvalidParameters("p_s and rho_s must be positive")
    gas = GasConstants(gamma)
    down = FlowState(M_s * np.sqrt(gamma * p_s / rho_s), (0.0, 0.0), p_s, rho_s)
    up = inverse_normal_shock(down, gas)
    sup, fail = _branch(gamma, r_b, [up.u0, up.rho, up.p], r0, r1, "supersonic")
    if sup is None:
        raise InvalidParameters(
            f"supersonic branch loses supersonicity at r={fail.t[-1]:.6g} before r0")
    h_max = 0.25 * (r_b - r0)
    y_down = [down.u0, down.rho, down.p]
    fwd = _integrate(gamma, r_b, r1, y_down)
    if fwd.status != 0:
        raise InvalidParameters(f"subsonic branch turns sonic at r={fwd.t[-1]:.6g}")
    if h_sharp is None:
        back = _integrate(gamma, r_b, r_b - h_max, y_down, mach_stop=0.99)
        if back.status == 1:
            h = r_b - back.t[-1]
            warnings.warn(f"subsonic extension reduced to h_sharp={h:.4g} (Mach 0.99 reached)")
            h = 0.999 * h
            back = _integrate(gamma, r_b, r_b - h, y_down)
        else:
            h = h_max
    else:
        h = float(h_sharp)
        back = _integrate(gamma, r_b, r_b - h, y_down)
        if back.status != 0:
            raise InvalidParameters("requested extension reaches the sonic point")
    sub = RadialProfile(gamma, [(r_b, r1, fwd.sol), (r_b - h, r_b, back.sol)],
                        r_b - h, r1, "subsonic")
    return TransonicBackground(sup, sub, float(r_b), float(h), float(r0), float(r1), float(gamma))


def transonic_from_upstream(upstream: RadialProfile, r_b, r1, h_sharp=None):
    """Member of the fixed-upstream family with the shock at r_b."""
    gas = GasConstants(upstream.gamma)
    down = normal_shock_jump(upstream.flow_state(r_b), gas)
    M_s = down.u0 / np.sqrt(gas.gamma * down.p / down.rho)
    tb = solve_transonic_background(upstream.gamma, r_b, down.p, down.rho, M_s,
                                    upstream.r_lo, r1, h_sharp)
    return tb
