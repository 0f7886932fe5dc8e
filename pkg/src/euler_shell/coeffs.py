"""Linearization coefficients of the pressure equation and the shock-front constants."""

from dataclasses import dataclass, field

import numpy as np

from .background import RadialProfile, TransonicBackground, normal_shock_jump
from .gas_core import DomainError, GasConstants


class LinearizationInconsistency(DomainError):
    pass


def stability_poly(gamma, t):
    g = gamma
    return g * (1 + 2 * g) * t ** 4 + (-4 * g * g + 2 * g - 3) * t ** 3 + (14 - 7 * g) * t ** 2 - 19 * t + 6


def _check_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t == 1.0):
        raise DomainError("coefficients have a pole at t = 1")
    return t


def b_coeff(gamma, t):
    t = _check_t(t)
    return ((1 + 2 * gamma) * t * t - 3 * t + 4) / (2 * (t - 1))


def e_coeff(gamma, t):
    # nested form, kept apart from stability_poly on purpose
    t = _check_t(t)
    g = gamma
    inner = ((((g + 2 * g * g) * t - 4 * g * g + 2 * g - 3) * t + 14 - 7 * g) * t - 19) * t + 6
    return 2.0 * inner / (t - 1) ** 3


def d1_coeff(gamma, t):
    t = _check_t(t)
    return 4.0 * ((2 * gamma - 3) * t * t + 8 * t - 3) / (t - 1) ** 3


def d2_coeff(gamma, t):
    t = _check_t(t)
    g = gamma
    return -2.0 / (g - 1) / (t - 1) ** 3 * (2 + (g - 1) * t) * ((2 * g - 3) * t * t + 8 * t - 3)


def linearization_coeffs(gamma, t):
    """(b, e, d1, d2) at squared Mach number t."""
    return b_coeff(gamma, t), e_coeff(gamma, t), d1_coeff(gamma, t), d2_coeff(gamma, t)


def gamma1_from_mach(gamma, M, r1):
    if not 0 <= M < 1:
        raise DomainError("Robin constant needs a subsonic exit state")
    M2 = M * M
    return 2.0 / r1 * (gamma * M2 * M2 - M2 + 2) / (M2 - 1) ** 2


def gamma1(background: RadialProfile, r1):
    return gamma1_from_mach(background.gamma, float(background.mach(r1)), r1)


class ECoeffs:
    """e1..e5 along a subsonic branch, as functions of the radius."""

    def __init__(self, branch: RadialProfile, mu4_over_mu2=0.0):
        if branch.kind != "subsonic":
            raise DomainError("e coefficients need a subsonic branch")
        self.branch = branch
        self.ratio = float(mu4_over_mu2)

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        br = self.branch
        t = br.t(y)
        if np.any(t >= 1):
            raise DomainError("branch is not subsonic on the requested radii")
        g = br.gamma
        rho = br.rho(y)
        b, e, d1, d2 = linearization_coeffs(g, t)
        return (y * y * (t - 1), 4 * y * b, e, self.ratio * rho ** g * d2, -rho * d1)


def e_coeffs(branch: RadialProfile, mu4_over_mu2=0.0):
    return ECoeffs(branch, mu4_over_mu2)


def richardson_slope(f, x, h):
    """Central-difference slope of f at x, extrapolated from steps h and h/2."""
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


def shock_state_offset(tb: TransonicBackground, r):
    """Downstream state of a normal shock at r minus the subsonic branch at r.

    Returns (u0, p, rho, A) differences; the upstream state is the background
    supersonic flow at r.
    """
    g = tb.gamma
    down = normal_shock_jump(tb.supersonic.flow_state(r), GasConstants(g))
    u, p, rho = tb.subsonic.state(r)
    return np.array([down.u0 - u, down.p - p, down.rho - rho,
                     down.p * down.rho ** (-g) - p * rho ** (-g)])


def front_functional(gamma, x, p, dp_dx, A, E, div_V=0.0, V2=0.0):
    """Radial pressure-derivative balance at a front point.

    Zero on every exact solution; linear in the radial pressure derivative
    with unit slope at the background.
    """
    rho = (p / A) ** (1.0 / gamma)
    c2 = gamma * p / rho
    u0 = np.sqrt(2 * E - 2 * c2 / (gamma - 1) - V2)
    M2 = u0 * u0 / c2
    bal = 2 * u0 / x + div_V / x + u0 * dp_dx / (gamma * p) - (dp_dx / rho - V2 / x) / u0
    return rho * u0 / (M2 - 1) * bal


@dataclass
class MuConstants:
    mu: np.ndarray
    gamma2: float
    gamma3: float
    r_b: float
    extras: dict = field(default_factory=dict)

    def __getitem__(self, k):
        return float(self.mu[k])

    def as_dict(self):
        d = {f"mu{k}": float(v) for k, v in enumerate(self.mu)}
        d.update(gamma2=self.gamma2, gamma3=self.gamma3)
        return d


def mu_constants(tb: TransonicBackground, rel_step=1e-5, check=True):
    """Front constants of a transonic background by numerical linearization."""
    g, rb = tb.gamma, tb.r_b
    up, down = tb.upstream(), tb.downstream()
    jump = down.p - up.p
    mu = np.zeros(10)
    mu[0] = down.rho * down.u0 / jump
    h = rel_step * rb
    mu[1:5] = richardson_slope(lambda r: shock_state_offset(tb, r), rb, h)

    sub = tb.subsonic
    pb, Ab, Eb = down.p, sub.A, sub.E
    dpb = float(sub.dp(rb))
    ratio = mu[4] / mu[2]

    def B_of_p(ph):
        return front_functional(g, rb, pb + ph, dpb, Ab + ratio * ph, Eb)

    def B_of_div(dv):
        return front_functional(g, rb, pb, dpb, Ab, Eb, div_V=dv)

    hp = rel_step * pb
    g2 = richardson_slope(B_of_p, 0.0, hp)
    # d*(psi V) = -r_b div_S V at the flat front, and B ~ dp + gamma2 p - gamma3 d*(psi V)
    g3 = richardson_slope(B_of_div, 0.0, rel_step) / rb
    slope = richardson_slope(lambda q: front_functional(g, rb, pb, dpb + q, Ab, Eb), 0.0,
                             rel_step * max(abs(dpb), 1.0))
    mu[5] = 1.0 / g3
    mu[6] = g2 * mu[2] / g3
    mu[7] = -mu[0] * mu[6]
    mu[8] = -mu[2] * mu[5] / (4 * np.pi * mu[6])
    mu[9] = -mu[0] * mu[2] * mu[5]
    out = MuConstants(mu, float(g2), float(g3), float(rb), {"dp_slope": float(slope)})
    if check:
        checks = {"mu0 > 0": mu[0] > 0, "mu5 < 0": mu[5] < 0, "mu6 > 0": mu[6] > 0,
                  "mu7 < 0": mu[7] < 0, "mu8 < 0": mu[8] < 0, "mu9 < 0": mu[9] < 0,
                  "gamma2 > 0": g2 > 0, "gamma3 < 0": g3 < 0}
        bad = [k for k, ok in checks.items() if not ok]
        if bad:
            raise LinearizationInconsistency("linearization inconsistency: " + ", ".join(bad))
    return out
