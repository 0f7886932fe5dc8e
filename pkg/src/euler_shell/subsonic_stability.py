"""Fixed-point solver for the subsonic shell problem with perturbed boundary data.

Unknowns are the pressure deviation p_hat, Bernoulli E, entropy function A and
the tangential velocity V.  One sweep of the mapping:

1. E and A by transport from the exit sphere along the current streamlines;
2. p_hat from the linearized mixed problem (Dirichlet at the entry, Robin at
   the exit) with the higher-order remainders of the current iterate on the
   right-hand side;
3. V by transport of the tangential momentum equation from the exit sphere.
"""

import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import jet as J
from .background import RadialProfile, subsonic_from_mach
from .coeffs import gamma1, linearization_coeffs, stability_poly
from .gas_core import (ConfigurationError, DomainError, ShellCalculus, ShellField,
                       ShellGrid, euler_residual, residual_summary)
from .jet import TrustRegionExceeded
from .spectral_elliptic import RobinDirichletSetup, StabilityConditionViolated
from .transport import TransportVelocity, solve_transport


class SubsonicProblem:
    """Background flow, grid and precomputed operators for one shell."""

    def __init__(self, branch: RadialProfile, L_max=8, N_r=128, allow_unstable=False):
        if branch.kind != "subsonic":
            raise DomainError("subsonic problem needs a subsonic background")
        self.branch = branch
        self.gamma = branch.gamma
        self.r0, self.r1 = branch.r_lo, branch.r_hi
        self.grid = ShellGrid(self.r0, self.r1, N_r, L_max)
        self.calc = ShellCalculus(self.grid)
        r = self.grid.r
        self.stable = bool(np.all(stability_poly(self.gamma, branch.t(r)) <= 0))
        if not self.stable and not allow_unstable:
            raise StabilityConditionViolated(
                "subsonic stability condition violated: e(t) < 0 somewhere on the shell")
        self.g1 = gamma1(branch, self.r1)
        self.setup = RobinDirichletSetup(branch, self.grid, self.g1)
        self.jb = J.background_jet(self.calc, branch)
        self.phi_b = J.pressure_residual(self.jb)
        x = self.calc.x
        self.pb = branch.p(x)
        self.rho_b = branch.rho(x)
        self.cb2 = self.gamma * self.pb / self.rho_b
        _, _, d1, d2 = linearization_coeffs(self.gamma, branch.t(x))
        self.src_E = self.rho_b / x ** 2 * d1
        self.src_A = self.rho_b ** self.gamma / x ** 2 * d2
        self.jb_exit = J.slice_jet(self.jb, -1)

    @classmethod
    def from_mach(cls, gamma, M0, r0, r1, L_max=8, N_r=128, p0=1.0, rho0=1.0, **kw):
        return cls(subsonic_from_mach(gamma, M0, r0, r1, p0, rho0), L_max, N_r, **kw)

    def background_state(self):
        shp = self.grid.shape
        return SubsonicState(np.zeros(shp), np.full(shp, self.branch.E),
                             np.full(shp, self.branch.A), np.zeros(shp + (3,)))

    def background_field(self):
        return self.background_state().to_field(self)


@dataclass
class SubsonicState:
    ph: np.ndarray
    E: np.ndarray
    A: np.ndarray
    V: np.ndarray

    def jet(self, prob: SubsonicProblem):
        return J.build_jet(prob.calc, prob.branch, self.ph, self.E, self.A, self.V)

    def to_field(self, prob: SubsonicProblem) -> ShellField:
        j = self.jet(prob)
        return ShellField(prob.grid, j.u0, self.V, j.p, j.rho, prob.gamma)

    def deviation(self, prob: SubsonicProblem, other=None):
        other = other or prob.background_state()
        return correction_norm(prob, self, other)


def _seminorm(f):
    """Grid max of values and first and second radial differences."""
    f = f.reshape(f.shape[0], -1)
    out = np.abs(f).max()
    if f.shape[0] > 1:
        out += np.abs(np.diff(f, axis=0)).max()
    if f.shape[0] > 2:
        out += np.abs(np.diff(f, 2, axis=0)).max()
    return float(out)


def correction_norm(prob: SubsonicProblem, a: SubsonicState, b: SubsonicState):
    br = prob.branch
    cscale = float(np.sqrt(br.c2(prob.r0)))
    return (_seminorm((a.ph - b.ph) / br.p(prob.r0)) + _seminorm((a.E - b.E) / br.E)
            + _seminorm((a.A - b.A) / br.A) + _seminorm((a.V - b.V) / cscale))


@dataclass
class SubsonicBCs:
    """Entry pressure p0 and exit E1, A1, V1 on the sphere grid."""

    p0: np.ndarray
    E1: np.ndarray
    A1: np.ndarray
    V1: np.ndarray
    eps: float = 0.0

    @property
    def s1(self):
        return np.log(self.A1)

    @classmethod
    def background(cls, prob: SubsonicProblem):
        Na = prob.grid.sphere.size
        br = prob.branch
        return cls(np.full(Na, float(br.p(prob.r0))), np.full(Na, br.E), np.full(Na, br.A),
                   np.zeros((Na, 3)), 0.0)

    @classmethod
    def from_perturbations(cls, prob: SubsonicProblem, perturb, eps_max=0.05):
        """perturb: {field: [(n, m, amplitude), ...]} with field in p0, E1, s1, u1, u1curl.

        Amplitudes are relative to the background value (sound speed for u1)
        and multiply sqrt(4 pi) Y_nm, so unit amplitude of Y_00 is a unit shift.
        """
        s = prob.grid.sphere
        bcs = cls.background(prob)
        br = prob.branch
        c1 = float(np.sqrt(br.c2(prob.r1)))
        norm = np.sqrt(4 * np.pi)
        for key, items in perturb.items():
            coef = np.zeros(s.ncoef)
            for n, m, amp in items:
                n, m = int(n), int(m)
                if not (0 <= n <= s.L and -n <= m <= n):
                    raise ConfigurationError(f"perturbation ({n},{m}) outside degree {s.L}")
                coef[n * n + n + m] += norm * float(amp)
            shape = s.synthesize(coef)
            if key == "p0":
                bcs.p0 = bcs.p0 * (1 + shape)
            elif key == "E1":
                bcs.E1 = bcs.E1 * (1 + shape)
            elif key == "s1":
                bcs.A1 = bcs.A1 * np.exp(shape)
            elif key == "u1":
                bcs.V1 = bcs.V1 + c1 * s.grad(shape)
            elif key == "u1curl":
                bcs.V1 = bcs.V1 + c1 * s.rotgrad(shape)
            else:
                raise ConfigurationError(f"unknown perturbation field {key!r}")
        bcs.eps = boundary_eps(prob, bcs)
        if bcs.eps > eps_max:
            raise ConfigurationError(f"perturbation size {bcs.eps:.3g} exceeds {eps_max}")
        return bcs


def boundary_eps(prob: SubsonicProblem, bcs: SubsonicBCs):
    """Size of the boundary data deviation from the background."""
    br = prob.branch
    pb0 = float(br.p(prob.r0))
    c1 = float(np.sqrt(br.c2(prob.r1)))
    return float(max(np.abs(bcs.p0 - pb0).max() / pb0, np.abs(bcs.E1 - br.E).max() / br.E,
                     np.abs(bcs.A1 - br.A).max() / br.A, np.abs(bcs.V1).max() / c1))


# ---------------------------------------------------------------------------
# Higher-order remainders


def higher_order_F(j: J.FlowJet, prob: SubsonicProblem, route="identity"):
    """Interior remainder (F1 + F2)/c_b^2 of the pressure equation.

    route: "identity" evaluates both parts through the nonlinear operators,
    "transcribed" through the term-by-term formulas.
    """
    if route == "identity":
        F1 = J.F1_identity(j, prob.jb)
        F2 = J.F2_identity(j, prob.jb, prob.branch)
    elif route == "transcribed":
        F1 = J.F1_transcribed(j, prob.grid.sphere.theta)
        F2 = J.F2_transcribed(j, prob.branch)
    else:
        raise ConfigurationError(f"unknown route {route!r}")
    return (F1 + F2) / prob.cb2


def iteration_F(j: J.FlowJet, prob: SubsonicProblem):
    """L(U_hat) - [gamma p Phi(U) - gamma p_b Phi(U_b)] / c_b^2, the form used by the mapping."""
    g = prob.gamma
    return (J.linear_operator(j, prob.branch)
            - (g * j.p * J.pressure_residual(j) - g * prob.pb * prob.phi_b) / prob.cb2)


def higher_order_G(j: J.FlowJet, prob: SubsonicProblem, route="identity"):
    """Robin datum on the exit sphere from the exit level of the jet."""
    je = J.slice_jet(j, -1)
    if route == "identity":
        return J.exit_data_identity(je, prob.jb_exit, prob.g1)
    if route == "transcribed":
        G1, G2, G3 = J.exit_terms_transcribed(je, prob.branch, prob.grid.sphere.theta)
        return G1 + G2 + G3
    raise ConfigurationError(f"unknown route {route!r}")


# ---------------------------------------------------------------------------
# Iteration


@dataclass
class IterationOptions:
    tol: float = 1e-10
    max_iter: int = 100
    substeps: int = None
    trust: bool = True


@dataclass
class IterationReport:
    corrections: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    contraction_ratio: float = float("nan")
    residual: dict = field(default_factory=dict)
    background_residual: dict = field(default_factory=dict)
    eps: float = 0.0
    trust_K: float = float("nan")
    deviation: float = 0.0
    message: str = ""
    runtime: float = 0.0
    extra: dict = field(default_factory=dict)

    def ratios(self):
        c = self.corrections
        return [c[k + 1] / c[k] for k in range(len(c) - 1) if c[k] > 0]

    def as_dict(self):
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["ratios"] = self.ratios()
        return d

    def to_json(self, path=None):
        s = json.dumps(self.as_dict(), indent=2, default=float)
        if path:
            with open(path, "w") as fh:
                fh.write(s + "\n")
        return s


def contraction(corrections, window=5, lag=1):
    """Largest per-iteration ratio over the last `window` lags of `lag` steps."""
    c = corrections
    r = [(c[k + lag] / c[k]) ** (1.0 / lag) for k in range(len(c) - lag) if c[k] > 0]
    return float(max(r[-window:])) if r else 0.0


def subsonic_step(state: SubsonicState, bcs: SubsonicBCs, prob: SubsonicProblem, substeps=None):
    """One application of the fixed-point mapping."""
    j = state.jet(prob)
    x = prob.calc.x
    u0 = j.u0
    vel = TransportVelocity(prob.grid, u0, state.V / (x * u0)[..., None])
    # deviations are transported so the constant background carries no roundoff
    br = prob.branch
    dEA = solve_transport(vel, 0.0, 0.0, np.stack([bcs.E1 - br.E, bcs.A1 - br.A], -1),
                          "outer", substeps)
    E, A = br.E + dEA[..., 0], br.A + dEA[..., 1]
    rhs = (iteration_F(j, prob) - prob.src_E * (E - prob.branch.E)
           - prob.src_A * (A - prob.branch.A))
    D = bcs.p0 - prob.pb[0]
    G = higher_order_G(j, prob)
    ph = prob.setup.solve(rhs, D, G)
    p = prob.pb + ph
    rho = (p / A) ** (1.0 / prob.gamma)
    n = prob.calc.normal
    gp = prob.calc.grad(ph)
    gT = gp - np.sum(gp * n, -1)[..., None] * n
    f = -gT / rho[..., None] - (j.V2 / x)[..., None] * n
    V = solve_transport(vel, (u0 / x)[..., None], f, bcs.V1, "outer", substeps)
    V -= np.sum(V * n, -1)[..., None] * n
    return SubsonicState(ph, E, A, V)


def iterate_subsonic(bcs: SubsonicBCs, prob: SubsonicProblem, opts: IterationOptions = None,
                     initial: SubsonicState = None):
    opts = opts or IterationOptions()
    t0 = time.perf_counter()
    rep = IterationReport(eps=bcs.eps)
    Ub = prob.background_state()
    state = initial or Ub
    K = None
    for k in range(opts.max_iter):
        try:
            new = subsonic_step(state, bcs, prob, opts.substeps)
        except TrustRegionExceeded as exc:
            rep.message = f"trust region exceeded: {exc}"
            break
        dU = correction_norm(prob, new, state)
        rep.corrections.append(dU)
        rep.iterations = k + 1
        dev = correction_norm(prob, new, Ub)
        if opts.trust and bcs.eps > 0:
            if K is None:
                K = max(2 * dev / bcs.eps, 1.0)
                rep.trust_K = K
            elif dev > K * bcs.eps:
                rep.message = f"trust region exceeded: deviation {dev:.3e} > K eps {K * bcs.eps:.3e}"
                state = new
                break
        state = new
        if dU < opts.tol:
            rep.converged = True
            rep.message = "converged"
            break
    else:
        rep.message = f"no convergence in {opts.max_iter} iterations"
    rep.contraction_ratio = contraction(rep.corrections)
    rep.deviation = correction_norm(prob, state, Ub)
    fieldU = state.to_field(prob)
    rep.residual = residual_summary(euler_residual(fieldU, prob.calc))
    rep.background_residual = residual_summary(euler_residual(prob.background_field(), prob.calc))
    bc = boundary_mismatch(state, bcs, prob)
    rep.extra["boundary_mismatch"] = bc
    rep.runtime = time.perf_counter() - t0
    return fieldU, rep, state


def boundary_mismatch(state: SubsonicState, bcs: SubsonicBCs, prob: SubsonicProblem):
    return {"p0": float(np.abs(prob.pb[0] + state.ph[0] - bcs.p0).max()),
            "E1": float(np.abs(state.E[-1] - bcs.E1).max()),
            "A1": float(np.abs(state.A[-1] - bcs.A1).max()),
            "V1": float(np.abs(state.V[-1] - bcs.V1).max())}
