import numpy as np
import pytest

from euler_shell.gas_core import ShellGrid
from euler_shell.transport import (StagnationError, TransportVelocity, pullback_initial,
                                   solve_transport, trace_characteristics)

RB, R1 = 1.0, 1.5


def _grid(n=8, L=6):
    return ShellGrid(RB, R1, n, L)


def _rotation(grid, kappa):
    """Solid rotation about z with angular rate kappa(y) per unit radius."""
    s = grid.sphere
    zx = np.cross([0.0, 0.0, 1.0], s.normal)
    rate = kappa(grid.r)[:, None, None] * zx[None]
    return TransportVelocity(grid, np.ones(grid.shape), rate)


def _field(s, rng):
    c = rng.standard_normal(s.ncoef)
    return c, s.synthesize(c)


def test_static_transport_is_constant_along_radii(rng):
    g = _grid()
    vel = TransportVelocity(g, np.ones(g.shape), np.zeros(g.shape + (3,)))
    _, E0 = _field(g.sphere, rng)
    E = solve_transport(vel, 0.0, 0.0, E0)
    assert np.abs(E - E0[None]).max() < 1e-13 * np.abs(E0).max() * g.radial.size


def test_damped_transport():
    g = _grid()
    vel = TransportVelocity(g, np.ones(g.shape), np.zeros(g.shape + (3,)))
    E0 = 1 + g.sphere.normal[:, 2]
    E = solve_transport(vel, 0.7, 0.0, E0)
    exact = E0[None] * np.exp(-0.7 * (g.r[:, None] - RB))
    assert np.abs(E - exact).max() <= 1e-8


def test_rotation_composes_with_back_rotation(rng):
    g = _grid()
    s = g.sphere
    vel = _rotation(g, lambda y: 0.8 + 0 * y)
    c, E0 = _field(s, rng)
    E = solve_transport(vel, 0.0, 0.0, E0)
    for k, y in enumerate(g.r):
        exact = s.evaluate(c, s.theta, s.phi - 0.8 * (y - RB))
        assert np.abs(E[k] - exact).max() <= 1e-8


def test_tracer_order_four(rng):
    g = _grid(n=4)
    s = g.sphere
    vel = _rotation(g, lambda y: 3 * y * y)
    c, E0 = _field(s, rng)
    angle = (g.r[-1] ** 3 - RB ** 3)
    exact = s.evaluate(c, s.theta, s.phi - angle)
    errs = [np.abs(solve_transport(vel, 0.0, 0.0, E0, substeps=m)[-1] - exact).max()
            for m in (1, 2, 4, 8)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.7), orders


def test_identity_map_without_tangential_velocity():
    g = _grid()
    vel = TransportVelocity(g, np.ones(g.shape), np.zeros(g.shape + (3,)))
    cm = trace_characteristics(vel)
    assert cm.displacement(g).max() < 1e-13


def test_displacement_bounded_by_tangential_speed():
    g = _grid()
    vel = _rotation(g, lambda y: 0.3 + 0 * y)
    cm = trace_characteristics(vel)
    bound = np.abs(vel.rate).max() / np.abs(vel.u_y).min() * (R1 - RB)
    assert 0 < cm.displacement(g).max() <= bound * (1 + 1e-12)


def test_pullback_identities(rng):
    g = _grid()
    vel = _rotation(g, lambda y: 0.5 + 0 * y)
    _, E0 = _field(g.sphere, rng)
    P = pullback_initial(vel, E0)
    assert np.abs(P[0] - E0).max() == 0
    const = pullback_initial(vel, np.full(g.sphere.size, 2.5))
    assert np.abs(const - 2.5).max() < 1e-12


def test_stagnation_detected():
    g = _grid()
    u = np.ones(g.shape)
    u[3, 5] = 0.0
    with pytest.raises(StagnationError):
        TransportVelocity(g, u, np.zeros(g.shape + (3,)))
