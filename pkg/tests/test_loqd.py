import numpy as np
import pytest
from scipy.optimize import brentq

from trtblock.diagnostics import energy_balance
from trtblock.grid import FrequencyGroups, SpatialMesh, build_quadrature
from trtblock.loqd import AndersonMixer, LowOrderSolver, LowOrderState
from trtblock.physics import A_RAD, C_LIGHT, ConstantOpacity, MaterialModel
from trtblock.transport import (
    SIDES, BoundaryCondition, isotropic_boundary_factor, isotropic_closure,
)

from conftest import equilibrium_problem, make_problem


def _grey_setup(n, kinds, opacity=3.0, cv=0.01):
    mesh = SpatialMesh(n, n, 2.0, 2.0)
    quad = build_quadrature(2, 3)
    groups = FrequencyGroups(np.array([1.0, 2.0]))          # one group, full spectrum
    material = MaterialModel(cv=cv, opacity=ConstantOpacity(opacity))
    bcs = {s: BoundaryCondition(*kinds.get(s, ("vacuum",))) for s in SIDES}
    lo = LowOrderSolver(mesh, groups, material, bcs, quad)
    return mesh, quad, groups, material, bcs, lo


def test_equilibrium_is_stationary():
    p = equilibrium_problem(T=0.3)
    lo = p.low_order
    prev = lo.initial_state(0.3)
    st, _ = lo.solve_step(prev, p.isotropic_closure, 0.02)
    np.testing.assert_allclose(st.T, prev.T, rtol=1e-13)
    np.testing.assert_allclose(st.Eg, prev.Eg, rtol=1e-13)
    np.testing.assert_allclose(st.E, prev.E, rtol=1e-13)
    assert np.max(np.abs(st.Fg)) <= 1e-12 * np.max(prev.E) * C_LIGHT


def test_uniform_field_without_opacity_is_unchanged():
    p = equilibrium_problem(T=0.3)
    lo = p.low_order
    prev = lo.initial_state(0.3)
    zero = np.zeros_like(prev.Eg)
    Eg, Fg, _ = lo.mg_step(prev, p.isotropic_closure, prev.T, 0.02, kappa=zero, B=zero)
    np.testing.assert_allclose(Eg, prev.Eg, rtol=1e-14)
    assert np.max(np.abs(Fg)) <= 1e-15 * C_LIGHT * np.max(prev.Eg)


def test_single_cell_step_matches_two_unknown_system():
    mesh, quad, groups, material, bcs, lo = _grey_setup(1, {})
    T = np.array([0.5])
    kappa, B = material.group_data(T, groups)
    E0 = np.array([[0.02]])
    prev = LowOrderState(Eg=E0, Fg=np.zeros((1, 4)), E=E0[0], F=np.zeros(4), T=T)
    closure = isotropic_closure(mesh, quad, groups, bcs)
    dt = 0.01
    Eg, Fg, _ = lo.mg_step(prev, closure, T, dt, kappa=kappa, B=B)

    # unknowns: E and the outward normal flux F shared by the four faces
    C = isotropic_boundary_factor(quad, "left")
    f, h, k = 1 / 3, mesh.dx / 2, kappa[0, 0]
    A = np.array([[1 / dt + C_LIGHT * k, 2 / mesh.dx + 2 / mesh.dy],
                  [-C_LIGHT * f, h * (1 / (C_LIGHT * dt) + k) + f / C]])
    rhs = np.array([4 * np.pi * k * B[0, 0] + E0[0, 0] / dt, 0.0])
    E, F = np.linalg.solve(A, rhs)
    assert Eg[0, 0] == pytest.approx(E, rel=1e-13)
    outward = np.r_[-Fg[0, lo.ops.side_faces["left"]], Fg[0, lo.ops.side_faces["right"]],
                    -Fg[0, lo.ops.side_faces["bottom"]], Fg[0, lo.ops.side_faces["top"]]]
    np.testing.assert_allclose(outward, F, rtol=1e-13)


def _p1_reference(mesh, kappa, B, E_prev, F_prev, dt, C, K_left):
    """Independent dense P1 step: cell energies then x- and y-face fluxes."""
    nx, ny = mesh.shape
    dx, dy = mesh.dx, mesh.dy
    f = 1.0 / 3.0
    N = nx * ny
    cell = lambda i, j: i * ny + j
    xf = lambda i, j: N + i * ny + j                      # i = 0..nx
    yf = lambda i, j: N + (nx + 1) * ny + i * (ny + 1) + j  # j = 0..ny
    n = N + (nx + 1) * ny + nx * (ny + 1)
    A = np.zeros((n, n))
    b = np.zeros(n)
    a = lambda kf: 1 / (C_LIGHT * dt) + kf
    for i in range(nx):
        for j in range(ny):
            r = cell(i, j)
            A[r, r] = 1 / dt + C_LIGHT * kappa[i, j]
            A[r, xf(i + 1, j)] += 1 / dx
            A[r, xf(i, j)] -= 1 / dx
            A[r, yf(i, j + 1)] += 1 / dy
            A[r, yf(i, j)] -= 1 / dy
            b[r] = 4 * np.pi * kappa[i, j] * B[i, j] + E_prev[i, j] / dt
    for i in range(nx + 1):
        for j in range(ny):
            r = xf(i, j)
            b[r] = F_prev[r - N] * (dx if 0 < i < nx else dx / 2) / (C_LIGHT * dt)
            if 0 < i < nx:
                A[r, r] = dx * a(0.5 * (kappa[i - 1, j] + kappa[i, j]))
                A[r, cell(i, j)] += C_LIGHT * f
                A[r, cell(i - 1, j)] -= C_LIGHT * f
            elif i == 0:      # F_n = -F_x = c C E_b + K
                A[r, r] = dx / 2 * a(kappa[0, j]) + f / C
                A[r, cell(0, j)] += C_LIGHT * f
                b[r] -= f * K_left / C
            else:             # F_n = F_x = c C E_b
                A[r, r] = dx / 2 * a(kappa[-1, j]) + f / C
                A[r, cell(nx - 1, j)] -= C_LIGHT * f
    for i in range(nx):
        for j in range(ny + 1):
            r = yf(i, j)
            b[r] = F_prev[r - N] * (dy if 0 < j < ny else dy / 2) / (C_LIGHT * dt)
            if 0 < j < ny:
                A[r, r] = dy * a(0.5 * (kappa[i, j - 1] + kappa[i, j]))
                A[r, cell(i, j)] += C_LIGHT * f
                A[r, cell(i, j - 1)] -= C_LIGHT * f
            elif j == 0:
                A[r, r] = dy / 2 * a(kappa[i, 0]) + f / C
                A[r, cell(i, 0)] += C_LIGHT * f
            else:
                A[r, r] = dy / 2 * a(kappa[i, -1]) + f / C
                A[r, cell(i, ny - 1)] -= C_LIGHT * f
    x = np.linalg.solve(A, b)
    return x[:N], x[N:]


def test_isotropic_single_group_step_matches_independent_p1(rng):
    mesh, quad, groups, material, bcs, lo = _grey_setup(
        4, {"left": ("blackbody", 1.0)}, opacity=2.0)
    kappa = rng.uniform(0.5, 5.0, (1, 16))
    T = rng.uniform(0.1, 1.0, 16)
    _, B = material.group_data(T, groups)
    E_prev = rng.uniform(0.001, 0.01, (1, 16))
    F_prev = rng.uniform(-0.05, 0.05, (1, lo.ops.nfaces))
    prev = LowOrderState(Eg=E_prev, Fg=F_prev, E=E_prev[0], F=F_prev[0], T=T)
    closure = isotropic_closure(mesh, quad, groups, bcs)
    dt = 0.02
    Eg, Fg, _ = lo.mg_step(prev, closure, T, dt, kappa=kappa, B=B)

    C = isotropic_boundary_factor(quad, "left")
    K_left = closure.boundary["left"].K[0, 0]
    E_ref, F_ref = _p1_reference(mesh, kappa[0].reshape(4, 4), B[0].reshape(4, 4),
                                 E_prev[0].reshape(4, 4), F_prev[0], dt, C, K_left)
    np.testing.assert_allclose(Eg[0], E_ref, rtol=1e-10)
    np.testing.assert_allclose(Fg[0], F_ref, rtol=1e-10, atol=1e-10 * np.abs(F_ref).max())


def _grey_inputs(lo, Eg, kappa, Fg):
    G = Eg.shape[0]
    mesh = lo.mesh
    quad = build_quadrature(1, 1)
    closure = isotropic_closure(mesh, quad, lo.groups, lo.boundaries)
    B = np.ones_like(Eg)
    return lo.grey_coefficients(Eg, Fg, kappa, B, closure, {})


def _reflective_solver(G):
    mesh = SpatialMesh(2, 2, 1.0, 1.0)
    groups = FrequencyGroups.logarithmic(G)
    bcs = {s: BoundaryCondition("reflective") for s in SIDES}
    return LowOrderSolver(mesh, groups, MaterialModel(1.0, ConstantOpacity(1.0)), bcs)


def test_energy_weighted_opacity_two_groups(rng):
    lo = _reflective_solver(2)
    Eg = np.array([[1.0] * 4, [3.0] * 4])
    kappa = np.array([[2.0] * 4, [4.0] * 4])
    Fg = rng.uniform(-1, 1, (2, lo.ops.nfaces))
    co = _grey_inputs(lo, Eg, kappa, Fg)
    np.testing.assert_allclose(co.kappa_E, 3.5, rtol=1e-15)


def test_identical_groups_have_no_drift(rng):
    lo = _reflective_solver(3)
    E = rng.uniform(1, 2, 4)
    Eg = np.tile(E / 3, (3, 1))
    kappa = np.full((3, 4), 7.0)
    Fg = np.tile(rng.uniform(-1, 1, lo.ops.nfaces), (3, 1))
    co = _grey_inputs(lo, Eg, kappa, Fg)
    np.testing.assert_allclose(co.kappa_E, 7.0, rtol=1e-15)
    np.testing.assert_allclose(co.kappa_F, 7.0, rtol=1e-15)
    assert np.all(np.abs(co.eta) <= 1e-14 * 7.0 * np.abs(Fg).sum(axis=0).max() / E.min())


def test_single_group_reduces_to_group_coefficients(rng):
    lo = _reflective_solver(1)
    Eg = rng.uniform(1, 2, (1, 4))
    kappa = rng.uniform(1, 9, (1, 4))
    Fg = rng.uniform(-1, 1, (1, lo.ops.nfaces))
    co = _grey_inputs(lo, Eg, kappa, Fg)
    np.testing.assert_allclose(co.kappa_E, kappa[0], rtol=1e-15)
    np.testing.assert_allclose(co.fxx, 1 / 3, rtol=1e-15)
    np.testing.assert_allclose(co.eta, 0.0, atol=1e-14)


def test_zero_dimensional_relaxation_matches_scalar_oracle():
    mesh, quad, groups, material, bcs, lo = _grey_setup(
        1, {s: ("reflective",) for s in SIDES}, opacity=4.0, cv=0.005)
    T0, E0 = 0.2, 3.0 * A_RAD * 0.5**4
    prev = LowOrderState(Eg=np.array([[E0]]), Fg=np.zeros((1, 4)), E=np.array([E0]),
                         F=np.zeros(4), T=np.array([T0]))
    dt = 0.01
    st, _ = lo.solve_step(prev, isotropic_closure(mesh, quad, groups, bcs), dt, tol=1e-15)

    # backward Euler of dE/dt = c k (a T^4 - E), cv dT/dt = c k (E - a T^4)
    ck, cv = C_LIGHT * 4.0, 0.005
    E_of = lambda T: (E0 / dt + ck * A_RAD * T**4) / (1 / dt + ck)
    T = brentq(lambda T: cv * (T - T0) / dt - ck * (E_of(T) - A_RAD * T**4), T0, 0.5,
               xtol=1e-16, rtol=1e-15)
    assert st.T[0] == pytest.approx(T, rel=1e-10)
    assert st.E[0] == pytest.approx(E_of(T), rel=1e-10)


def test_step_conserves_energy_and_matches_group_sum():
    p = make_problem(n=5, groups=5)
    lo = p.low_order
    prev = lo.initial_state(1e-3)
    st, _ = lo.solve_step(prev, p.isotropic_closure, 0.02, tol=1e-14)
    r, scale = energy_balance(p, prev, st, 0.02)
    assert abs(r) <= 1e-10 * scale
    np.testing.assert_allclose(st.E, st.Eg.sum(axis=0), rtol=1e-10)
    np.testing.assert_allclose(st.F, st.Fg.sum(axis=0), rtol=0, atol=1e-10 * np.abs(st.F).max())
    assert np.all(st.E > 0) and np.all(st.T > 0)


def test_drift_mean_choice_does_not_change_the_solution():
    # warm start: the Rosseland variant is not positivity-safe on cold fronts
    a = make_problem(n=4, groups=4, T0=0.3)
    b = make_problem(n=4, groups=4, T0=0.3, drift_mean="rosseland")
    prev = a.low_order.initial_state(0.3)
    sa, _ = a.low_order.solve_step(prev, a.isotropic_closure, 0.02, tol=1e-14)
    sb, _ = b.low_order.solve_step(prev, b.isotropic_closure, 0.02, tol=1e-14)
    np.testing.assert_allclose(sb.E, sa.E, rtol=1e-10)
    np.testing.assert_allclose(sb.T, sa.T, rtol=1e-10)


def test_unknown_drift_mean_rejected():
    with pytest.raises(ValueError):
        make_problem(drift_mean="planck").low_order


def test_anderson_mixing_solves_linear_fixed_point(rng):
    n = 4
    A = rng.uniform(-1, 1, (n, n))
    A *= 0.9 / np.abs(np.linalg.eigvals(A)).max()
    b = rng.uniform(size=n)
    x_star = np.linalg.solve(np.eye(n) - A, b)
    mixer = AndersonMixer(n + 1)
    x = np.zeros(n)
    for _ in range(n + 3):
        x = mixer.update(x, A @ x + b)
    np.testing.assert_allclose(x, x_star, rtol=1e-10)
    assert AndersonMixer(0).update(x, 2 * x) is not None
