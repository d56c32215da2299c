import numpy as np
import pytest
import sympy as sp

from cvsheet.errors import FrontTooLargeForSolver, IncompatibleSources
from cvsheet.evolution import evaluate_rhs, propagation_check
from cvsheet.geometry import Front, build_geometry
from cvsheet.pressure import (
    PressureSources,
    PressureTolerances,
    assemble_interior_source,
    assemble_jump_source,
    build_sources,
    compatibility_defect,
    solve_pressure,
)
from cvsheet.spectral import (
    Grid,
    LayerField,
    TangentialSpectrum,
    VectorLayerField,
    forward_tangential,
    inverse_tangential,
    max_abs,
    to_physical,
    to_physical_2d,
)

from conftest import random_state, sample_grid
from oracles import manufactured_pressure_case, manufactured_pressure_error


def vector_field(grid, comps):
    return VectorLayerField(grid, np.stack([forward_tangential(c, grid).data for c in comps]))


def flat(K, M=9):
    return build_geometry(Front.flat(K), Grid(K, M))


class TestInteriorSource:
    """Pointwise interior source against hand-derived values."""

    def test_constant_fields(self):
        geom = flat(3)
        g = geom.plus.grid
        x1, _, _ = sample_grid(g)
        c = vector_field(g, [0 * x1 + 0.3, 0 * x1 - 0.2, 0 * x1 + 0.1])
        assert max_abs(assemble_interior_source(c, c, geom.plus).data) < 1e-14

    def test_crossed_sines(self):
        geom = flat(3)
        g = geom.plus.grid
        x1, x2, _ = sample_grid(g)
        u = vector_field(g, [np.sin(2 * np.pi * x2), np.sin(2 * np.pi * x1), 0 * x1])
        b = vector_field(g, [0 * x1] * 3)
        JF = inverse_tangential(assemble_interior_source(u, b, geom.plus))
        np.testing.assert_allclose(JF, 2 * (2 * np.pi) ** 2 * np.cos(2 * np.pi * x2) * np.cos(2 * np.pi * x1),
                                   atol=1e-11)

    def test_shear_flow(self):
        geom = flat(3, 17)
        g = geom.plus.grid
        x1, _, x3 = sample_grid(g)
        u = vector_field(g, [x3**3 - x3, 0 * x1, 0 * x1])
        assert max_abs(assemble_interior_source(u, u, geom.plus).data) < 1e-12


class TestSourceDerivation:
    """Symbolic check that the implemented source equals −∇·W for divergence-free fields."""

    def test_symbolic_identity(self):
        x1, x2, x3 = X = sp.symbols("x1 x2 x3")
        psi = sp.Rational(1, 5) * (1 - x3**2) * (sp.cos(2 * sp.pi * x1) + sp.sin(2 * sp.pi * (x1 + x2)) / 2)
        psi = psi * (1 + x3 / 3)
        psit = (1 - x3**2) * sp.cos(2 * sp.pi * x2) / 7

        def curl(A):
            return [sp.diff(A[2], x2) - sp.diff(A[1], x3), sp.diff(A[0], x3) - sp.diff(A[2], x1),
                    sp.diff(A[1], x1) - sp.diff(A[0], x2)]

        u = curl([sp.sin(2 * sp.pi * x2) * x3**2, sp.cos(2 * sp.pi * (x1 - x2)) * (1 + x3), sp.sin(2 * sp.pi * x1) * x3])
        u = [u[0] + sp.Rational(1, 2), u[1] - sp.Rational(1, 3), u[2]]
        b = curl([sp.cos(2 * sp.pi * x1) * x3, x3**3 * sp.sin(2 * sp.pi * x2), sp.cos(2 * sp.pi * (x1 + x2))])
        J = 1 + sp.diff(psi, x3)
        d = lambda f, k: sp.diff(f, X[k])
        T = lambda i, k: u[i] * u[k] - b[i] * b[k]
        W = [-sum(u[k] * d(u[i], k) for k in range(3)) / J + sum(b[k] * d(b[i], k) for k in range(3)) / J
             + d(psit * u[i] / J, 2) + sum(T(i, k) * d(J, k) for k in range(3)) / J**2 for i in range(2)]
        W.append(-sum(u[k] * d(u[2], k) for k in range(3)) / J + sum(b[k] * d(b[2], k) for k in range(3)) / J
                 - sum(d(psit * u[i] / J, i) for i in range(2))
                 - sum(T(i, k) * d(d(psi, i), k) for i in range(2) for k in range(3)) / J**2)
        div_W = sum(d(W[k], k) for k in range(3))

        # the implemented grouping, written out symbolically
        src = sum(d(u[l], k) * d(u[k], l) - d(b[l], k) * d(b[k], l) for k in range(3) for l in range(3)) / J
        src -= sum(2 * d(J, k) / J**2 * (u[i] * d(u[k], i) - b[i] * d(b[k], i)) for i in range(2) for k in range(3))
        src += sum(2 * d(J, i) * d(J, k) / J**3 * T(i, k) for i in range(2) for k in range(3))
        src += sum(2 * d(d(psi, i), j) / J**2 * (u[i] * d(u[j], 2) - b[i] * d(b[j], 2))
                   for i in range(2) for j in range(2))
        src -= sum(2 * d(J, i) / J**2 * (u[i] * d(u[j], j) - b[i] * d(b[j], j)) for i in range(2) for j in range(2))
        src -= 2 * d(J, 2) / J**3 * sum(T(i, k) * d(d(psi, i), k) for i in range(2) for k in range(3))

        rng = np.random.default_rng(3)
        pts = np.column_stack([rng.random(8), rng.random(8), rng.uniform(-1, 1, 8)])
        lhs = sp.lambdify(X, src, "numpy")(*pts.T)
        rhs = sp.lambdify(X, -div_W, "numpy")(*pts.T)
        np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10)

    def test_numeric_identity_on_states(self, rng):
        for _ in range(3):
            state = random_state(rng, K=8, M=17)
            rhs, geom = evaluate_rhs(state)
            checks = propagation_check(state, rhs, geom)
            assert checks["div_w_plus_source_plus"] < 1e-8
            assert checks["div_w_plus_source_minus"] < 1e-8


class TestJumpSource:
    """Interface source from traces and the front."""

    def test_flat_static(self, rng):
        K = 4
        t = rng.standard_normal((3, 9, 9)) + 0j
        G = assemble_jump_source(t, t * 0.5, t, t, Front.flat(K))
        assert np.max(np.abs(G.coeffs)) == 0.0

    def test_cosine_front_uniform_flow(self):
        K, eps, Up, Um = 4, 0.01, 0.7, -0.3
        n = 2 * K + 1
        f = np.zeros((n, n), complex)
        f[1, 0] = f[-1, 0] = eps / 2
        trace = lambda U: np.stack([np.full((n, n), 0j), np.zeros((n, n)), np.zeros((n, n))])
        up, um = trace(Up), trace(Um)
        up[0, 0, 0], um[0, 0, 0] = Up, Um
        zero = np.zeros((3, n, n), complex)
        G = assemble_jump_source(up, um, zero, zero, Front(TangentialSpectrum(f), TangentialSpectrum.zeros(K)))
        x = np.arange(n) / n
        expect = eps * (2 * np.pi) ** 2 * np.cos(2 * np.pi * x)[:, None] * (Up**2 - Um**2) * np.ones(n)
        np.testing.assert_allclose(to_physical_2d(G.coeffs), expect, atol=1e-12)

    def test_equal_sides(self, rng):
        state = random_state(rng, K=4, M=9)
        t = state.u_plus.data[..., 0]
        G = assemble_jump_source(t, t, t, t, state.front)
        assert np.max(np.abs(G.coeffs)) < 1e-15

    def test_variants(self, rng):
        state = random_state(rng, K=4, M=9)
        t = state.u_plus.data[..., 0]
        z = np.zeros_like(t)
        a = assemble_jump_source(t, z, z, z, state.front, "dt_form")
        b = assemble_jump_source(t, z, z, z, state.front, "di_form")
        assert np.max(np.abs(a.coeffs - b.coeffs)) > 1e-6
        with pytest.raises(ValueError):
            assemble_jump_source(t, z, z, z, state.front, "other")


class TestCompatibility:
    """Solvability condition of the interface problem."""

    def test_unit_source(self):
        K, M = 3, 9
        g = Grid(K, M)
        src = PressureSources(LayerField.constant(g, 1.0), LayerField.constant(Grid(K, M, "minus"), 1.0),
                              TangentialSpectrum.zeros(K), 0.0)
        assert abs(compatibility_defect(src) - 2.0) < 1e-14

    def test_states_are_compatible(self, rng):
        for _ in range(3):
            state = random_state(rng, K=8, M=17)
            geom = build_geometry(state.front, state.u_plus.grid)
            src = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom)
            assert abs(src.compat_defect) <= 1e-8

    def test_incompatible_sources_rejected(self):
        K, M = 3, 9
        g = Grid(K, M)
        src = PressureSources(LayerField.constant(g, 1.0), LayerField.constant(Grid(K, M, "minus"), 1.0),
                              TangentialSpectrum.zeros(K), 2.0)
        with pytest.raises(IncompatibleSources):
            solve_pressure(src, flat(K, M))


def single_mode_source(K, M, amp=1.0):
    gp, gm = Grid(K, M, "plus"), Grid(K, M, "minus")
    x1, _, _ = sample_grid(gp)
    JFp = forward_tangential(amp * np.cos(2 * np.pi * x1), gp)
    return PressureSources(JFp, LayerField.zeros(gm), TangentialSpectrum.zeros(K), 0.0)


class TestSolver:
    """Flat fixed point, boundary rows, normalization and uniqueness."""

    def test_zero_sources(self):
        K, M = 3, 9
        src = PressureSources(LayerField.zeros(Grid(K, M)), LayerField.zeros(Grid(K, M, "minus")),
                              TangentialSpectrum.zeros(K), 0.0)
        sol = solve_pressure(src, flat(K, M))
        assert np.max(np.abs(sol.Q_plus.data)) == 0.0 and np.max(np.abs(sol.Q_minus.data)) == 0.0

    def test_flat_single_mode_closed_form(self):
        # −Q″ + κ²Q = 1 on (0, 1), −Q″ + κ²Q = 0 on (−1, 0), Q and Q′ continuous, Q′(±1) = 0
        K, M = 3, 17
        sol = solve_pressure(single_mode_source(K, M), flat(K, M))
        kap = 2 * np.pi
        A = -1 / (2 * kap**2 * np.cosh(kap))
        xp, xm = sol.Q_plus.grid.x3, sol.Q_minus.grid.x3
        np.testing.assert_allclose(2 * sol.Q_plus.data[1, 0].real, 1 / kap**2 + A * np.cosh(kap * (1 - xp)), atol=1e-12)
        np.testing.assert_allclose(2 * sol.Q_minus.data[1, 0].real, -A * np.cosh(kap * (1 + xm)), atol=1e-12)

    def test_manufactured_solution(self):
        err, sol = manufactured_pressure_error(manufactured_pressure_case(), 8, 33)
        assert err < 1e-9
        gp = sol.Q_plus.grid
        jump = sol.Q_plus.data[..., gp.boundary_node("interface")] - sol.Q_minus.data[..., -1]
        assert np.max(np.abs(jump)) < 1e-9
        assert abs(sol.mean) < 1e-10
        assert sol.residual < 1e-6

    def test_wall_rows_and_uniqueness(self, rng):
        state = random_state(rng, K=8, M=17, front_size=0.1)
        geom = build_geometry(state.front, state.u_plus.grid)
        src = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom)
        a = solve_pressure(src, geom)
        from cvsheet.spectral import d_normal

        assert max_abs(d_normal(a.Q_plus.data, a.Q_plus.grid)[..., -1:]) < 1e-9
        assert max_abs(d_normal(a.Q_minus.data, a.Q_minus.grid)[..., :1]) < 1e-9
        seed = tuple(rng.standard_normal(a.Q_plus.data.shape) * 1e-3 + 0j for _ in range(2))
        b = solve_pressure(src, geom, seed=seed)
        assert max_abs(a.Q_plus.data - b.Q_plus.data) < 1e-9
        assert max_abs(a.Q_minus.data - b.Q_minus.data) < 1e-9

    def test_linearity(self, rng):
        state = random_state(rng, K=6, M=17, front_size=0.05, band=1)
        geom = build_geometry(state.front, state.u_plus.grid)
        s1 = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom)
        s2 = PressureSources(s1.JF_minus.__class__(s1.JF_plus.grid, np.roll(s1.JF_plus.data, 1, axis=0)),
                             LayerField.zeros(s1.JF_minus.grid), TangentialSpectrum.zeros(6), 0.0)
        s2.JF_plus.data[0, 0] = 0.0
        combo = PressureSources(s1.JF_plus * 2.0 + s2.JF_plus * -0.5, s1.JF_minus * 2.0, s1.G * 2.0, 0.0)
        q1, q2, qc = (solve_pressure(s, geom) for s in (s1, s2, combo))
        assert max_abs(qc.Q_plus.data - 2 * q1.Q_plus.data + 0.5 * q2.Q_plus.data) < 1e-8

    def test_no_convergence(self, rng):
        state = random_state(rng, K=8, M=17, front_size=0.1)
        geom = build_geometry(state.front, state.u_plus.grid)
        src = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom)
        with pytest.raises(FrontTooLargeForSolver):
            solve_pressure(src, geom, PressureTolerances(max_iter=2))

    def test_iteration_shrinks_with_front(self, rng):
        state = random_state(rng, K=8, M=17, front_size=0.1)
        sweeps = []
        for scale in (0.3, 0.1):
            front = Front(state.front.f * scale, state.front.fdot)
            geom = build_geometry(front, state.u_plus.grid)
            src = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom)
            sweeps.append(solve_pressure(src, geom, PressureTolerances(anderson_depth=0)).iterations)
        assert sweeps[1] < sweeps[0]
