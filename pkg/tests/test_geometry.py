import numpy as np
import pytest
import sympy as sp

from cvsheet.errors import FrontTooLarge
from cvsheet.geometry import (
    Front,
    build_geometry,
    from_comatrix_unknowns,
    lift_front,
    lift_identities,
    sinc,
    sinc_d1,
    sinc_d2,
    to_comatrix_unknowns,
    transported_velocities,
)
from cvsheet.norms import random_front
from cvsheet.spectral import Grid, TangentialSpectrum, VectorLayerField, hermitian_symmetrize, to_physical

from conftest import sample_grid


def cosine_front(K, eps, mode=(1, 0)):
    n = 2 * K + 1
    c = np.zeros((n, n), complex)
    c[mode[0] % n, mode[1] % n] += eps / 2
    c[-mode[0] % n, -mode[1] % n] += eps / 2
    return TangentialSpectrum(c)


class TestSinc:
    """Closed-form profile functions, including the small-argument guard."""

    def test_against_sympy(self):
        z = sp.symbols("z")
        s = sp.sin(z) / z
        xs = np.array([1e-6, 1e-3, 0.3, 2.0, 7.5])
        for fn, expr in ((sinc, s), (sinc_d1, sp.diff(s, z)), (sinc_d2, sp.diff(s, z, 2))):
            ref = np.array([float(expr.evalf(50, subs={z: sp.Float(x, 50)})) for x in xs])
            np.testing.assert_allclose(fn(xs), ref, rtol=1e-12, atol=1e-15)

    def test_zero(self):
        assert sinc(np.array([0.0]))[0] == 1.0
        assert sinc_d1(np.array([0.0]))[0] == 0.0
        assert abs(sinc_d2(np.array([0.0]))[0] + 1 / 3) < 1e-15


class TestLift:
    """Lifting of a front into the slab."""

    def test_constant_front(self):
        g = TangentialSpectrum(np.zeros((3, 3), complex))
        g.coeffs[0, 0] = 0.7
        psi = lift_front(g, M=9)
        np.testing.assert_allclose(psi.data[0, 0].real, 0.7 * (1 - psi.grid.x3**2), atol=1e-15)

    def test_integer_symbol(self):
        psi = lift_front(cosine_front(2, 1.0), M=9)
        x = psi.grid.x3
        np.testing.assert_allclose(psi.data[1, 0].real, 0.5 * (1 - x**2) * np.sinc(x / np.pi), atol=1e-15)

    def test_scaled_symbol_reproduces_two_pi_profile(self):
        psi = lift_front(cosine_front(2, 1.0), M=9, symbol_scale=2 * np.pi)
        x = psi.grid.x3
        with np.errstate(invalid="ignore", divide="ignore"):
            prof = np.where(x == 0, 1.0, np.sin(2 * np.pi * x) / (2 * np.pi * x))
        np.testing.assert_allclose(psi.data[1, 0].real, 0.5 * (1 - x**2) * prof, atol=1e-15)

    def test_traces_and_linearity(self, rng):
        f, g = random_front(8, rng, 6), random_front(8, rng, 6)
        res = lift_identities(f * 0.05, M=33)
        assert max(res["trace_interface"], res["trace_walls"], res["slope_interface"]) < 1e-10
        lin = lift_front(f * 2.0 + g, M=17).data - 2.0 * lift_front(f, M=17).data - lift_front(g, M=17).data
        assert np.max(np.abs(lin)) < 1e-13


class TestGeometry:
    """Jacobian, comatrix and Piola identities of the straightening map."""

    def test_flat_front(self):
        geom = build_geometry(Front.flat(3), Grid(3, 9))
        assert geom.J_range == (1.0, 1.0)
        lg = geom.plus
        assert np.max(np.abs(lg.psi)) == 0.0
        N = [to_physical(n.data) for n in lg.N]
        assert np.all(N[0] == 0) and np.all(N[1] == 0) and np.allclose(N[2], 1)

    def test_against_symbolic_derivatives(self):
        eps = 0.01
        K, M = 2, 17
        geom = build_geometry(Front(cosine_front(K, eps), TangentialSpectrum.zeros(K)), Grid(K, M, "plus"))
        x1, x3 = sp.symbols("x1 x3")
        psi = eps * (1 - x3**2) * sp.sin(x3) / x3 * sp.cos(2 * sp.pi * x1)
        X1, _, X3 = sample_grid(geom.plus.grid)
        keep = X3 > 0  # the symbolic quotients are singular-looking at x₃ = 0
        for expr, coef in ((1 + sp.diff(psi, x3), geom.plus.J), (sp.diff(psi, x1), geom.plus.dpsi[0]),
                           (sp.diff(psi, x1, x3), geom.plus.dJ[0]), (sp.diff(psi, x3, 2), geom.plus.dJ[2])):
            with np.errstate(divide="ignore", invalid="ignore"):
                ref = sp.lambdify((x1, x3), expr, "numpy")(X1, X3)
            np.testing.assert_allclose(to_physical(coef)[keep], ref[keep], atol=1e-12)
        assert geom.piola_defect() <= 1e-8
        lo, hi = geom.J_range
        assert 0.5 <= lo <= hi <= 1.5

    def test_too_large_front(self):
        with pytest.raises(FrontTooLarge):
            build_geometry(Front(cosine_front(3, 0.6, (2, 0)), TangentialSpectrum.zeros(3)), Grid(3, 9))

    def test_piola_converges_spectrally(self):
        f = cosine_front(8, 0.05, (8, 3))
        d = [lift_identities(f, M)["piola"] for M in (9, 17, 33)]
        assert d[1] < 1e-2 * d[0] and d[2] < 1e-8

    def test_comatrix_round_trip(self, rng):
        K, M = 4, 9
        f = random_front(K, rng, 3) * 0.02
        fd = random_front(K, rng, 3) * 0.1
        geom = build_geometry(Front(f, fd), Grid(K, M))
        lg = geom.plus
        n = 2 * K + 1
        mk = lambda: VectorLayerField(lg.grid, hermitian_symmetrize(
            rng.standard_normal((3, n, n, M)) + 1j * rng.standard_normal((3, n, n, M))) * 0.1)
        v, B = mk(), mk()
        u, b = to_comatrix_unknowns(v, B, lg)
        v2, B2 = from_comatrix_unknowns(u, b, lg)
        # products with non-band-limited J are truncated, so compare at the nodes
        assert np.max(np.abs(to_physical(v2.data) - to_physical(v.data))) < 1e-2
        e3 = np.zeros((3, n, n, M), complex)
        e3[2, 0, 0] = 1.0
        u3, _ = to_comatrix_unknowns(VectorLayerField(lg.grid, e3), VectorLayerField(lg.grid, e3), lg)
        np.testing.assert_allclose(u3.data, e3, atol=1e-14)

    def test_flat_comatrix_is_identity(self, rng):
        K, M = 3, 9
        lg = build_geometry(Front.flat(K), Grid(K, M)).plus
        n = 2 * K + 1
        v = VectorLayerField(lg.grid, hermitian_symmetrize(rng.standard_normal((3, n, n, M)) + 0j))
        u, _ = to_comatrix_unknowns(v, v, lg)
        np.testing.assert_allclose(u.data, v.data, atol=1e-14)
        vt, bt = transported_velocities(u, u, lg)
        np.testing.assert_allclose(vt.data, v.data, atol=1e-14)

    def test_transported_velocity_from_front_speed(self):
        K, M = 2, 9
        fd = cosine_front(K, 0.3)
        lg = build_geometry(Front(TangentialSpectrum.zeros(K), fd), Grid(K, M)).plus
        zero = VectorLayerField.zeros(lg.grid)
        vt, _ = transported_velocities(zero, zero, lg)
        np.testing.assert_allclose(vt.data[2], -lg.psidot, atol=1e-15)
        assert np.max(np.abs(vt.data[:2])) == 0.0
