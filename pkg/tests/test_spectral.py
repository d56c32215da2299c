import numpy as np
import pytest

from cvsheet.spectral import (
    Grid,
    LayerField,
    TangentialSpectrum,
    cheb_coefficients,
    cheb_derivative_coefficients,
    cheb_values,
    clenshaw_curtis_weights,
    d_normal,
    divergence,
    forward_tangential,
    gradient,
    hermitian_symmetrize,
    integrate,
    inverse_tangential,
    max_abs,
    normal_derivative,
    pointwise_product,
    sobolev_norm,
    tangential_derivative,
    to_physical,
    to_spectral,
    trace,
)

from conftest import sample_grid


class TestGrid:
    """Node layout, boundaries and the whole-slab union grid."""

    def test_nodes_and_boundaries(self):
        g = Grid(4, 9, "plus")
        assert g.x3[0] == 0.0 and g.x3[-1] == 1.0
        assert np.all(np.diff(g.x3) > 0)
        assert g.boundary_node("interface") == 0
        assert g.boundary_node("upper_wall") == 8
        with pytest.raises(ValueError):
            g.boundary_node("lower_wall")

    def test_minus_layer(self):
        g = Grid(4, 9, "minus")
        assert g.boundary_node("interface") == 8 and g.boundary_node("lower_wall") == 0

    def test_whole_grid_is_union(self):
        w = Grid(3, 9, "whole")
        assert w.x3.size == 17
        np.testing.assert_array_equal(w.x3[w.layer_slice("plus")], Grid(3, 9, "plus").x3)
        np.testing.assert_array_equal(w.x3[w.layer_slice("minus")], Grid(3, 9, "minus").x3)

    def test_padding_size(self):
        assert Grid(16, 33).n_pad == 49


class TestChebyshev:
    """Interval machinery: quadrature, transforms, differentiation."""

    @pytest.mark.parametrize("deg", [0, 3, 10, 20])
    def test_quadrature_exact_for_polynomials(self, deg):
        g = Grid(1, 25, "plus")
        w = clenshaw_curtis_weights(25, 0.0, 1.0)
        assert abs(w @ g.x3**deg - 1.0 / (deg + 1)) < 1e-14

    def test_transform_round_trip(self, rng):
        v = rng.standard_normal((4, 17))
        np.testing.assert_allclose(cheb_values(cheb_coefficients(v)), v, atol=1e-13)

    def test_derivative_of_polynomial(self):
        g = Grid(1, 17, "minus")
        x = g.x3
        u = x**5 - 2 * x**2
        np.testing.assert_allclose(u @ g.D.T, 5 * x**4 - 4 * x, atol=1e-11)
        c = cheb_derivative_coefficients(cheb_coefficients(u), 2.0)
        np.testing.assert_allclose(cheb_values(c), 5 * x**4 - 4 * x, atol=1e-11)

    def test_exponential_spectral_accuracy(self):
        g = Grid(1, 33, "plus")
        x = g.x3
        assert np.max(np.abs(np.exp(2 * x) @ g.D.T - 2 * np.exp(2 * x))) < 1e-11


class TestFourier:
    """Transforms, dealiased products and tangential calculus."""

    def test_round_trip(self, rng):
        K = 5
        c = hermitian_symmetrize(rng.standard_normal((2 * K + 1, 2 * K + 1, 3))
                                 + 1j * rng.standard_normal((2 * K + 1, 2 * K + 1, 3)))
        for p in (None, 16, 24):
            np.testing.assert_allclose(to_spectral(to_physical(c, p), K), c, atol=1e-13)

    def test_sampling_matches_formula(self):
        g = Grid(4, 9, "plus")
        X1, X2, X3 = sample_grid(g)
        u = forward_tangential(np.cos(2 * np.pi * X1) * X3 + np.sin(2 * np.pi * (X1 + 2 * X2)), g)
        np.testing.assert_allclose(inverse_tangential(u), np.cos(2 * np.pi * X1) * X3
                                   + np.sin(2 * np.pi * (X1 + 2 * X2)), atol=1e-13)

    def test_product_is_exact_truncated_convolution(self):
        g = Grid(4, 5, "plus")
        X1, X2, X3 = sample_grid(g)
        u = forward_tangential(np.cos(2 * np.pi * 3 * X1) + 0 * X3, g)
        v = forward_tangential(np.cos(2 * np.pi * 2 * X1) + 0 * X3, g)
        w = pointwise_product(u, v)
        # cos3·cos2 = (cos5 + cos1)/2 and mode 5 > K is dropped, not aliased
        expect = forward_tangential(0.5 * np.cos(2 * np.pi * X1) + 0 * X3, g)
        np.testing.assert_allclose(w.data, expect.data, atol=1e-14)

    def test_tangential_derivative(self):
        g = Grid(4, 5, "plus")
        X1, X2, X3 = sample_grid(g)
        u = forward_tangential(np.sin(2 * np.pi * (X1 - 3 * X2)) * X3, g)
        d2 = inverse_tangential(tangential_derivative(u, 2))
        np.testing.assert_allclose(d2, -6 * np.pi * np.cos(2 * np.pi * (X1 - 3 * X2)) * X3, atol=1e-12)
        with pytest.raises(ValueError):
            tangential_derivative(u, 3)


class TestFieldCalculus:
    """Gradient, divergence, integrals, traces and norms."""

    def test_divergence_of_gradient_is_laplacian(self):
        g = Grid(3, 17, "plus")
        X1, X2, X3 = sample_grid(g)
        phi = forward_tangential(np.cos(2 * np.pi * X2) * X3**3, g)
        lap = inverse_tangential(LayerField(g, divergence(gradient(phi.data, g), g)))
        exact = np.cos(2 * np.pi * X2) * (6 * X3 - 4 * np.pi**2 * X3**3)
        np.testing.assert_allclose(lap, exact, atol=1e-10)

    def test_whole_grid_normal_derivative_is_piecewise(self):
        w = Grid(2, 9, "whole")
        x = w.x3
        c = np.zeros((5, 5, x.size), complex)
        c[0, 0] = np.abs(x)
        d = d_normal(c, w)[0, 0].real
        assert np.allclose(d[x < 0], -1) and np.allclose(d[x > 0], 1) and abs(d[w.M - 1]) < 1e-12

    def test_integrate_volume(self):
        g = Grid(2, 9, "minus")
        one = LayerField.constant(g, 1.0)
        assert abs(integrate(one.data, g) - 1.0) < 1e-14

    def test_trace_and_max(self):
        g = Grid(2, 9, "plus")
        X1, X2, X3 = sample_grid(g)
        u = forward_tangential(np.cos(2 * np.pi * X1) * (1 - X3), g)
        t = trace(u, "interface")
        assert abs(max_abs(t.coeffs[..., None]) - 1.0) < 1e-14
        assert max_abs(trace(u, "upper_wall").coeffs[..., None]) < 1e-15

    def test_sobolev_norms(self):
        K = 3
        c = np.zeros((7, 7), complex)
        c[1, 0] = c[-1, 0] = 0.5  # cos(2πx₁)
        f = TangentialSpectrum(c)
        assert abs(sobolev_norm(f, 0) - np.sqrt(0.5)) < 1e-14
        assert abs(sobolev_norm(f, 1) - np.sqrt(0.5 * (1 + 4 * np.pi**2))) < 1e-12
        g = Grid(K, 9, "plus")
        u = normal_derivative(LayerField.constant(g, 2.0))
        assert sobolev_norm(u, 1) < 1e-12
