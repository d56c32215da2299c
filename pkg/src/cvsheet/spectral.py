"""Discrete calculus on the two-layer slab T² × (−1, 1).

Fields are stored as tangential Fourier coefficients (full complex arrays in
numpy FFT order, |k₁|, |k₂| ≤ K) at Chebyshev–Lobatto nodes in x₃.  The last
array axis is always the x₃ node index; the two axes before it are k₁, k₂.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
import scipy.fft

LAYER_BOUNDS = {"plus": (0.0, 1.0), "minus": (-1.0, 0.0), "whole": (-1.0, 1.0)}
BOUNDARIES = ("interface", "upper_wall", "lower_wall")


# ---------------------------------------------------------------------------
# Chebyshev–Lobatto machinery on an interval
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def cheb_nodes(m: int, lo: float, hi: float) -> np.ndarray:
    """Increasing Chebyshev–Lobatto nodes on [lo, hi], endpoints exact."""
    j = np.arange(m)
    x = -np.cos(np.pi * j / (m - 1))
    if m % 2 == 1:
        x[m // 2] = 0.0
    nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
    nodes[0], nodes[-1] = lo, hi
    nodes.setflags(write=False)
    return nodes


@lru_cache(maxsize=None)
def cheb_diff_matrix(m: int, lo: float, hi: float) -> np.ndarray:
    """Collocation first-derivative matrix on the increasing nodes."""
    n = m - 1
    x = -np.cos(np.pi * np.arange(m) / n)
    c = np.ones(m)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** np.arange(m)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(m))
    d -= np.diag(d.sum(axis=1))  # negative-sum trick for the diagonal
    d *= 2.0 / (hi - lo)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def clenshaw_curtis_weights(m: int, lo: float, hi: float) -> np.ndarray:
    """Clenshaw–Curtis quadrature weights for the increasing nodes."""
    n = m - 1
    theta = np.pi * np.arange(m) / n
    w = np.zeros(m)
    v = np.ones(n - 1)
    interior = theta[1:-1]
    if n % 2 == 0:
        w[0] = w[-1] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * interior) / (4 * k**2 - 1)
        v -= np.cos(n * interior) / (n**2 - 1)
    else:
        w[0] = w[-1] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * interior) / (4 * k**2 - 1)
    w[1:-1] = 2.0 * v / n
    w *= 0.5 * (hi - lo)
    w.setflags(write=False)
    return w


def cheb_coefficients(values: np.ndarray) -> np.ndarray:
    """Chebyshev coefficients (along the last axis) of nodal values."""
    n = values.shape[-1] - 1
    # nodes are increasing, i.e. x_j = -cos(pi j/n); T_p(x_j) = (-1)^p cos(pi p j/n)
    c = scipy.fft.dct(values, type=1, axis=-1) / n
    c[..., 0] *= 0.5
    c[..., -1] *= 0.5
    c *= (-1.0) ** np.arange(n + 1)
    return c


def cheb_values(coeffs: np.ndarray) -> np.ndarray:
    """Inverse of `cheb_coefficients`."""
    n = coeffs.shape[-1] - 1
    c = coeffs * (-1.0) ** np.arange(n + 1)
    c = c.copy()
    c[..., 0] *= 2.0
    c[..., -1] *= 2.0
    return scipy.fft.dct(c, type=1, axis=-1) * 0.5


def cheb_derivative_coefficients(coeffs: np.ndarray, scale: float) -> np.ndarray:
    """Coefficients of the derivative of a Chebyshev series on an interval.

    `scale` is 2/(hi − lo), the affine map factor.
    """
    n = coeffs.shape[-1] - 1
    out = np.zeros_like(coeffs)
    if n == 0:
        return out
    out[..., n - 1] = 2 * n * coeffs[..., n]
    for p in range(n - 1, 0, -1):
        nxt = out[..., p + 1] if p + 1 <= n - 1 else 0.0
        out[..., p - 1] = nxt + 2 * p * coeffs[..., p]
    out[..., 0] *= 0.5
    return out * scale


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Tensor grid: (2K+1)² Fourier modes times Chebyshev nodes in x₃.

    For ``layer="whole"`` the x₃ nodes are the union of the minus and plus
    layer nodes (2M − 1 of them, x₃ = 0 shared).
    """

    K: int
    M: int
    layer: str = "plus"

    def __post_init__(self):
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.M < 5 or self.M % 2 == 0:
            raise ValueError(f"M must be odd and >= 5, got {self.M}")
        if self.layer not in LAYER_BOUNDS:
            raise ValueError(f"layer must be one of {sorted(LAYER_BOUNDS)}, got {self.layer!r}")

    @property
    def n(self) -> int:
        """Tangential samples per axis (= number of modes per axis)."""
        return 2 * self.K + 1

    @property
    def n_pad(self) -> int:
        """Padded samples per axis for alias-free quadratic products."""
        return 3 * self.K + 1

    @property
    def bounds(self) -> tuple[float, float]:
        return LAYER_BOUNDS[self.layer]

    @property
    def n_nodes(self) -> int:
        return 2 * self.M - 1 if self.layer == "whole" else self.M

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n, self.n, self.n_nodes)

    def sub(self, layer: str) -> "Grid":
        return Grid(self.K, self.M, layer)

    @cached_property
    def x3(self) -> np.ndarray:
        if self.layer == "whole":
            lower = cheb_nodes(self.M, -1.0, 0.0)
            upper = cheb_nodes(self.M, 0.0, 1.0)
            return np.concatenate([lower, upper[1:]])
        return cheb_nodes(self.M, *self.bounds)

    @cached_property
    def D(self) -> np.ndarray:
        if self.layer == "whole":
            raise ValueError("the whole grid is piecewise; differentiate per layer")
        return cheb_diff_matrix(self.M, *self.bounds)

    @cached_property
    def weights(self) -> np.ndarray:
        if self.layer == "whole":
            w = np.zeros(self.n_nodes)
            w[: self.M] += clenshaw_curtis_weights(self.M, -1.0, 0.0)
            w[self.M - 1 :] += clenshaw_curtis_weights(self.M, 0.0, 1.0)
            return w
        return clenshaw_curtis_weights(self.M, *self.bounds)

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wavenumbers in FFT order, length n."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).round().astype(int)

    @cached_property
    def k1(self) -> np.ndarray:
        return np.broadcast_to(self.modes[:, None], (self.n, self.n))

    @cached_property
    def k2(self) -> np.ndarray:
        return np.broadcast_to(self.modes[None, :], (self.n, self.n))

    @cached_property
    def kappa(self) -> tuple[np.ndarray, np.ndarray]:
        """Derivative symbols 2πk₁, 2πk₂ of shape (n, n)."""
        return 2 * np.pi * self.k1, 2 * np.pi * self.k2

    @cached_property
    def kappa_sq(self) -> np.ndarray:
        return self.kappa[0] ** 2 + self.kappa[1] ** 2

    @cached_property
    def x_tangential(self) -> np.ndarray:
        return np.arange(self.n) / self.n

    def boundary_node(self, where: str) -> int:
        lo, hi = self.bounds
        if where not in BOUNDARIES:
            raise ValueError(f"unknown boundary {where!r}; expected one of {BOUNDARIES}")
        target = {"interface": 0.0, "upper_wall": 1.0, "lower_wall": -1.0}[where]
        if not lo <= target <= hi:
            raise ValueError(f"boundary {where!r} is not on layer {self.layer!r}")
        return int(np.flatnonzero(self.x3 == target)[0])

    def layer_slice(self, layer: str) -> slice:
        """Node slice of a layer inside the whole grid."""
        if self.layer != "whole":
            raise ValueError("layer_slice only applies to the whole grid")
        return slice(0, self.M) if layer == "minus" else slice(self.M - 1, 2 * self.M - 1)


# ---------------------------------------------------------------------------
# Transforms between coefficients and (padded) physical samples
# ---------------------------------------------------------------------------


@lru_cache(maxsize=None)
def _embed_index(n: int, p: int) -> np.ndarray:
    modes = np.fft.fftfreq(n, d=1.0 / n).round().astype(int)
    return modes % p


def hermitian_symmetrize(c: np.ndarray) -> np.ndarray:
    """Project coefficients (axes -3, -2) onto the Hermitian-symmetric subspace."""
    flipped = np.roll(np.flip(c, axis=(-3, -2)), 1, axis=(-3, -2))
    return 0.5 * (c + np.conj(flipped))


def to_physical(c: np.ndarray, p: int | None = None) -> np.ndarray:
    """Real samples on a p × p tangential grid from coefficients (axes -3, -2)."""
    n = c.shape[-3]
    k = (n - 1) // 2
    p = n if p is None else p
    half = p // 2 + 1
    idx = _embed_index(n, p)
    buf = np.zeros(c.shape[:-3] + (p, half) + c.shape[-1:], dtype=complex)
    buf[..., idx, : k + 1, :] = c[..., :, : k + 1, :]
    return scipy.fft.irfftn(buf, s=(p, p), axes=(-3, -2), norm="forward")


def to_spectral(v: np.ndarray, K: int) -> np.ndarray:
    """Truncated coefficients |k| ≤ K from real samples on any p × p grid."""
    p = v.shape[-3]
    n = 2 * K + 1
    idx = _embed_index(n, p)
    half = scipy.fft.rfftn(v, axes=(-3, -2), norm="forward")
    c = np.empty(v.shape[:-3] + (n, n) + v.shape[-1:], dtype=complex)
    c[..., :, : K + 1, :] = half[..., idx, : K + 1, :]
    # k₂ < 0 columns from Hermitian symmetry
    neg_k1 = (-np.arange(n)) % n
    c[..., :, K + 1 :, :] = np.conj(c[..., neg_k1, 1 : K + 1, :][..., :, ::-1, :])
    col = c[..., :, 0, :]
    c[..., :, 0, :] = 0.5 * (col + np.conj(col[..., neg_k1, :]))
    return c


def to_physical_2d(c: np.ndarray, p: int | None = None) -> np.ndarray:
    return to_physical(c[..., None], p)[..., 0]


def to_spectral_2d(v: np.ndarray, K: int) -> np.ndarray:
    return to_spectral(v[..., None], K)[..., 0]


# ---------------------------------------------------------------------------
# Field containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TangentialSpectrum:
    """A real function on T² stored by its Fourier coefficients |k_i| ≤ K."""

    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim != 2 or c.shape[0] != c.shape[1] or c.shape[0] % 2 == 0:
            raise ValueError(f"coefficients must be (2K+1, 2K+1), got {c.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def K(self) -> int:
        return (self.coeffs.shape[0] - 1) // 2

    @classmethod
    def zeros(cls, K: int) -> "TangentialSpectrum":
        return cls(np.zeros((2 * K + 1, 2 * K + 1), dtype=complex))

    @classmethod
    def from_values(cls, values: np.ndarray, K: int) -> "TangentialSpectrum":
        return cls(to_spectral_2d(np.asarray(values, dtype=float), K))

    def values(self, p: int | None = None) -> np.ndarray:
        return to_physical_2d(self.coeffs, p)

    def __add__(self, other: "TangentialSpectrum") -> "TangentialSpectrum":
        return TangentialSpectrum(self.coeffs + other.coeffs)

    def __sub__(self, other: "TangentialSpectrum") -> "TangentialSpectrum":
        return TangentialSpectrum(self.coeffs - other.coeffs)

    def __mul__(self, alpha: float) -> "TangentialSpectrum":
        return TangentialSpectrum(self.coeffs * alpha)

    __rmul__ = __mul__

    def __neg__(self) -> "TangentialSpectrum":
        return TangentialSpectrum(-self.coeffs)


@dataclass(frozen=True)
class LayerField:
    """Scalar field on one layer: Fourier in x′, nodal in x₃."""

    grid: Grid
    data: np.ndarray
    real_valued: bool = True

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.shape != self.grid.shape:
            raise ValueError(f"data shape {d.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "data", d)

    @classmethod
    def zeros(cls, grid: Grid) -> "LayerField":
        return cls(grid, np.zeros(grid.shape, dtype=complex))

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "LayerField":
        d = np.zeros(grid.shape, dtype=complex)
        d[0, 0, :] = value
        return cls(grid, d)

    def values(self, p: int | None = None) -> np.ndarray:
        return to_physical(self.data, p)

    def _check(self, other: "LayerField") -> None:
        if other.grid != self.grid:
            raise ValueError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "LayerField") -> "LayerField":
        self._check(other)
        return LayerField(self.grid, self.data + other.data)

    def __sub__(self, other: "LayerField") -> "LayerField":
        self._check(other)
        return LayerField(self.grid, self.data - other.data)

    def __mul__(self, alpha: float) -> "LayerField":
        return LayerField(self.grid, self.data * alpha)

    __rmul__ = __mul__

    def __neg__(self) -> "LayerField":
        return LayerField(self.grid, -self.data)


@dataclass(frozen=True)
class VectorLayerField:
    """Three components on one grid, stored as a (3, n, n, m) array."""

    grid: Grid
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        if d.shape != (3,) + self.grid.shape:
            raise ValueError(f"data shape {d.shape} does not match 3 x {self.grid.shape}")
        object.__setattr__(self, "data", d)

    @classmethod
    def from_components(cls, components) -> "VectorLayerField":
        grids = {c.grid for c in components}
        if len(components) != 3 or len(grids) != 1:
            raise ValueError("need three components on one grid")
        return cls(components[0].grid, np.stack([c.data for c in components]))

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorLayerField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex))

    @property
    def components(self) -> tuple[LayerField, LayerField, LayerField]:
        return tuple(LayerField(self.grid, self.data[i]) for i in range(3))

    def __getitem__(self, i: int) -> LayerField:
        return LayerField(self.grid, self.data[i])

    def __add__(self, other: "VectorLayerField") -> "VectorLayerField":
        return VectorLayerField(self.grid, self.data + other.data)

    def __sub__(self, other: "VectorLayerField") -> "VectorLayerField":
        return VectorLayerField(self.grid, self.data - other.data)

    def __mul__(self, alpha: float) -> "VectorLayerField":
        return VectorLayerField(self.grid, self.data * alpha)

    __rmul__ = __mul__


# ---------------------------------------------------------------------------
# Array-level calculus (used by the solver modules)
# ---------------------------------------------------------------------------


def d_tangential(c: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """∂₁ (axis=1) or ∂₂ (axis=2) of coefficient data shaped (..., n, n, m)."""
    kap = grid.kappa[axis - 1]
    return 1j * kap[..., None] * c


def d_normal(c: np.ndarray, grid: Grid) -> np.ndarray:
    """∂₃ by collocation along the last axis (piecewise on the whole grid)."""
    if grid.layer != "whole":
        return c @ grid.D.T
    lo_s, up_s = grid.layer_slice("minus"), grid.layer_slice("plus")
    d_lo = c[..., lo_s] @ grid.sub("minus").D.T
    d_up = c[..., up_s] @ grid.sub("plus").D.T
    out = np.concatenate([d_lo, d_up[..., 1:]], axis=-1)
    out[..., grid.M - 1] = 0.5 * (d_lo[..., -1] + d_up[..., 0])
    return out


def gradient(c: np.ndarray, grid: Grid) -> np.ndarray:
    """Stack (∂₁c, ∂₂c, ∂₃c) along a new leading axis."""
    return np.stack([d_tangential(c, grid, 1), d_tangential(c, grid, 2), d_normal(c, grid)])


def divergence(c: np.ndarray, grid: Grid) -> np.ndarray:
    """∇·w for coefficient data shaped (3, n, n, m)."""
    return d_tangential(c[0], grid, 1) + d_tangential(c[1], grid, 2) + d_normal(c[2], grid)


def integrate(c: np.ndarray, grid: Grid) -> np.ndarray:
    """∫ over the layer (torus area 1): zero mode integrated with CC weights."""
    return np.real(c[..., 0, 0, :] @ grid.weights)


def max_abs(c: np.ndarray, p: int | None = None) -> float:
    """Max-norm of a real field from its coefficients, sampled on a p-grid."""
    if c.size == 0:
        return 0.0
    return float(np.max(np.abs(to_physical(c, p))))


# ---------------------------------------------------------------------------
# Public operations
# ---------------------------------------------------------------------------


def forward_tangential(values: np.ndarray, grid: Grid) -> LayerField:
    """Coefficients of real samples on the (n, n, m) tangential × nodal grid."""
    v = np.asarray(values, dtype=float)
    if v.shape != grid.shape:
        raise ValueError(f"sample shape {v.shape} does not match grid {grid.shape}")
    return LayerField(grid, to_spectral(v, grid.K))


def inverse_tangential(u: LayerField) -> np.ndarray:
    return to_physical(u.data)


def tangential_derivative(u: LayerField, axis: int) -> LayerField:
    if axis not in (1, 2):
        raise ValueError(f"axis must be 1 or 2, got {axis}")
    return LayerField(u.grid, d_tangential(u.data, u.grid, axis))


def normal_derivative(u: LayerField) -> LayerField:
    return LayerField(u.grid, d_normal(u.data, u.grid))


def pointwise_product(u: LayerField, v: LayerField) -> LayerField:
    """Product on the 3/2-padded grid, truncated back to |k| ≤ K.

    Zero padding to 3K + 1 points is the padded form of the 2/3 rule: the
    product of two K-band-limited fields is the exact truncated convolution.
    """
    u._check(v)
    p = u.grid.n_pad
    prod = to_physical(u.data, p) * to_physical(v.data, p)
    return LayerField(u.grid, to_spectral(prod, u.grid.K))


def trace(u: LayerField, where: str) -> TangentialSpectrum:
    """Restriction to Γ ("interface"), Γ₊ ("upper_wall") or Γ₋ ("lower_wall")."""
    j = u.grid.boundary_node(where)
    return TangentialSpectrum(u.data[:, :, j].copy())


@lru_cache(maxsize=None)
def _kappa_sq(K: int) -> np.ndarray:
    return Grid(K, 5).kappa_sq


def torus_weight(K: int, s: float) -> np.ndarray:
    """(1 + |2πk|²)^s on the mode grid."""
    return (1.0 + _kappa_sq(K)) ** s


def sobolev_norm(u: LayerField | TangentialSpectrum, s: float) -> float:
    """H^s norm on T² or H^r norm on a layer (sum over normal derivatives)."""
    if isinstance(u, TangentialSpectrum):
        if s < 0:
            raise ValueError("s must be >= 0")
        w = torus_weight(u.K, s)
        return float(np.sqrt(np.sum(w * np.abs(u.coeffs) ** 2)))
    r = int(s)
    if r != s or r < 0:
        raise ValueError(f"layer norms need an integer r >= 0, got {s}")
    grid = u.grid
    total = 0.0
    deriv = u.data
    for j in range(r + 1):
        w = torus_weight(grid.K, r - j)
        total += float(np.sum(w[..., None] * np.abs(deriv) ** 2 * grid.weights))
        if j < r:
            deriv = d_normal(deriv, grid)
    return float(np.sqrt(total))
