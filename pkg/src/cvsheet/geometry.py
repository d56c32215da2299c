"""Front lifting, the straightening map's coefficients and the comatrix unknowns.

The lifting of a front f is ψ(x′, x₃) = (1 − x₃²) sinc(x₃|D|) f, applied per
tangential mode; ψ and its first two x₃-derivatives are evaluated in closed
form, so J = 1 + ∂₃ψ carries no collocation error.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .errors import FrontTooLarge
from .spectral import (
    Grid,
    LayerField,
    TangentialSpectrum,
    VectorLayerField,
    d_normal,
    d_tangential,
    max_abs,
    to_physical,
    to_spectral,
)

J_MIN, J_MAX = 0.5, 1.5


def sinc(x: np.ndarray) -> np.ndarray:
    """sin(x)/x with sinc(0) = 1 and a Taylor guard near 0."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-4
    safe = np.where(small, 1.0, x)
    return np.where(small, 1.0 - x**2 / 6 + x**4 / 120, np.sin(safe) / safe)


def sinc_d1(x: np.ndarray) -> np.ndarray:
    """First derivative of sinc."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, x)
    series = -x / 3 + x**3 / 30 - x**5 / 840 + x**7 / 45360
    return np.where(small, series, (safe * np.cos(safe) - np.sin(safe)) / safe**2)


def sinc_d2(x: np.ndarray) -> np.ndarray:
    """Second derivative of sinc."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 1e-2
    safe = np.where(small, 1.0, x)
    series = -1 / 3 + x**2 / 10 - x**4 / 168 + x**6 / 6480
    exact = -sinc(safe) - 2 * sinc_d1(safe) / safe
    return np.where(small, series, exact)


@lru_cache(maxsize=16)
def lift_profiles(grid: Grid, symbol_scale: float = 1.0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-mode x₃ profiles p, p′, p″ of (1 − x₃²) sinc(x₃ λ_k), λ_k = scale·|k|.

    Shapes are (n, n, n_nodes); the arrays are cached and read-only.
    """
    lam = symbol_scale * np.sqrt(grid.k1**2 + grid.k2**2).astype(float)[..., None]
    x = grid.x3[None, None, :]
    z = lam * x
    s0, s1, s2 = sinc(z), sinc_d1(z), sinc_d2(z)
    w = 1.0 - x**2
    p0 = w * s0
    p1 = -2 * x * s0 + w * lam * s1
    p2 = -2 * s0 - 4 * x * lam * s1 + w * lam**2 * s2
    for arr in (p0, p1, p2):
        arr.setflags(write=False)
    return p0, p1, p2


def lift_front(g: TangentialSpectrum, grid: Grid | None = None, M: int = 33, symbol_scale: float = 1.0) -> LayerField:
    """Lifting Ψ_g on the whole-Ω grid: ψ(·,0) = g, ψ(·,±1) = 0, ∂₃ψ(·,0) = 0."""
    grid = Grid(g.K, M, "whole") if grid is None else grid
    if grid.K != g.K:
        raise ValueError(f"front has K={g.K}, grid has K={grid.K}")
    p0, _, _ = lift_profiles(grid, symbol_scale)
    return LayerField(grid, p0 * g.coeffs[..., None])


@dataclass(frozen=True)
class Front:
    """Interface height f and its velocity ∂ₜf."""

    f: TangentialSpectrum
    fdot: TangentialSpectrum

    @classmethod
    def flat(cls, K: int) -> "Front":
        return cls(TangentialSpectrum.zeros(K), TangentialSpectrum.zeros(K))


@dataclass
class LayerGeometry:
    """Coefficients of the straightening map restricted to one layer.

    Spectral arrays (shape (n, n, M)) are exact; padded physical samples of the
    non-band-limited combinations are cached for the nonlinear kernels.
    """

    grid: Grid
    psi: np.ndarray
    dpsi: np.ndarray  # (3, ...) ∂₁ψ, ∂₂ψ, ∂₃ψ
    d33psi: np.ndarray
    psidot: np.ndarray
    front_grad: np.ndarray = field(repr=False)  # (2, n, n) ∇′f, used for the jump rows

    @cached_property
    def J(self) -> np.ndarray:
        c = self.dpsi[2].copy()
        c[0, 0, :] += 1.0
        return c

    @cached_property
    def dJ(self) -> np.ndarray:
        """(∂₁J, ∂₂J, ∂₃J) in closed form."""
        g = self.grid
        return np.stack([d_tangential(self.dpsi[2], g, 1), d_tangential(self.dpsi[2], g, 2), self.d33psi])

    @cached_property
    def hessian(self) -> np.ndarray:
        """∂ᵢ∂_kψ for i ∈ {1,2}, k ∈ {1,2,3}, shape (2, 3, ...)."""
        g = self.grid
        out = np.empty((2, 3) + self.psi.shape, dtype=complex)
        for i in range(2):
            for k in range(2):
                out[i, k] = d_tangential(self.dpsi[k], g, i + 1)
            out[i, 2] = self.dJ[i]
        return out

    @cached_property
    def phys(self) -> dict[str, np.ndarray]:
        """Padded physical samples of the coefficient fields."""
        p = self.grid.n_pad
        J = to_physical(self.J, p)
        return {
            "J": J,
            "Jinv": 1.0 / J,
            "dpsi": to_physical(self.dpsi, p),
            "dJ": to_physical(self.dJ, p),
            "hess": to_physical(self.hessian, p),
            "psidot": to_physical(self.psidot, p),
        }

    def field(self, c: np.ndarray) -> LayerField:
        return LayerField(self.grid, c)

    # LayerField views -----------------------------------------------------

    @cached_property
    def Jinv(self) -> LayerField:
        return self.field(to_spectral(self.phys["Jinv"], self.grid.K))

    @cached_property
    def a(self) -> list[list[LayerField]]:
        """a = J A = [[J,0,0],[0,J,0],[−∂₁ψ, −∂₂ψ, 1]]."""
        g = self.grid
        zero, one = LayerField.zeros(g), LayerField.constant(g, 1.0)
        J = self.field(self.J)
        return [
            [J, zero, zero],
            [zero, J, zero],
            [self.field(-self.dpsi[0]), self.field(-self.dpsi[1]), one],
        ]

    @cached_property
    def A(self) -> list[list[LayerField]]:
        g = self.grid
        zero, one = LayerField.zeros(g), LayerField.constant(g, 1.0)
        p, K = self.phys, g.K
        row3 = [self.field(to_spectral(-p["dpsi"][i] * p["Jinv"], K)) for i in range(2)]
        return [[one, zero, zero], [zero, one, zero], row3 + [self.Jinv]]

    @cached_property
    def Atilde(self) -> list[list[LayerField]]:
        """Ã = I − A; only the third row is nonzero."""
        g = self.grid
        one = LayerField.constant(g, 1.0)
        out = [[LayerField.zeros(g) for _ in range(3)] for _ in range(3)]
        for j in range(3):
            out[2][j] = (one if j == 2 else LayerField.zeros(g)) - self.A[2][j]
        return out

    @cached_property
    def N(self) -> list[LayerField]:
        g = self.grid
        return [self.field(-self.dpsi[0]), self.field(-self.dpsi[1]), LayerField.constant(g, 1.0)]

    def piola_defect(self) -> float:
        """max_j ‖Σᵢ ∂ᵢ a_ij‖_∞ with collocation ∂₃ (discretization error only)."""
        g = self.grid
        col1 = d_tangential(self.J, g, 1) - d_normal(self.dpsi[0], g)
        col2 = d_tangential(self.J, g, 2) - d_normal(self.dpsi[1], g)
        return max(max_abs(col1), max_abs(col2), 0.0)  # third column is (0, 0, 1)

    def flux(self, grad_phys: np.ndarray) -> np.ndarray:
        """Physical samples of aAᵀ∇Q from padded samples of ∇Q."""
        p = self.phys
        J, Jinv, d1, d2 = p["J"], p["Jinv"], p["dpsi"][0], p["dpsi"][1]
        q1, q2, q3 = grad_phys
        return np.stack([
            J * q1 - d1 * q3,
            J * q2 - d2 * q3,
            -d1 * q1 - d2 * q2 + (1.0 + d1**2 + d2**2) * Jinv * q3,
        ])

    def flux_perturbation(self, grad_phys: np.ndarray) -> np.ndarray:
        """Physical samples of (aAᵀ − I)∇Q."""
        return self.flux(grad_phys) - grad_phys


@dataclass
class GeometryBundle:
    """ψ and its derived coefficients on both layers."""

    front: Front
    psi_whole: LayerField
    plus: LayerGeometry
    minus: LayerGeometry
    symbol_scale: float = 1.0

    def layer(self, name: str) -> LayerGeometry:
        return self.plus if name == "plus" else self.minus

    @property
    def layers(self) -> tuple[tuple[str, LayerGeometry], tuple[str, LayerGeometry]]:
        return (("plus", self.plus), ("minus", self.minus))

    @property
    def J_range(self) -> tuple[float, float]:
        lo = min(float(g.phys["J"].min()) for _, g in self.layers)
        hi = max(float(g.phys["J"].max()) for _, g in self.layers)
        return lo, hi

    def piola_defect(self) -> float:
        return max(self.plus.piola_defect(), self.minus.piola_defect())


def build_geometry(front: Front, grid: Grid, symbol_scale: float = 1.0, check: bool = True) -> GeometryBundle:
    """Lift the front and its velocity; raise FrontTooLarge outside J ∈ [½, 3/2]."""
    K, M = grid.K, grid.M
    whole = Grid(K, M, "whole")
    f = front.f.coeffs[..., None]
    fd = front.fdot.coeffs[..., None]
    p0, p1, p2 = lift_profiles(whole, symbol_scale)
    if check:
        fmax = float(np.max(np.abs(front.f.values(3 * K + 1))))
        if fmax >= 1.0:
            raise FrontTooLarge(f"build_geometry: max|f| = {fmax:.4g} reaches the walls")
    grad_f = np.stack([d_tangential(front.f.coeffs[..., None], whole, i)[..., 0] for i in (1, 2)])
    layers = {}
    for name in ("plus", "minus"):
        sl = whole.layer_slice(name)
        g = Grid(K, M, name)
        psi = p0[..., sl] * f
        dpsi = np.stack([
            d_tangential(psi, g, 1),
            d_tangential(psi, g, 2),
            p1[..., sl] * f,
        ])
        layers[name] = LayerGeometry(
            grid=g,
            psi=psi,
            dpsi=dpsi,
            d33psi=p2[..., sl] * f,
            psidot=p0[..., sl] * fd,
            front_grad=grad_f,
        )
    bundle = GeometryBundle(
        front=front,
        psi_whole=LayerField(whole, p0 * f),
        plus=layers["plus"],
        minus=layers["minus"],
        symbol_scale=symbol_scale,
    )
    if check:
        lo, hi = bundle.J_range
        if lo < J_MIN or hi > J_MAX:
            raise FrontTooLarge(f"build_geometry: J range [{lo:.4g}, {hi:.4g}] leaves [1/2, 3/2]")
    return bundle


# ---------------------------------------------------------------------------
# Comatrix unknowns (pointwise on the collocation grid)
# ---------------------------------------------------------------------------


def _nodal(geom: LayerGeometry) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    J = to_physical(geom.J)
    d = to_physical(geom.dpsi[:2])
    return J, d[0], d[1]


def _apply_a(v: VectorLayerField, geom: LayerGeometry) -> VectorLayerField:
    J, d1, d2 = _nodal(geom)
    x = to_physical(v.data)
    out = np.stack([J * x[0], J * x[1], x[2] - d1 * x[0] - d2 * x[1]])
    return VectorLayerField(v.grid, to_spectral(out, v.grid.K))


def _apply_a_inverse(u: VectorLayerField, geom: LayerGeometry) -> VectorLayerField:
    J, d1, d2 = _nodal(geom)
    x = to_physical(u.data)
    v1, v2 = x[0] / J, x[1] / J
    out = np.stack([v1, v2, x[2] + d1 * v1 + d2 * v2])
    return VectorLayerField(u.grid, to_spectral(out, u.grid.K))


def to_comatrix_unknowns(v: VectorLayerField, B: VectorLayerField, geom: LayerGeometry):
    """u = a v, b = a B evaluated pointwise at the collocation points."""
    if v.grid != B.grid or v.grid != geom.grid:
        raise ValueError("fields and geometry must share one grid")
    return _apply_a(v, geom), _apply_a(B, geom)


def from_comatrix_unknowns(u: VectorLayerField, b: VectorLayerField, geom: LayerGeometry):
    """Closed-form inverse: v₁ = u₁/J, v₂ = u₂/J, v₃ = u₃ + ∂₁ψ v₁ + ∂₂ψ v₂."""
    return _apply_a_inverse(u, geom), _apply_a_inverse(b, geom)


def transported_velocities(u: VectorLayerField, b: VectorLayerField, geom: LayerGeometry):
    """ṽ = (u − ∂ₜψ e₃)/J and B̃ = b/J, pointwise at the collocation points."""
    J = to_physical(geom.J)
    x, y = to_physical(u.data), to_physical(b.data)
    x[2] -= to_physical(geom.psidot)
    K = u.grid.K
    return VectorLayerField(u.grid, to_spectral(x / J, K)), VectorLayerField(b.grid, to_spectral(y / J, K))


def lift_identities(f: TangentialSpectrum, M: int = 33, symbol_scale: float = 1.0,
                    piola: bool = True) -> dict[str, float]:
    """Max-norm residuals of the lifting traces and (optionally) of the Piola identities.

    Normal derivatives use collocation on each layer (not the closed-form
    profile), so the interface slope residual is an independent check.
    """
    K = f.K
    whole = Grid(K, M, "whole")
    psi = lift_front(f, whole, symbol_scale=symbol_scale)
    out = {}
    iface = whole.layer_slice("plus").start
    out["trace_interface"] = max_abs(psi.data[..., iface, None] - f.coeffs[..., None])
    out["trace_walls"] = max(max_abs(psi.data[..., :1]), max_abs(psi.data[..., -1:]))
    slopes = []
    for name in ("plus", "minus"):
        g = Grid(K, M, name)
        dpsi = d_normal(psi.data[..., whole.layer_slice(name)], g)
        i = g.boundary_node("interface")
        slopes.append(max_abs(dpsi[..., i : i + 1]))
    out["slope_interface"] = max(slopes)
    if not piola:
        return out
    geom = build_geometry(Front(f, TangentialSpectrum.zeros(K)), Grid(K, M, "plus"), symbol_scale, check=False)
    out["piola"] = geom.piola_defect()
    lo, hi = geom.J_range
    out["J_min"], out["J_max"] = lo, hi
    return out
