"""Pressure sources and the two-layer elliptic interface problem.

Solves −∇·(aAᵀ∇Q±) = J𝓕± with [Q] = 0, (1 + |∇′f|²)[∂₃Q] = 𝓖 on Γ,
∂₃Q = 0 on the walls and zero total mean, by a fixed point on the flat
Laplacian: every term of aAᵀ − I goes to the right-hand side and each sweep is
a set of independent per-mode two-interval Chebyshev boundary-value problems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import FrontTooLargeForSolver, IncompatibleSources
from .geometry import Front, GeometryBundle, LayerGeometry
from .spectral import (
    Grid,
    LayerField,
    TangentialSpectrum,
    VectorLayerField,
    cheb_diff_matrix,
    clenshaw_curtis_weights,
    d_tangential,
    divergence,
    gradient,
    integrate,
    max_abs,
    to_physical,
    to_physical_2d,
    to_spectral,
    to_spectral_2d,
)

JUMP_VARIANTS = ("dt_form", "di_form")


@dataclass(frozen=True)
class PressureTolerances:
    quad_tol: float = 1e-12
    comp_tol: float = 1e-6
    iter_tol: float = 1e-10
    max_iter: int = 200
    anderson_depth: int = 5


@dataclass
class PressureSources:
    JF_plus: LayerField
    JF_minus: LayerField
    G: TangentialSpectrum
    compat_defect: float


@dataclass
class PressureSolution:
    Q_plus: LayerField
    Q_minus: LayerField
    iterations: int
    residual: float
    mean: float
    shift: float = 0.0
    updates: list[float] = field(default_factory=list)

    def layer(self, name: str) -> LayerField:
        return self.Q_plus if name == "plus" else self.Q_minus


# ---------------------------------------------------------------------------
# Sources
# ---------------------------------------------------------------------------


def physical_with_gradient(c: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Padded samples of a vector field (3, ...) and of ∂_k w_l as [l, k]."""
    p = grid.n_pad
    grad = np.stack([gradient(c[l], grid) for l in range(3)])
    return to_physical(c, p), to_physical(grad, p)


def layer_samples(u: VectorLayerField, b: VectorLayerField, grid: Grid) -> tuple[np.ndarray, ...]:
    """Padded samples (u, ∇u, b, ∇b) shared by the source and RHS kernels."""
    up, du = physical_with_gradient(u.data, grid)
    bp, db = physical_with_gradient(b.data, grid)
    return up, du, bp, db


def interior_source_physical(u, du, b, db, geom: LayerGeometry) -> np.ndarray:
    """Pointwise J𝓕 from padded samples (index conventions: du[l, k] = ∂_k u_l)."""
    ph = geom.phys
    Jinv, dJ, hess = ph["Jinv"], ph["dJ"], ph["hess"]
    Jinv2 = Jinv * Jinv
    Jinv3 = Jinv2 * Jinv

    quad = np.einsum("lk...,kl...->...", du, du) - np.einsum("lk...,kl...->...", db, db)
    out = Jinv * quad
    # u_i ∂_i u_k − b_i ∂_i b_k  (i tangential)
    conv = np.einsum("i...,ki...->k...", u[:2], du[:, :2]) - np.einsum("i...,ki...->k...", b[:2], db[:, :2])
    out -= 2 * Jinv2 * np.einsum("k...,k...->...", dJ, conv)
    T = np.einsum("i...,k...->ik...", u[:2], u) - np.einsum("i...,k...->ik...", b[:2], b)
    out += 2 * Jinv3 * np.einsum("i...,k...,ik...->...", dJ[:2], dJ, T)
    shear = np.einsum("i...,j...->ij...", u[:2], du[:2, 2]) - np.einsum("i...,j...->ij...", b[:2], db[:2, 2])
    out += 2 * Jinv2 * np.einsum("ij...,ij...->...", hess[:, :2], shear)
    div_u = du[0, 0] + du[1, 1]
    div_b = db[0, 0] + db[1, 1]
    out -= 2 * Jinv2 * np.einsum("i...,i...->...", dJ[:2], u[:2] * div_u - b[:2] * div_b)
    out -= 2 * dJ[2] * Jinv3 * np.einsum("ik...,ik...->...", T, hess)
    return out


def assemble_interior_source(u: VectorLayerField, b: VectorLayerField, geom: LayerGeometry,
                             samples: tuple | None = None) -> LayerField:
    """Interior pressure source J𝓕 for one layer.

    Uses the corrected grouping of the five printed terms plus the
    −2∂₃J/J³ (uᵢu_k − bᵢb_k)∂ᵢ∂_kψ term, so that J𝓕 = −∇·W exactly for
    divergence-free u, b (W = the non-pressure part of the velocity RHS).
    """
    grid = geom.grid
    if u.grid != grid or b.grid != grid:
        raise ValueError("u, b and geometry must share one grid")
    if samples is None:
        samples = layer_samples(u, b, grid)
    return LayerField(grid, to_spectral(interior_source_physical(*samples, geom), grid.K))


def _as_trace_array(x) -> np.ndarray:
    if isinstance(x, np.ndarray):
        return x
    return np.stack([t.coeffs for t in x])


def assemble_jump_source(u_plus, u_minus, b_plus, b_minus, front: Front, variant: str = "dt_form") -> TangentialSpectrum:
    """𝓖 = −[2u′·∇′∂ₜf + (u′·∇′)∇′f·u′ − (b′·∇′)∇′f·b′], bracket = (+) − (−).

    Traces are (3, n, n) coefficient arrays or sequences of three spectra.
    ``variant="di_form"`` replaces ∂ₜf by Σᵢ∂ᵢf in the first term.
    """
    if variant not in JUMP_VARIANTS:
        raise ValueError(f"jump_source_variant must be one of {JUMP_VARIANTS}, got {variant!r}")
    K = front.f.K
    grid = Grid(K, 5)
    p = grid.n_pad
    kap = grid.kappa
    fc = front.f.coeffs
    hess = np.stack([np.stack([-kap[i] * kap[j] * fc for j in range(2)]) for i in range(2)])
    if variant == "dt_form":
        driver = front.fdot.coeffs
    else:
        driver = 1j * (kap[0] + kap[1]) * fc
    grad_driver = np.stack([1j * kap[i] * driver for i in range(2)])
    hess_p = to_physical_2d(hess, p)
    gd_p = to_physical_2d(grad_driver, p)

    def side(u, b):
        u = to_physical_2d(_as_trace_array(u)[:2], p)
        b = to_physical_2d(_as_trace_array(b)[:2], p)
        return (
            2 * np.einsum("j...,j...->...", u, gd_p)
            + np.einsum("i...,j...,ij...->...", u, u, hess_p)
            - np.einsum("i...,j...,ij...->...", b, b, hess_p)
        )

    G = -(side(u_plus, b_plus) - side(u_minus, b_minus))
    return TangentialSpectrum(to_spectral_2d(G, K))


def compatibility_defect(src: PressureSources, geom: GeometryBundle | None = None) -> float:
    """∑± ∫ J𝓕± dx − ∫_Γ 𝓖 dx′ by Clenshaw–Curtis quadrature."""
    lhs = integrate(src.JF_plus.data, src.JF_plus.grid) + integrate(src.JF_minus.data, src.JF_minus.grid)
    return float(lhs - np.real(src.G.coeffs[0, 0]))


def build_sources(u_plus, u_minus, b_plus, b_minus, geom: GeometryBundle, variant: str = "dt_form",
                  samples: dict | None = None) -> PressureSources:
    """Interior and jump sources for a state given in comatrix unknowns."""
    samples = {} if samples is None else samples
    JFp = assemble_interior_source(u_plus, b_plus, geom.plus, samples.get("plus"))
    JFm = assemble_interior_source(u_minus, b_minus, geom.minus, samples.get("minus"))
    gi_p = geom.plus.grid.boundary_node("interface")
    gi_m = geom.minus.grid.boundary_node("interface")
    G = assemble_jump_source(
        u_plus.data[..., gi_p], u_minus.data[..., gi_m],
        b_plus.data[..., gi_p], b_minus.data[..., gi_m],
        geom.front, variant,
    )
    src = PressureSources(JFp, JFm, G, 0.0)
    src.compat_defect = compatibility_defect(src)
    return src


# ---------------------------------------------------------------------------
# Flat two-interval solver
# ---------------------------------------------------------------------------


def _flat_matrix(M: int) -> tuple[np.ndarray, np.ndarray]:
    """Mode-independent part L₀ and interior selector E of the flat operator.

    Unknowns: [Q⁻ at M nodes (−1 → 0), Q⁺ at M nodes (0 → 1)].
    """
    Dm = cheb_diff_matrix(M, -1.0, 0.0)
    Dp = cheb_diff_matrix(M, 0.0, 1.0)
    L = np.zeros((2 * M, 2 * M))
    E = np.zeros(2 * M)
    for r in range(1, M - 1):
        L[r, :M] = (Dm @ Dm)[r]
        L[M + r, M:] = (Dp @ Dp)[r]
        E[r] = E[M + r] = 1.0
    L[0, :M] = Dm[0]
    L[M - 1, M - 1], L[M - 1, M] = -1.0, 1.0
    L[M, M:] = Dp[0]
    L[M, :M] -= Dm[M - 1]
    L[2 * M - 1, M:] = Dp[M - 1]
    return L, E


@lru_cache(maxsize=4)
def flat_inverses(K: int, M: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-mode inverses of the flat operator, plus the bordered k = 0 inverse."""
    L, E = _flat_matrix(M)
    grid = Grid(K, M)
    ksq = grid.kappa_sq
    uniq, index = np.unique(np.round(ksq / (4 * np.pi**2)).astype(int), return_inverse=True)
    mats = L[None] - (4 * np.pi**2) * uniq[:, None, None] * np.diag(E)[None]
    mats[uniq == 0] = np.eye(2 * M)  # placeholder; k = 0 handled by the bordered system
    inv_unique = np.linalg.inv(mats)
    inv = inv_unique[index.reshape(ksq.shape)]
    w = np.concatenate([clenshaw_curtis_weights(M, -1.0, 0.0), clenshaw_curtis_weights(M, 0.0, 1.0)])
    bordered = np.zeros((2 * M + 1, 2 * M + 1))
    bordered[: 2 * M, : 2 * M] = L
    bordered[: 2 * M, 2 * M] = E
    bordered[2 * M, : 2 * M] = w
    inv0 = np.linalg.inv(bordered)
    inv.setflags(write=False)
    inv0.setflags(write=False)
    return inv, inv0


def flat_solve(rhs_plus: np.ndarray, rhs_minus: np.ndarray, jump: np.ndarray, K: int, M: int):
    """Solve (∂₃² − |2πk|²)Q̂ = −r̂ per mode with [Q̂] = 0, [∂₃Q̂] = ĵ, Neumann walls.

    Returns (Q⁺, Q⁻, λ) where λ is the uniform source shift absorbed by the
    k = 0 mode (zero when the data are discretely compatible).
    """
    inv, inv0 = flat_inverses(K, M)
    b = np.zeros(rhs_plus.shape[:2] + (2 * M,), dtype=complex)
    b[..., 1 : M - 1] = -rhs_minus[..., 1 : M - 1]
    b[..., M + 1 : 2 * M - 1] = -rhs_plus[..., 1 : M - 1]
    b[..., M] = jump
    stacked = np.stack([b.real, b.imag], axis=-1)
    sol = np.matmul(inv, stacked)
    q = sol[..., 0] + 1j * sol[..., 1]
    b0 = np.append(b[0, 0].real, 0.0)
    x0 = inv0 @ b0
    q[0, 0] = x0[: 2 * M]
    return q[..., M:], q[..., :M], float(x0[2 * M])


def _jump_data(src: PressureSources, geom: GeometryBundle) -> np.ndarray:
    """𝓖/(1 + |∇′f|²), divided pointwise on the padded grid."""
    K = src.G.K
    p = 3 * K + 1
    gf = to_physical_2d(geom.plus.front_grad, p)
    G = to_physical_2d(src.G.coeffs, p)
    return to_spectral_2d(G / (1.0 + gf[0] ** 2 + gf[1] ** 2), K)


def _perturbation_divergence(Q: np.ndarray, geom: LayerGeometry) -> np.ndarray:
    grid = geom.grid
    grad = to_physical(gradient(Q, grid), grid.n_pad)
    pert = to_spectral(geom.flux_perturbation(grad), grid.K)
    return divergence(pert, grid)


def operator_residual(Q_plus: np.ndarray, Q_minus: np.ndarray, JF_plus: np.ndarray, JF_minus: np.ndarray,
                      G: np.ndarray, geom: GeometryBundle) -> float:
    """Max-norm residual of the full problem: interior rows and all boundary rows."""
    res = 0.0
    grads = {}
    for name, Q, JF in (("plus", Q_plus, JF_plus), ("minus", Q_minus, JF_minus)):
        lg = geom.layer(name)
        grid = lg.grid
        grad = gradient(Q, grid)
        grads[name] = grad
        fl = to_spectral(lg.flux(to_physical(grad, grid.n_pad)), grid.K)
        r = -divergence(fl, grid) - JF
        res = max(res, max_abs(r[..., 1:-1]))
        wall = grid.boundary_node("upper_wall" if name == "plus" else "lower_wall")
        res = max(res, max_abs(grad[2][..., wall : wall + 1]))
    jq = Q_plus[..., 0] - Q_minus[..., -1]
    res = max(res, float(np.max(np.abs(to_physical_2d(jq)))))
    K = geom.plus.grid.K
    p = 3 * K + 1
    gf = to_physical_2d(geom.plus.front_grad, p)
    jd = to_physical_2d(grads["plus"][2][..., 0] - grads["minus"][2][..., -1], p)
    jr = (1.0 + gf[0] ** 2 + gf[1] ** 2) * jd - to_physical_2d(G, p)
    return max(res, float(np.max(np.abs(jr))))


def solve_pressure(src: PressureSources, geom: GeometryBundle, tol: PressureTolerances | None = None,
                   seed: tuple[np.ndarray, np.ndarray] | None = None) -> PressureSolution:
    """Flat-Laplacian fixed point for the coupled interface problem."""
    tol = PressureTolerances() if tol is None else tol
    grid = geom.plus.grid
    K, M = grid.K, grid.M
    defect = compatibility_defect(src)
    if abs(defect) > tol.comp_tol:
        raise IncompatibleSources(
            f"solve_pressure: compatibility defect {defect:.3e} exceeds comp_tol {tol.comp_tol:.1e}")
    JFp, JFm = src.JF_plus.data.copy(), src.JF_minus.data.copy()
    shift = 0.0
    if abs(defect) > tol.quad_tol:
        shift = defect / 2.0  # volume of Ω is 2
        JFp[0, 0, :] -= shift
        JFm[0, 0, :] -= shift
    jump = _jump_data(src, geom)
    if seed is None:
        Qp = np.zeros(grid.shape, dtype=complex)
        Qm = np.zeros(grid.shape, dtype=complex)
    else:
        Qp, Qm = (np.asarray(s, dtype=complex).copy() for s in seed)
    updates = []
    flat_front = not np.any(geom.front.f.coeffs)
    depth = tol.anderson_depth
    hist_f: list[np.ndarray] = []
    hist_g: list[np.ndarray] = []
    shape = Qp.shape
    for it in range(1, tol.max_iter + 1):
        rp, rm = JFp, JFm
        if not flat_front:
            rp = JFp + _perturbation_divergence(Qp, geom.plus)
            rm = JFm + _perturbation_divergence(Qm, geom.minus)
        Qp_new, Qm_new, _ = flat_solve(rp, rm, jump, K, M)
        g = np.concatenate([Qp_new.ravel(), Qm_new.ravel()])
        f = g - np.concatenate([Qp.ravel(), Qm.ravel()])
        # coefficient max-norms: cheap and equivalent up to a grid-size factor
        upd = float(np.max(np.abs(f)))
        scale = float(np.max(np.abs(g)))
        updates.append(upd)
        if upd <= tol.iter_tol * scale or flat_front:
            Qp, Qm = Qp_new, Qm_new
            break
        if it >= 8 and updates[-1] > updates[-4] > updates[-7]:
            raise FrontTooLargeForSolver(
                f"solve_pressure: perturbation iteration diverging (update {upd:.3e} at sweep {it})")
        x = g
        if depth > 0:
            # Anderson mixing over the last `depth` sweeps (the map is affine in Q)
            hist_f.append(f)
            hist_g.append(g)
            if len(hist_f) > depth + 1:
                hist_f.pop(0)
                hist_g.pop(0)
            if len(hist_f) > 1:
                dF = np.stack([hist_f[j + 1] - hist_f[j] for j in range(len(hist_f) - 1)], axis=1)
                dG = np.stack([hist_g[j + 1] - hist_g[j] for j in range(len(hist_g) - 1)], axis=1)
                gram = dF.conj().T @ dF
                gamma = np.linalg.lstsq(gram, dF.conj().T @ f, rcond=1e-14)[0]
                x = g - dG @ gamma
        half = x.size // 2
        Qp, Qm = x[:half].reshape(shape), x[half:].reshape(shape)
    else:
        raise FrontTooLargeForSolver(
            f"solve_pressure: no convergence in {tol.max_iter} sweeps (last update {updates[-1]:.3e})")
    residual = operator_residual(Qp, Qm, JFp, JFm, src.G.coeffs, geom)
    mean = float(integrate(Qp, grid) + integrate(Qm, geom.minus.grid))
    return PressureSolution(
        Q_plus=LayerField(grid, Qp),
        Q_minus=LayerField(geom.minus.grid, Qm),
        iterations=it,
        residual=residual,
        mean=mean,
        shift=shift,
        updates=updates,
    )
