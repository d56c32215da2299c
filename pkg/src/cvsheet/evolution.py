"""Right-hand sides, time integration and trajectory diagnostics.

A state holds the comatrix unknowns u±, b± on the two layers together with
the front f and its velocity ḟ.  One evaluation of the right-hand side is the
pipeline geometry → pressure sources → pressure → RHS.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import AnalyticWindowExceeded, ConstraintViolated, SheetError, ValidationError
from .geometry import Front, GeometryBundle, LayerGeometry, build_geometry
from .norms import derivative_table, front_table, _factorial_weights
from .pressure import (
    PressureSolution,
    PressureSources,
    PressureTolerances,
    build_sources,
    layer_samples,
    solve_pressure,
)
from .spectral import (
    Grid,
    LayerField,
    TangentialSpectrum,
    VectorLayerField,
    d_normal,
    d_tangential,
    divergence,
    gradient,
    max_abs,
    to_physical,
    to_physical_2d,
    to_spectral,
)

LAYERS = ("plus", "minus")
WALL = {"plus": "upper_wall", "minus": "lower_wall"}


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SheetState:
    u_plus: VectorLayerField
    u_minus: VectorLayerField
    b_plus: VectorLayerField
    b_minus: VectorLayerField
    front: Front
    t: float = 0.0

    @property
    def K(self) -> int:
        return self.u_plus.grid.K

    @property
    def M(self) -> int:
        return self.u_plus.grid.M

    def u(self, layer: str) -> VectorLayerField:
        return self.u_plus if layer == "plus" else self.u_minus

    def b(self, layer: str) -> VectorLayerField:
        return self.b_plus if layer == "plus" else self.b_minus

    def arrays(self) -> list[np.ndarray]:
        """Coefficient arrays in the fixed order u⁺, u⁻, b⁺, b⁻, f, ḟ."""
        return [self.u_plus.data, self.u_minus.data, self.b_plus.data, self.b_minus.data,
                self.front.f.coeffs, self.front.fdot.coeffs]

    @classmethod
    def from_arrays(cls, arrays: Sequence[np.ndarray], K: int, M: int, t: float) -> "SheetState":
        gp, gm = Grid(K, M, "plus"), Grid(K, M, "minus")
        up, um, bp, bm, f, fd = arrays
        return cls(VectorLayerField(gp, up), VectorLayerField(gm, um), VectorLayerField(gp, bp),
                   VectorLayerField(gm, bm), Front(TangentialSpectrum(f), TangentialSpectrum(fd)), t)


@dataclass(frozen=True)
class StateDerivative:
    """Time derivative of a state: (u̇±, ḃ±, ḟ, f̈)."""

    udot_plus: np.ndarray
    udot_minus: np.ndarray
    bdot_plus: np.ndarray
    bdot_minus: np.ndarray
    fdot: np.ndarray
    fddot: np.ndarray

    def arrays(self) -> list[np.ndarray]:
        return [self.udot_plus, self.udot_minus, self.bdot_plus, self.bdot_minus, self.fdot, self.fddot]

    @classmethod
    def zeros_like(cls, state: SheetState) -> "StateDerivative":
        return cls(*(np.zeros_like(a) for a in state.arrays()))

    def __sub__(self, other: "StateDerivative") -> "StateDerivative":
        return StateDerivative(*(a - b for a, b in zip(self.arrays(), other.arrays())))


def advance(state: SheetState, deriv: StateDerivative, dt: float) -> SheetState:
    arrays = [a + dt * d for a, d in zip(state.arrays(), deriv.arrays())]
    return SheetState.from_arrays(arrays, state.K, state.M, state.t + dt)


@dataclass(frozen=True)
class EvolutionSettings:
    symbol_scale: float = 1.0
    jump_variant: str = "dt_form"
    pressure: PressureTolerances = field(default_factory=PressureTolerances)
    abort_tol: float = 1e-4
    clean_divergence: bool = False


@dataclass
class RhsBundle:
    udot_plus: VectorLayerField
    udot_minus: VectorLayerField
    bdot_plus: VectorLayerField
    bdot_minus: VectorLayerField
    fdot_sharp: TangentialSpectrum
    pressure: PressureSolution
    propagation_defects: dict[str, float] = field(default_factory=dict)
    w_plus: VectorLayerField | None = field(default=None, repr=False)
    w_minus: VectorLayerField | None = field(default=None, repr=False)
    sources: PressureSources | None = field(default=None, repr=False)

    def udot(self, layer: str) -> VectorLayerField:
        return self.udot_plus if layer == "plus" else self.udot_minus

    def bdot(self, layer: str) -> VectorLayerField:
        return self.bdot_plus if layer == "plus" else self.bdot_minus

    def w(self, layer: str) -> VectorLayerField:
        return self.w_plus if layer == "plus" else self.w_minus

    def derivative(self, state: SheetState) -> StateDerivative:
        return StateDerivative(self.udot_plus.data, self.udot_minus.data, self.bdot_plus.data,
                               self.bdot_minus.data, state.front.fdot.coeffs, self.fdot_sharp.coeffs)


# ---------------------------------------------------------------------------
# Constraints
# ---------------------------------------------------------------------------


def _trace_max(c: np.ndarray) -> float:
    return float(np.max(np.abs(to_physical_2d(c))))


def constraint_defects(state: SheetState) -> dict[str, float]:
    """Max-norm defects of the divergence, interface and wall constraints."""
    out: dict[str, float] = {}
    fdot = state.front.fdot.coeffs
    gi = {}
    for name in LAYERS:
        u, b = state.u(name), state.b(name)
        grid = u.grid
        out[f"div_u_{name}"] = max_abs(divergence(u.data, grid))
        out[f"div_b_{name}"] = max_abs(divergence(b.data, grid))
        i, w = grid.boundary_node("interface"), grid.boundary_node(WALL[name])
        gi[name] = u.data[2, ..., i]
        out[f"u3_fdot_{name}"] = _trace_max(u.data[2, ..., i] - fdot)
        out[f"b3_interface_{name}"] = _trace_max(b.data[2, ..., i])
        out[f"u3_wall_{name}"] = _trace_max(u.data[2, ..., w])
        out[f"b3_wall_{name}"] = _trace_max(b.data[2, ..., w])
    out["u3_jump"] = _trace_max(gi["plus"] - gi["minus"])
    return out


def max_defect(defects: dict[str, float]) -> float:
    return max(defects.values()) if defects else 0.0


@lru_cache(maxsize=8)
def _neumann_inverses(K: int, M: int, layer: str) -> np.ndarray:
    """Pseudo-inverses of φ ↦ φ″ − κ²φ with φ′ = 0 at both ends, per mode."""
    grid = Grid(K, M, layer)
    D = grid.D
    D2 = D @ D
    ks = grid.kappa_sq
    uniq, inv_idx = np.unique(np.round(ks, 10), return_inverse=True)
    mats = []
    for k2 in uniq:
        L = D2 - k2 * np.eye(M)
        L[0], L[-1] = D[0], D[-1]
        mats.append(np.linalg.pinv(L) if k2 == 0 else np.linalg.inv(L))
    out = np.stack(mats)[inv_idx.reshape(ks.shape)]
    out.setflags(write=False)
    return out


def clean_divergence(state: SheetState) -> SheetState:
    """Subtract ∇φ per layer with Δφ = ∇·u, ∂₃φ = 0 at both ends (normal traces unchanged)."""
    fields = {}
    for name in LAYERS:
        for kind in ("u", "b"):
            v = getattr(state, f"{kind}_{name}")
            grid = v.grid
            rhs = divergence(v.data, grid)
            rhs[..., 0] = 0.0
            rhs[..., -1] = 0.0
            inv = _neumann_inverses(grid.K, grid.M, name)
            phi = np.einsum("abij,abj->abi", inv, rhs)
            fields[f"{kind}_{name}"] = VectorLayerField(grid, v.data - gradient(phi, grid))
    return replace(state, **fields)


# ---------------------------------------------------------------------------
# Right-hand side
# ---------------------------------------------------------------------------


def _layer_terms(u: VectorLayerField, b: VectorLayerField, geom: LayerGeometry,
                 samples: tuple | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Non-pressure velocity RHS W and magnetic RHS, as coefficient arrays."""
    grid = geom.grid
    K = grid.K
    up, du, bp, db = layer_samples(u, b, grid) if samples is None else samples
    ph = geom.phys
    Jinv, dJ, hess, psidot = ph["Jinv"], ph["dJ"], ph["hess"], ph["psidot"]
    Jinv2 = Jinv * Jinv

    adv = lambda a, d: np.einsum("k...,lk...->l...", a, d)  # (a·∇)d_l
    T = np.einsum("i...,k...->ik...", up[:2], up) - np.einsum("i...,k...->ik...", bp[:2], bp)
    S = np.einsum("i...,k...->ik...", bp[:2], up) - np.einsum("i...,k...->ik...", up[:2], bp)

    wu = Jinv * (adv(bp, db) - adv(up, du))
    wu[:2] += Jinv2 * np.einsum("ik...,k...->i...", T, dJ)
    wu[2] -= Jinv2 * np.einsum("ik...,ik...->...", T, hess)
    wb = Jinv * (adv(bp, du) - adv(up, db))
    wb[:2] += Jinv2 * np.einsum("ik...,k...->i...", S, dJ)
    wb[2] -= Jinv2 * np.einsum("i...,i...->...", S[:, 2], dJ[:2])

    wu, wb = to_spectral(wu, K), to_spectral(wb, K)
    # moving-mesh transport: ±∂(ψ_t w/J)
    for w, a in ((wu, up), (wb, bp)):
        m = to_spectral(psidot * Jinv * a[:2], K)
        w[:2] += d_normal(m, grid)
        w[2] -= d_tangential(m[0], grid, 1) + d_tangential(m[1], grid, 2)
    return wu, wb


def pressure_flux(Q: LayerField, geom: LayerGeometry) -> np.ndarray:
    """Coefficients of aAᵀ∇Q."""
    grid = geom.grid
    return to_spectral(geom.flux(to_physical(gradient(Q.data, grid), grid.n_pad)), grid.K)


def upsilon_rhs(state: SheetState, geom: GeometryBundle, Q: PressureSolution,
                constraint_tol: float | None = None, samples: dict | None = None) -> RhsBundle:
    """Velocity, magnetic and front right-hand sides for a given pressure."""
    if constraint_tol is not None:
        defects = constraint_defects(state)
        worst = max(defects, key=defects.get)
        if defects[worst] > constraint_tol:
            raise ConstraintViolated(
                f"upsilon_rhs at t={state.t:.6g}: constraint {worst} = {defects[worst]:.3e} "
                f"exceeds {constraint_tol:.1e}")
    parts = {}
    for name in LAYERS:
        lg = geom.layer(name)
        wu, wb = _layer_terms(state.u(name), state.b(name), lg, None if samples is None else samples[name])
        udot = wu - pressure_flux(Q.layer(name), lg)
        parts[name] = (VectorLayerField(lg.grid, udot), VectorLayerField(lg.grid, wb), VectorLayerField(lg.grid, wu))
    ip = geom.plus.grid.boundary_node("interface")
    im = geom.minus.grid.boundary_node("interface")
    tp = parts["plus"][0].data[2, ..., ip]
    tm = parts["minus"][0].data[2, ..., im]
    rhs = RhsBundle(
        udot_plus=parts["plus"][0],
        udot_minus=parts["minus"][0],
        bdot_plus=parts["plus"][1],
        bdot_minus=parts["minus"][1],
        fdot_sharp=TangentialSpectrum(0.5 * (tp + tm)),
        pressure=Q,
        propagation_defects={"udot3_jump": _trace_max(tp - tm)},
        w_plus=parts["plus"][2],
        w_minus=parts["minus"][2],
    )
    return rhs


def evaluate_rhs(state: SheetState, settings: EvolutionSettings | None = None,
                 seed: PressureSolution | None = None) -> tuple[RhsBundle, GeometryBundle]:
    """Full pipeline: geometry, sources, pressure and RHS for one state."""
    settings = EvolutionSettings() if settings is None else settings
    grid = state.u_plus.grid
    geom = build_geometry(state.front, grid, settings.symbol_scale)
    samples = {name: layer_samples(state.u(name), state.b(name), geom.layer(name).grid) for name in LAYERS}
    src = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom, settings.jump_variant,
                        samples)
    seed_arrays = None if seed is None else (seed.Q_plus.data, seed.Q_minus.data)
    Q = solve_pressure(src, geom, settings.pressure, seed_arrays)
    rhs = upsilon_rhs(state, geom, Q, settings.abort_tol, samples)
    rhs.sources = src
    return rhs, geom


def propagation_check(state: SheetState, rhs: RhsBundle, geom: GeometryBundle,
                      Q: PressureSolution | None = None) -> dict[str, float]:
    """Residuals of the identities that keep the constraints invariant."""
    Q = rhs.pressure if Q is None else Q
    src = rhs.sources
    if src is None:
        src = build_sources(state.u_plus, state.u_minus, state.b_plus, state.b_minus, geom)
    out = dict(rhs.propagation_defects)
    for name in LAYERS:
        grid = geom.layer(name).grid
        JF = src.JF_plus if name == "plus" else src.JF_minus
        out[f"div_udot_{name}"] = max_abs(divergence(rhs.udot(name).data, grid))
        if rhs.w(name) is not None:
            out[f"div_w_plus_source_{name}"] = max_abs(divergence(rhs.w(name).data, grid) + JF.data)
        out[f"div_bdot_{name}"] = max_abs(divergence(rhs.bdot(name).data, grid))
        i, w = grid.boundary_node("interface"), grid.boundary_node(WALL[name])
        out[f"bdot3_interface_{name}"] = _trace_max(rhs.bdot(name).data[2, ..., i])
        out[f"bdot3_wall_{name}"] = _trace_max(rhs.bdot(name).data[2, ..., w])
        out[f"udot3_wall_{name}"] = _trace_max(rhs.udot(name).data[2, ..., w])
    return out


def energy(state: SheetState, settings: EvolutionSettings | None = None) -> float:
    """∑± ∫ (|u|² + |b|²)/J over the fixed layers."""
    settings = EvolutionSettings() if settings is None else settings
    geom = build_geometry(state.front, state.u_plus.grid, settings.symbol_scale, check=False)
    total = 0.0
    for name in LAYERS:
        lg = geom.layer(name)
        p = lg.grid.n_pad
        dens = (np.sum(to_physical(state.u(name).data, p) ** 2, axis=0)
                + np.sum(to_physical(state.b(name).data, p) ** 2, axis=0)) * lg.phys["Jinv"]
        total += float(np.mean(dens, axis=(0, 1)) @ lg.grid.weights)
    return total


# ---------------------------------------------------------------------------
# Initial data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModeSpec:
    """One tangential mode k of the perturbation, with complex amplitudes.

    u_amp sets u₃ at Γ, b_amp the interior size of b₃ (which vanishes on Γ and
    the walls); shear_u, shear_b add divergence-free tangential fields.
    """

    k: tuple[int, int]
    u_amp: complex = 0.0
    b_amp: complex = 0.0
    shear_u: complex = 0.0
    shear_b: complex = 0.0


def _normal_profiles(x: np.ndarray, layer: str) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """x₃ profiles (value, derivative) for u₃, b₃ and tangential shear."""
    s = 1.0 if layer == "plus" else -1.0
    # u₃: vanishes on the wall, equals 1 on Γ
    w = (1 - s * x) * (1 + s * x / 2)
    dw = -s * (1 + s * x / 2) + (1 - s * x) * s / 2
    # b₃: vanishes on the wall and on Γ
    v = s * x * (1 - s * x)
    dv = s * (1 - s * x) - x
    h = 1 - x**2 / 2
    return {"u": (w, dw), "b": (v, dv), "shear": (h, -x)}


def _mode_field(grid: Grid, spec_k: tuple[int, int], amp: complex, shear: complex, normal: tuple) -> np.ndarray:
    """Divergence-free real field carrying Re(amp e^{2πik·x′}) w(x₃) in the normal component."""
    n = grid.n
    out = np.zeros((3, n, n, grid.n_nodes), dtype=complex)
    k1, k2 = spec_k
    w, dw = normal
    h = _normal_profiles(grid.x3, grid.layer)["shear"][0]
    for sign in (1, -1):
        a = amp if sign == 1 else np.conj(amp)
        sh = shear if sign == 1 else np.conj(shear)
        q1, q2 = sign * k1, sign * k2
        i1, i2 = q1 % n, q2 % n
        kap1, kap2 = 2 * np.pi * q1, 2 * np.pi * q2
        col = np.zeros((3, grid.n_nodes), dtype=complex)
        col[2] = 0.5 * a * w
        if q1 != 0:
            col[0] = -0.5 * a * dw / (1j * kap1)
        elif q2 != 0:
            col[1] = -0.5 * a * dw / (1j * kap2)
        norm = math.hypot(kap1, kap2)
        col[0] += 0.5 * sh * h * kap2 / norm
        col[1] -= 0.5 * sh * h * kap1 / norm
        out[:, i1, i2, :] += col
    return out


def initial_data(U_plus=(0.0, 0.0), U_minus=(0.0, 0.0), B_plus=(0.0, 0.0), B_minus=(0.0, 0.0),
                 perturbation: Sequence[ModeSpec] = (), front_amp: float = 0.0,
                 front_mode: tuple[int, int] = (1, 0), K: int = 16, M: int = 33) -> SheetState:
    """Constraint-satisfying state: planar background plus divergence-free modes."""
    grids = {name: Grid(K, M, name) for name in LAYERS}
    data = {f"{kind}_{name}": np.zeros((3,) + grids[name].shape, dtype=complex)
            for kind in ("u", "b") for name in LAYERS}
    for spec in perturbation:
        k1, k2 = spec.k
        if max(abs(k1), abs(k2)) > K:
            raise ValidationError(f"initial_data: mode {spec.k} exceeds the grid cutoff K={K}")
        if (k1, k2) == (0, 0):
            if spec.u_amp or spec.b_amp or spec.shear_u or spec.shear_b:
                raise ValidationError(
                    "initial_data: the k = 0 mode cannot carry a perturbation (normal components must "
                    "vanish on the walls); use the planar background instead")
            continue
        for name in LAYERS:
            prof = _normal_profiles(grids[name].x3, name)
            data[f"u_{name}"] += _mode_field(grids[name], spec.k, spec.u_amp, spec.shear_u, prof["u"])
            data[f"b_{name}"] += _mode_field(grids[name], spec.k, spec.b_amp, spec.shear_b, prof["b"])
    for name, (U, B) in (("plus", (U_plus, B_plus)), ("minus", (U_minus, B_minus))):
        data[f"u_{name}"][:2, 0, 0, :] += np.asarray(U, dtype=float)[:, None]
        data[f"b_{name}"][:2, 0, 0, :] += np.asarray(B, dtype=float)[:, None]

    f = np.zeros((2 * K + 1, 2 * K + 1), dtype=complex)
    if front_amp:
        m1, m2 = front_mode
        if (m1, m2) == (0, 0) or max(abs(m1), abs(m2)) > K:
            raise ValidationError(f"initial_data: front_mode {front_mode} must be nonzero and within K={K}")
        f[m1 % (2 * K + 1), m2 % (2 * K + 1)] += 0.5 * front_amp
        f[-m1 % (2 * K + 1), -m2 % (2 * K + 1)] += 0.5 * front_amp
    i = grids["plus"].boundary_node("interface")
    fdot = data["u_plus"][2, ..., i].copy()
    state = SheetState(
        VectorLayerField(grids["plus"], data["u_plus"]),
        VectorLayerField(grids["minus"], data["u_minus"]),
        VectorLayerField(grids["plus"], data["b_plus"]),
        VectorLayerField(grids["minus"], data["b_minus"]),
        Front(TangentialSpectrum(f), TangentialSpectrum(fdot)),
        0.0,
    )
    build_geometry(state.front, grids["plus"])  # admissibility check
    return state


# ---------------------------------------------------------------------------
# Time integration
# ---------------------------------------------------------------------------


def rk4_step(state: SheetState, dt: float, settings: EvolutionSettings | None = None) -> SheetState:
    """Classical RK4 on (u±, b±, f, ḟ); geometry and pressure rebuilt per stage."""
    return rk4_step_with_rhs(state, dt, settings)[0]


def rk4_step_with_rhs(state: SheetState, dt: float, settings: EvolutionSettings | None = None,
                      seed: PressureSolution | None = None) -> tuple[SheetState, RhsBundle | None]:
    """RK4 step also returning the first-stage RHS (for diagnostics)."""
    if dt < 0 or not np.isfinite(dt):
        raise ValidationError(f"rk4_step: dt must be >= 0, got {dt}")
    if dt == 0:
        return state, None
    settings = EvolutionSettings() if settings is None else settings
    r1, _ = evaluate_rhs(state, settings, seed)
    k1 = r1.derivative(state)
    s2 = advance(state, k1, dt / 2)
    r2, _ = evaluate_rhs(s2, settings, r1.pressure)
    k2 = r2.derivative(s2)
    s3 = advance(state, k2, dt / 2)
    r3, _ = evaluate_rhs(s3, settings, r2.pressure)
    k3 = r3.derivative(s3)
    s4 = advance(state, k3, dt)
    r4, _ = evaluate_rhs(s4, settings, r3.pressure)
    k4 = r4.derivative(s4)
    combo = StateDerivative(*((a + 2 * b + 2 * c + d) / 6 for a, b, c, d in
                              zip(k1.arrays(), k2.arrays(), k3.arrays(), k4.arrays())))
    out = advance(state, combo, dt)
    if settings.clean_divergence:
        out = clean_divergence(out)
    return out, r1


def state_difference(a: SheetState, b: SheetState) -> float:
    """Max-norm distance between two states (all unknowns, physical samples)."""
    diffs = [max_abs(x - y) if x.ndim > 2 else _trace_max(x - y) for x, y in zip(a.arrays(), b.arrays())]
    return max(diffs)


# ---------------------------------------------------------------------------
# Weighted trajectory norm and Picard iteration
# ---------------------------------------------------------------------------


def rho_grid(rho0: float, count: int = 17) -> np.ndarray:
    """count uniform points strictly inside (0, ρ₀)."""
    return rho0 * np.arange(1, count + 1) / (count + 1)


def weighted_sup(norm_at: Callable[[float, int], float], times: np.ndarray, a: float, rho0: float,
                 rhos: np.ndarray | None = None) -> float:
    """sup over admissible (ρ, t) of N(ρ, t)(ρ₀ − ρ)√(1 − t/(a(ρ₀ − ρ)))."""
    if a <= 0 or rho0 <= 0:
        raise ValidationError(f"weighted norm needs a > 0 and rho0 > 0, got a={a}, rho0={rho0}")
    rhos = rho_grid(rho0) if rhos is None else np.asarray(rhos)
    best, seen = 0.0, False
    for rho in rhos:
        window = a * (rho0 - rho)
        for n, t in enumerate(times):
            if t >= window:
                continue
            seen = True
            best = max(best, norm_at(rho, n) * (rho0 - rho) * math.sqrt(1 - t / window))
    if not seen:
        raise ValidationError("weighted norm: no admissible (rho, t) pair (check a, rho0 and the time grid)")
    return best


@dataclass(frozen=True)
class TrajectoryNormParams:
    r: int = 3
    sigma: float = 0.25
    k_cap: int = 6
    n_cap: int = 12
    front_s: float = 2.5


def _derivative_tables(deriv: StateDerivative, K: int, M: int, p: TrajectoryNormParams):
    grids = {"plus": Grid(K, M, "plus"), "minus": Grid(K, M, "minus")}
    tables = []
    for arr, name in ((deriv.udot_plus, "plus"), (deriv.udot_minus, "minus"),
                      (deriv.bdot_plus, "plus"), (deriv.bdot_minus, "minus")):
        for comp in arr:
            tables.append(derivative_table(LayerField(grids[name], comp), p.r, p.k_cap, p.n_cap))
    ftab = front_table(TangentialSpectrum(deriv.fddot), p.front_s, p.n_cap)
    return tables, ftab


def ea_norm(deriv_trajectory: Sequence[StateDerivative], times: np.ndarray, a: float, rho0: float,
            sigma: float = 0.25, K: int | None = None, M: int | None = None,
            params: TrajectoryNormParams | None = None, rhos: np.ndarray | None = None) -> float:
    """Weighted sup norm of a derivative trajectory (u̇±, ḃ±, f̈).

    The spatial norm at (ρ, t) is the sum of the layered analytic norms of
    every component of u̇± and ḃ± plus the torus norm of f̈ at index 5/2.
    """
    params = TrajectoryNormParams(sigma=sigma) if params is None else replace(params, sigma=sigma)
    times = np.asarray(times, dtype=float)
    if len(deriv_trajectory) != len(times):
        raise ValidationError("ea_norm: trajectory and time grid lengths differ")
    if K is None or M is None:
        shape = deriv_trajectory[0].udot_plus.shape
        K, M = (shape[1] - 1) // 2, shape[-1]
    cache = [_derivative_tables(d, K, M, params) for d in deriv_trajectory]

    def norm_at(rho: float, n: int) -> float:
        tables, ftab = cache[n]
        total = sum(t.brs(rho, params.sigma).value for t in tables)
        return total + float(np.sum(_factorial_weights(rho, params.n_cap) * ftab))

    return weighted_sup(norm_at, times, a, rho0, rhos)


@dataclass
class PicardResult:
    times: np.ndarray
    iterates: list[list[StateDerivative]]
    distances: np.ndarray
    ratios: np.ndarray
    states: list[SheetState]


def _cumulative_trapezoid(values: list[np.ndarray], times: np.ndarray) -> list[np.ndarray]:
    out = [np.zeros_like(values[0])]
    for n in range(1, len(times)):
        out.append(out[-1] + 0.5 * (times[n] - times[n - 1]) * (values[n] + values[n - 1]))
    return out


def integrate_iterate(state0: SheetState, derivs: list[StateDerivative], times: np.ndarray) -> list[SheetState]:
    """States w₀ + ∫ ẇ on the time grid; f uses the double integral of f̈."""
    fields = []
    for j in range(4):
        fields.append(_cumulative_trapezoid([d.arrays()[j] for d in derivs], times))
    fdd = _cumulative_trapezoid([d.fddot for d in derivs], times)
    fdot = [state0.front.fdot.coeffs + x for x in fdd]
    fint = _cumulative_trapezoid(fdot, times)
    base = state0.arrays()
    states = []
    for n, t in enumerate(times):
        arrays = [base[j] + fields[j][n] for j in range(4)]
        arrays += [base[4] + fint[n], fdot[n]]
        states.append(SheetState.from_arrays(arrays, state0.K, state0.M, float(t)))
    return states


def picard_iterate(state0: SheetState, horizon: float, iters: int, n_steps: int = 20, a: float | None = None,
                   rho0: float = 0.5, sigma: float = 0.25, settings: EvolutionSettings | None = None,
                   norm_params: TrajectoryNormParams | None = None) -> PicardResult:
    """Fixed-point iteration ẇ ↦ Υ(w₀ + ∫ẇ) on a uniform time grid, from ẇ⁰ = 0.

    d_m is the weighted distance between iterates m+1 and m; ratios are
    d_{m+1}/d_m.  `a` defaults to horizon/ρ₀ (the grid then covers [0, aρ₀]).
    """
    if horizon <= 0 or iters < 1 or n_steps < 1:
        raise ValidationError("picard_iterate: need horizon > 0, iters >= 1, n_steps >= 1")
    settings = EvolutionSettings() if settings is None else settings
    a = horizon / rho0 if a is None else a
    times = np.linspace(0.0, horizon, n_steps + 1)
    current = [StateDerivative.zeros_like(state0) for _ in times]
    iterates = [current]
    distances = []
    states = [state0]
    for m in range(iters):
        states = integrate_iterate(state0, current, times)
        new = []
        seed = None
        for n, s in enumerate(states):
            try:
                rhs, _ = evaluate_rhs(s, settings, seed)
            except SheetError as exc:
                raise AnalyticWindowExceeded(
                    f"picard_iterate: iterate {m} fails at t={s.t:.6g}: {exc}", m, s.t) from exc
            seed = rhs.pressure
            new.append(rhs.derivative(s))
        diffs = [x - y for x, y in zip(new, current)]
        distances.append(ea_norm(diffs, times, a, rho0, sigma, state0.K, state0.M, norm_params))
        iterates.append(new)
        current = new
    states = integrate_iterate(state0, current, times)
    d = np.asarray(distances)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratios = d[1:] / d[:-1]
    return PicardResult(times, iterates, d, ratios, states)


# ---------------------------------------------------------------------------
# Planar stability criteria
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    """Worst-case (minimum over Γ) margins RHS − LHS of the planar criteria."""

    margin_jump: float       # 2(|H⁺|² + |H⁻|²) − |[u]|²
    margin_cross: float      # 2|H⁺×H⁻|² − |[u]×H⁻|² − |[u]×H⁺|²
    margin_strong: float     # |H⁺×H⁻| − max(|[u]×H⁺|, |[u]×H⁻|)
    cross_nonzero: bool      # H⁺×H⁻ ≠ 0 everywhere on Γ

    @property
    def satisfied(self) -> bool:
        return self.margin_jump >= 0 and self.margin_cross >= 0

    @property
    def strict(self) -> bool:
        return self.cross_nonzero and self.margin_cross > 0

    @property
    def strong(self) -> bool:
        return self.margin_strong > 0


def _trace_samples(x) -> np.ndarray:
    """(3, n, n) physical samples from coefficients, spectra, or constant 3-vectors."""
    if isinstance(x, (list, tuple)) and all(isinstance(c, TangentialSpectrum) for c in x):
        return to_physical_2d(np.stack([c.coeffs for c in x]))
    arr = np.asarray(x)
    if arr.ndim == 1:
        vec = np.zeros(3)
        vec[: arr.size] = arr
        return vec[:, None, None]
    if np.iscomplexobj(arr):
        return to_physical_2d(arr)
    return arr


def stability_margins(u_plus, u_minus, b_plus, b_minus) -> StabilityReport:
    """Planar current-vortex-sheet stability margins from interface traces (b plays H)."""
    up, um, hp, hm = (_trace_samples(x) for x in (u_plus, u_minus, b_plus, b_minus))
    jump = np.broadcast_arrays(up - um, hp)[0]
    cross = lambda x, y: np.cross(x, y, axis=0)
    norm = lambda x: np.sqrt(np.sum(x**2, axis=0))
    hpm = norm(cross(hp, hm))
    m_jump = 2 * (np.sum(hp**2, axis=0) + np.sum(hm**2, axis=0)) - np.sum(jump**2, axis=0)
    c_plus, c_minus = norm(cross(jump, hp)), norm(cross(jump, hm))
    m_cross = 2 * hpm**2 - c_minus**2 - c_plus**2
    m_strong = hpm - np.maximum(c_plus, c_minus)
    return StabilityReport(float(np.min(m_jump)), float(np.min(m_cross)), float(np.min(m_strong)),
                           bool(np.all(hpm > 1e-14)))


def interface_traces(state: SheetState) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Coefficient traces of u±, b± on Γ, each (3, n, n)."""
    ip = state.u_plus.grid.boundary_node("interface")
    im = state.u_minus.grid.boundary_node("interface")
    return (state.u_plus.data[..., ip], state.u_minus.data[..., im],
            state.b_plus.data[..., ip], state.b_minus.data[..., im])
