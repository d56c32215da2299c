"""Truncated analytic norms on layers and on the torus.

A layer field u is measured by

    ‖u‖_{ρ,r}^k   = Σ_n ρⁿ/n! max_{|α|=n, α₃≤k} ‖∂^α u‖_{H^r}
    ‖u‖_{ρ,r,σ}   = Σ_k σ^k ‖u‖_{ρ,r}^k

with the sums cut at n ≤ n_cap and k ≤ k_cap.  All maxima for one field are
collected once in a `DerivativeTable`, so that evaluating many radii is cheap.
High-order x₃-derivatives are taken on chopped Chebyshev coefficients.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import OrderTooHigh, UndefinedRadius, ValidationError
from .geometry import lift_front
from .spectral import (
    Grid,
    LayerField,
    TangentialSpectrum,
    cheb_coefficients,
    cheb_derivative_coefficients,
    cheb_values,
    hermitian_symmetrize,
    normal_derivative,
    pointwise_product,
    tangential_derivative,
    to_physical,
    to_spectral,
    torus_weight,
    trace,
)

CHOP_TOL = 1e-13
AMPLIFICATION_CAP = 1e3
NEGLIGIBLE = 1e-12


@dataclass(frozen=True)
class AnalyticNormParams:
    rho: float
    rho0: float = 0.5
    r: float = 3
    sigma: float = 0.25
    k_cap: int = 6
    n_cap: int = 12

    def __post_init__(self):
        if not 0 < self.rho <= self.rho0 <= 1:
            raise ValidationError(f"need 0 < rho <= rho0 <= 1, got rho={self.rho}, rho0={self.rho0}")
        if not 0 < self.sigma <= 0.5:
            raise ValidationError(f"sigma must lie in (0, 1/2], got {self.sigma}")
        if self.r < 0 or 2 * self.r != int(2 * self.r):
            raise ValidationError(f"r must be a nonnegative integer or half-integer, got {self.r}")
        if self.k_cap < 0 or self.n_cap < self.k_cap:
            raise ValidationError(f"need 0 <= k_cap <= n_cap, got k_cap={self.k_cap}, n_cap={self.n_cap}")

    def with_rho(self, rho: float) -> "AnalyticNormParams":
        return AnalyticNormParams(rho, self.rho0, self.r, self.sigma, self.k_cap, self.n_cap)


@dataclass(frozen=True)
class NormReport:
    value: float
    truncation_tail_bound: float
    per_n_terms: np.ndarray


def _layer_r(r: float) -> int:
    if r != int(r) or r < 0:
        raise ValidationError(f"layer norms need an integer r >= 0, got {r}")
    return int(r)


def _geometric_tail(terms: np.ndarray) -> float:
    """Tail estimate from the ratio of the last two terms."""
    if len(terms) < 2 or terms[-1] == 0.0:
        return 0.0
    if terms[-2] == 0.0:
        return math.inf
    q = terms[-1] / terms[-2]
    return float(terms[-1] * q / (1 - q)) if q < 1 else math.inf


def _factorial_weights(rho: float, n_cap: int) -> np.ndarray:
    n = np.arange(n_cap + 1)
    return np.array([rho**j / math.factorial(j) for j in n])


# ---------------------------------------------------------------------------
# Derivative tables
# ---------------------------------------------------------------------------


def normal_derivative_integrals(u: LayerField, q_max: int) -> np.ndarray:
    """I[q, k₁, k₂] = ∫ |∂₃^q û_k|² dx₃ over the layer(s) of u's grid.

    Raises OrderTooHigh when one more derivative amplifies the field by more
    than AMPLIFICATION_CAP, which signals that round-off is being amplified.
    """
    grid = u.grid
    parts = [(grid, u.data)]
    if grid.layer == "whole":
        parts = [(grid.sub(name), u.data[..., grid.layer_slice(name)]) for name in ("minus", "plus")]
    out = np.zeros((q_max + 1, grid.n, grid.n))
    for sub, data in parts:
        lo, hi = sub.bounds
        c = cheb_coefficients(data)
        peak = np.max(np.abs(c)) if c.size else 0.0
        c[np.abs(c) < CHOP_TOL * peak] = 0.0
        for q in range(q_max + 1):
            out[q] += np.abs(cheb_values(c)) ** 2 @ sub.weights
            c = cheb_derivative_coefficients(c, 2.0 / (hi - lo))
    levels = np.sqrt(out.sum(axis=(1, 2)))
    top = levels.max() if levels.size else 0.0
    for q in range(1, q_max + 1):
        prev = levels[q - 1]
        if prev > NEGLIGIBLE * top and levels[q] > AMPLIFICATION_CAP * prev:
            raise OrderTooHigh(
                f"normal derivative of order {q} amplifies by {levels[q] / prev:.3g} (> {AMPLIFICATION_CAP:g})"
            )
    return out


def _tangential_powers(grid: Grid, n_max: int) -> tuple[np.ndarray, np.ndarray]:
    k1, k2 = grid.kappa
    powers = np.arange(n_max + 1)[:, None]
    return (k1.ravel()[None, :] ** 2) ** powers, (k2.ravel()[None, :] ** 2) ** powers


def _antidiagonal_max(V: np.ndarray, t: int) -> float:
    a = np.arange(t + 1)
    return float(np.sqrt(max(np.max(V[a, t - a]), 0.0)))


@dataclass(frozen=True)
class DerivativeTable:
    """table[n, a3] = max over |α| = n with α₃ = a3 of ‖∂^α u‖_{H^r} (nan if a3 > n)."""

    table: np.ndarray
    r: float

    @property
    def n_cap(self) -> int:
        return self.table.shape[0] - 1

    @property
    def k_cap(self) -> int:
        return self.table.shape[1] - 1

    def level_max(self, k: int, n_cap: int | None = None) -> np.ndarray:
        """max over α₃ ≤ k of table[n, α₃], for n = 0..n_cap."""
        n_cap = self.n_cap if n_cap is None else n_cap
        if k > self.k_cap or n_cap > self.n_cap:
            raise ValueError(f"table holds k <= {self.k_cap}, n <= {self.n_cap}")
        sub = self.table[: n_cap + 1, : k + 1]
        return np.nanmax(sub, axis=1)

    def bk(self, rho: float, k: int, n_cap: int | None = None) -> NormReport:
        terms = _factorial_weights(rho, self.n_cap if n_cap is None else n_cap) * self.level_max(k, n_cap)
        return NormReport(float(terms.sum()), _geometric_tail(terms), terms)

    def brs(self, rho: float, sigma: float, k_cap: int | None = None, n_cap: int | None = None) -> NormReport:
        k_cap = self.k_cap if k_cap is None else k_cap
        reports = [self.bk(rho, k, n_cap) for k in range(k_cap + 1)]
        terms = sum(sigma**k * rep.per_n_terms for k, rep in enumerate(reports))
        tail = sigma ** (k_cap + 1) / (1 - sigma) * reports[-1].value
        tail += sum(sigma**k * rep.truncation_tail_bound for k, rep in enumerate(reports))
        return NormReport(float(terms.sum()), float(tail), terms)


def derivative_table(u: LayerField, r: float, k_cap: int, n_cap: int) -> DerivativeTable:
    """Collect max_{|α|=n, α₃=a3} ‖∂^α u‖_{H^r} for n ≤ n_cap, a3 ≤ min(n, k_cap)."""
    r = _layer_r(r)
    grid = u.grid
    I = normal_derivative_integrals(u, k_cap + r)
    w = 1.0 + grid.kappa_sq
    P1, P2 = _tangential_powers(grid, n_cap)
    table = np.full((n_cap + 1, k_cap + 1), np.nan)
    for a3 in range(k_cap + 1):
        S = sum(w ** (r - j) * I[a3 + j] for j in range(r + 1)).ravel()
        V = (P1 * S) @ P2.T
        for n in range(a3, n_cap + 1):
            table[n, a3] = _antidiagonal_max(V, n - a3)
    return DerivativeTable(table, r)


def front_table(f: TangentialSpectrum, s: float, n_cap: int) -> np.ndarray:
    """table[n] = max_{|α′|=n} ‖∂^{α′} f‖_{H^s(T²)}."""
    grid = Grid(f.K, 5)
    S = (torus_weight(f.K, s) * np.abs(f.coeffs) ** 2).ravel()
    P1, P2 = _tangential_powers(grid, n_cap)
    V = (P1 * S) @ P2.T
    return np.array([_antidiagonal_max(V, n) for n in range(n_cap + 1)])


# ---------------------------------------------------------------------------
# Public norms
# ---------------------------------------------------------------------------


def norm_bk(u: LayerField, p: AnalyticNormParams, k: int | None = None) -> NormReport:
    """‖u‖_{ρ,r}^k truncated at n ≤ n_cap (k defaults to k_cap)."""
    k = p.k_cap if k is None else k
    if not 0 <= k <= p.k_cap:
        raise ValidationError(f"k must lie in [0, k_cap={p.k_cap}], got {k}")
    return derivative_table(u, p.r, k, p.n_cap).bk(p.rho, k)


def norm_brs(u: LayerField, p: AnalyticNormParams) -> NormReport:
    """‖u‖_{ρ,r,σ} truncated at k ≤ k_cap and n ≤ n_cap."""
    return derivative_table(u, p.r, p.k_cap, p.n_cap).brs(p.rho, p.sigma)


def norm_front(f: TangentialSpectrum, rho: float, s: float, n_cap: int = 12) -> NormReport:
    """‖f‖_{ρ,s} on the torus, truncated at n ≤ n_cap."""
    if s < 0:
        raise ValidationError(f"s must be >= 0, got {s}")
    terms = _factorial_weights(rho, n_cap) * front_table(f, s, n_cap)
    return NormReport(float(terms.sum()), _geometric_tail(terms), terms)


# ---------------------------------------------------------------------------
# Radius of analyticity
# ---------------------------------------------------------------------------


def shell_maxima(f: TangentialSpectrum | LayerField) -> np.ndarray:
    """max |c_k| over each |k|∞ shell m = 0..K (max over x₃ for layer fields)."""
    if isinstance(f, LayerField):
        amp, K = np.max(np.abs(f.data), axis=-1), f.grid.K
    else:
        amp, K = np.abs(f.coeffs), f.K
    modes = np.fft.fftfreq(2 * K + 1, d=1.0 / (2 * K + 1)).round().astype(int)
    shell = np.maximum(np.abs(modes)[:, None], np.abs(modes)[None, :])
    out = np.zeros(K + 1)
    np.maximum.at(out, shell.ravel(), amp.ravel())
    return out


def estimate_radius(f: TangentialSpectrum | LayerField) -> float:
    """Radius τ/(2π) from a fit |c_k| ~ e^{−τ|k|} over the shells [K/4, 3K/4].

    Returns inf (at or beyond the grid cutoff) when fewer than three shells
    in the fit window rise above the round-off floor, which is the case for
    finite trigonometric polynomials.
    """
    shells = shell_maxima(f)
    K = len(shells) - 1
    top = shells.max()
    if top == 0.0:
        raise UndefinedRadius("radius of an all-zero spectrum is undefined")
    m = np.arange(K + 1)
    window = (m >= max(1, K // 4)) & (m <= math.ceil(3 * K / 4)) & (shells > CHOP_TOL * top)
    if window.sum() < 3:
        return math.inf
    slope = -np.polyfit(m[window], np.log(shells[window]), 1)[0]
    return float(max(slope, 0.0) / (2 * np.pi))


# ---------------------------------------------------------------------------
# Empirical inequality suite
# ---------------------------------------------------------------------------


@dataclass
class InequalityResult:
    """max over the corpus of LHS / (RHS without its constant)."""

    name: str
    max_ratio: float
    constant: float | None = None
    ratios: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @property
    def holds(self) -> bool:
        if not np.isfinite(self.max_ratio):
            return False
        return self.constant is None or self.max_ratio <= self.constant * (1 + 1e-9)


def random_layer_field(grid: Grid, rng: np.random.Generator, band: int, decay: float = 0.4,
                       degree: int = 4) -> LayerField:
    """Real random field: modes |k|∞ ≤ band with e^{−decay|k|} envelope, polynomial in x₃."""
    n = grid.n
    modes = grid.modes
    mask = (np.abs(modes)[:, None] <= band) & (np.abs(modes)[None, :] <= band)
    env = np.exp(-decay * np.sqrt(grid.k1**2 + grid.k2**2)) * mask
    coef = rng.standard_normal((n, n, degree + 1)) + 1j * rng.standard_normal((n, n, degree + 1))
    basis = grid.x3[None, :] ** np.arange(degree + 1)[:, None]
    data = (env[..., None] * coef) @ basis
    return LayerField(grid, hermitian_symmetrize(data))


def random_front(K: int, rng: np.random.Generator, band: int, decay: float = 0.4) -> TangentialSpectrum:
    grid = Grid(K, 5)
    mask = (np.abs(grid.modes)[:, None] <= band) & (np.abs(grid.modes)[None, :] <= band)
    env = np.exp(-decay * np.sqrt(grid.k1**2 + grid.k2**2)) * mask
    coef = rng.standard_normal((grid.n, grid.n)) + 1j * rng.standard_normal((grid.n, grid.n))
    return TangentialSpectrum(hermitian_symmetrize((env * coef)[..., None])[..., 0])


def _reciprocal(g: LayerField) -> LayerField:
    """1/(1+g) sampled on the padded grid and truncated to |k| ≤ K."""
    vals = to_physical(g.data, g.grid.n_pad)
    return LayerField(g.grid, to_spectral(1.0 / (1.0 + vals), g.grid.K))


def inequality_suite(p: AnalyticNormParams, corpus_size: int = 50, K: int = 8, M: int = 17,
                     seed: int = 0, neumann_size: float = 0.05) -> dict[str, InequalityResult]:
    """Evaluate the differentiation, algebra, trace, lifting and Neumann bounds on a random corpus.

    The corpus is deterministic in (seed, corpus_size), and a corpus of size
    2N starts with the corpus of size N.
    """
    r, sig = _layer_r(p.r), p.sigma
    rho, rho_s = p.rho, p.rho / 2
    kc, nc = p.k_cap, p.n_cap
    band = K // 2
    plus, whole = Grid(K, M, "plus"), Grid(K, M, "whole")
    rng = np.random.default_rng(seed)
    ratios: dict[str, list[float]] = {name: [] for name in (
        "tangential_derivative", "normal_derivative", "sobolev_shift", "layered_derivative",
        "algebra_bk", "algebra", "trace", "lifting", "neumann")}

    def table(u, rr=r, k=kc + 1, n=nc + 1):
        return derivative_table(u, rr, k, n)

    for _ in range(corpus_size):
        u = random_layer_field(plus, rng, band)
        v = random_layer_field(plus, rng, band)
        f = random_front(K, rng, band)
        g = random_layer_field(plus, rng, band)

        tu = table(u)
        d1 = [tangential_derivative(u, 1), tangential_derivative(u, 2)]
        d3 = normal_derivative(u)
        t_d1 = [table(d) for d in d1]
        t_d3 = table(d3)
        for k in range(kc + 1):
            rhs = tu.bk(rho, k, nc + 1).value
            for t in t_d1:
                ratios["tangential_derivative"].append(t.bk(rho_s, k, nc).value * (rho - rho_s) / rhs)
            if k >= 1:
                ratios["normal_derivative"].append(t_d3.bk(rho_s, k - 1, nc).value * (rho - rho_s) / rhs)
        if r >= 1:
            tu_low = [table(d, r - 1, kc, nc) for d in (*d1, d3)]
            for k in range(kc + 1):
                base = tu.bk(rho, k, nc).value
                ratios["sobolev_shift"].extend(t.bk(rho, k, nc).value / base for t in tu_low)
        base_brs = tu.brs(rho, sig, kc + 1, nc + 1).value
        for t in (*t_d1, t_d3):
            ratios["layered_derivative"].append(t.brs(rho_s, sig, kc, nc).value / base_brs)

        uv = pointwise_product(u, v)
        tv, tuv = table(v, k=kc, n=nc), table(uv, k=kc, n=nc)
        ratios["algebra_bk"].append(tuv.bk(rho, kc).value / (tu.bk(rho, kc, nc).value * tv.bk(rho, kc).value))
        ratios["algebra"].append(
            tuv.brs(rho, sig).value / (tu.brs(rho, sig, kc, nc).value * tv.brs(rho, sig).value))

        u_norm = tu.brs(rho, sig, kc, nc).value
        ratios["trace"].append(norm_front(trace(u, "interface"), rho, r - 0.5, nc).value / u_norm)

        psi = lift_front(f, whole)
        ratios["lifting"].append(
            table(psi, k=kc, n=nc).brs(rho, sig).value / norm_front(f, rho, r - 0.5, nc).value)

        tg = table(g, k=kc, n=nc)
        g = g * (neumann_size / tg.brs(rho, sig).value)
        one = LayerField.constant(plus, 1.0)
        ratios["neumann"].append(
            table(_reciprocal(g), k=kc, n=nc).brs(rho, sig).value / table(one, k=kc, n=nc).brs(rho, sig).value)

    explicit = {
        "tangential_derivative": 1.0,
        "normal_derivative": 1.0,
        "sobolev_shift": 1.0,
        "layered_derivative": 1.0 / (sig * (rho - rho_s)),
    }
    return {
        name: InequalityResult(name, float(np.max(vals)) if vals else math.nan, explicit.get(name),
                               np.asarray(vals))
        for name, vals in ratios.items()
    }
