"""Run configuration: INI text with sections, defaults for every key."""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields

from .errors import ValidationError
from .evolution import EvolutionSettings, ModeSpec
from .pressure import JUMP_VARIANTS, PressureTolerances

INTEGRATORS = ("rk4", "picard")


def _floats(text: str, count: int | None = None, name: str = "") -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError as exc:
        raise ValidationError(f"{name}: cannot parse numbers from {text!r}") from exc
    if count is not None and len(vals) != count:
        raise ValidationError(f"{name}: expected {count} numbers, got {len(vals)} in {text!r}")
    return vals


def _ints(text: str, count: int, name: str) -> tuple[int, ...]:
    vals = _floats(text, count, name)
    if any(v != int(v) for v in vals):
        raise ValidationError(f"{name}: expected integers, got {text!r}")
    return tuple(int(v) for v in vals)


def _bool(text: str, name: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValidationError(f"{name}: expected a boolean, got {text!r}")


def parse_modes(text: str) -> tuple[ModeSpec, ...]:
    """'k1 k2 u_amp [b_amp [shear_u [shear_b]]]' entries separated by ';' (complex amplitudes allowed)."""
    modes = []
    for entry in text.split(";"):
        tokens = entry.split()
        if not tokens:
            continue
        if len(tokens) < 3 or len(tokens) > 6:
            raise ValidationError(f"physics.perturbation: cannot parse mode entry {entry.strip()!r}")
        try:
            k = (int(tokens[0]), int(tokens[1]))
            amps = [complex(t) for t in tokens[2:]]
        except ValueError as exc:
            raise ValidationError(f"physics.perturbation: cannot parse mode entry {entry.strip()!r}") from exc
        amps += [0j] * (4 - len(amps))
        modes.append(ModeSpec(k, *amps))
    return tuple(modes)


def format_modes(modes) -> str:
    def fmt(z: complex) -> str:
        return repr(z.real) if z.imag == 0 else repr(complex(z)).strip("()")

    return "; ".join(" ".join([str(m.k[0]), str(m.k[1])] + [fmt(complex(a)) for a in
                                (m.u_amp, m.b_amp, m.shear_u, m.shear_b)]) for m in modes)


@dataclass(frozen=True)
class RunConfig:
    # grid
    K: int = 16
    M: int = 33
    # physics
    U_plus: tuple[float, float] = (0.0, 0.0)
    U_minus: tuple[float, float] = (0.0, 0.0)
    B_plus: tuple[float, float] = (0.0, 0.0)
    B_minus: tuple[float, float] = (0.0, 0.0)
    perturbation: tuple[ModeSpec, ...] = ()
    front_amp: float = 0.0
    front_mode: tuple[int, int] = (1, 0)
    symbol_scale: float = 1.0
    # time
    dt: float = 0.01
    T: float = 0.1
    integrator: str = "rk4"
    picard_iters: int = 6
    picard_steps: int = 20
    a: float = 0.2
    rho0: float = 0.5
    sigma: float = 0.25
    # tolerances
    constraint_tol: float = 1e-8
    comp_tol: float = 1e-6
    iter_tol: float = 1e-10
    quad_tol: float = 1e-12
    abort_tol: float = 1e-4
    max_iter: int = 200
    # norms
    norm_rho: tuple[float, ...] = (0.1, 0.25)
    norm_r: int = 3
    norm_sigma: float = 0.25
    k_cap: int = 6
    n_cap: int = 12
    # solver
    jump_source_variant: str = "dt_form"
    clean_divergence: bool = False
    # output
    directory: str = "out"
    diagnostics: str = "diagnostics.csv"
    summary: str = "summary.json"
    snapshot_every: int = 0

    def __post_init__(self):
        validate(self)

    def settings(self) -> EvolutionSettings:
        tol = PressureTolerances(self.quad_tol, self.comp_tol, self.iter_tol, self.max_iter)
        return EvolutionSettings(self.symbol_scale, self.jump_source_variant, tol, self.abort_tol,
                                 self.clean_divergence)

    def to_text(self) -> str:
        cp = configparser.ConfigParser()
        cp.optionxform = str
        for section, keys in SECTIONS.items():
            cp[section] = {key: _format_value(getattr(self, attr)) if attr != "perturbation"
                           else format_modes(self.perturbation) for key, attr in keys.items()}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


# INI section → {key: RunConfig attribute}
SECTIONS: dict[str, dict[str, str]] = {
    "grid": {"K": "K", "M": "M"},
    "physics": {
        "U_plus": "U_plus", "U_minus": "U_minus", "B_plus": "B_plus", "B_minus": "B_minus",
        "perturbation": "perturbation", "front_amp": "front_amp", "front_mode": "front_mode",
        "symbol_scale": "symbol_scale",
    },
    "time": {
        "dt": "dt", "T": "T", "integrator": "integrator", "picard_iters": "picard_iters",
        "picard_steps": "picard_steps", "a": "a", "rho0": "rho0", "sigma": "sigma",
    },
    "tolerances": {
        "constraint_tol": "constraint_tol", "comp_tol": "comp_tol", "iter_tol": "iter_tol",
        "quad_tol": "quad_tol", "abort_tol": "abort_tol", "max_iter": "max_iter",
    },
    "norms": {"rho": "norm_rho", "r": "norm_r", "sigma": "norm_sigma", "k_cap": "k_cap", "n_cap": "n_cap"},
    "solver": {"jump_source_variant": "jump_source_variant", "clean_divergence": "clean_divergence"},
    "output": {"directory": "directory", "diagnostics": "diagnostics", "summary": "summary",
               "snapshot_every": "snapshot_every"},
}


def _format_value(v) -> str:
    if isinstance(v, tuple):
        return ", ".join(repr(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _convert(attr: str, text: str, name: str):
    default = {f.name: f.default for f in fields(RunConfig)}[attr]
    if attr == "perturbation":
        return parse_modes(text)
    if attr == "front_mode":
        return _ints(text, 2, name)
    if attr in ("U_plus", "U_minus", "B_plus", "B_minus"):
        return _floats(text, 2, name)
    if attr == "norm_rho":
        return _floats(text, None, name)
    if isinstance(default, bool):
        return _bool(text, name)
    if isinstance(default, int):
        vals = _floats(text, 1, name)
        if vals[0] != int(vals[0]):
            raise ValidationError(f"{name}: expected an integer, got {text!r}")
        return int(vals[0])
    if isinstance(default, float):
        return _floats(text, 1, name)[0]
    return text.strip()


def validate(c: RunConfig) -> None:
    """Raise ValidationError naming the first offending field."""
    def need(ok: bool, name: str, why: str):
        if not ok:
            raise ValidationError(f"{name}: {why}")

    need(c.K >= 1, "grid.K", f"must be >= 1, got {c.K}")
    need(c.M >= 5 and c.M % 2 == 1, "grid.M", f"must be odd and >= 5, got {c.M}")
    need(c.dt > 0, "time.dt", f"must be > 0, got {c.dt}")
    need(c.T > 0, "time.T", f"must be > 0, got {c.T}")
    need(c.integrator in INTEGRATORS, "time.integrator", f"must be one of {INTEGRATORS}, got {c.integrator!r}")
    need(c.picard_iters >= 1 or c.integrator != "picard", "time.picard_iters",
         f"must be >= 1 for the picard integrator, got {c.picard_iters}")
    need(c.picard_steps >= 1, "time.picard_steps", f"must be >= 1, got {c.picard_steps}")
    need(c.a > 0, "time.a", f"must be > 0, got {c.a}")
    need(0 < c.rho0 <= 1, "time.rho0", f"must lie in (0, 1], got {c.rho0}")
    need(0 < c.sigma <= 0.5, "time.sigma", f"must lie in (0, 1/2], got {c.sigma}")
    for name in ("constraint_tol", "comp_tol", "iter_tol", "quad_tol", "abort_tol"):
        need(getattr(c, name) > 0, f"tolerances.{name}", f"must be > 0, got {getattr(c, name)}")
    need(c.max_iter >= 1, "tolerances.max_iter", f"must be >= 1, got {c.max_iter}")
    need(len(c.norm_rho) >= 1, "norms.rho", "needs at least one radius")
    for rho in c.norm_rho:
        need(0 < rho <= c.rho0, "norms.rho", f"each radius must lie in (0, rho0={c.rho0}], got {rho}")
    need(c.norm_r >= 0, "norms.r", f"must be >= 0, got {c.norm_r}")
    need(0 < c.norm_sigma <= 0.5, "norms.sigma", f"must lie in (0, 1/2], got {c.norm_sigma}")
    need(0 <= c.k_cap <= c.n_cap, "norms.k_cap", f"need 0 <= k_cap <= n_cap, got {c.k_cap}, {c.n_cap}")
    need(c.jump_source_variant in JUMP_VARIANTS, "solver.jump_source_variant",
         f"must be one of {JUMP_VARIANTS}, got {c.jump_source_variant!r}")
    need(c.symbol_scale > 0, "physics.symbol_scale", f"must be > 0, got {c.symbol_scale}")
    need(c.snapshot_every >= 0, "output.snapshot_every", f"must be >= 0, got {c.snapshot_every}")
    m1, m2 = c.front_mode
    need((m1, m2) != (0, 0) and max(abs(m1), abs(m2)) <= c.K, "physics.front_mode",
         f"must be nonzero with |k| <= K, got {c.front_mode}")
    for m in c.perturbation:
        need(max(abs(m.k[0]), abs(m.k[1])) <= c.K, "physics.perturbation", f"mode {m.k} exceeds K={c.K}")


def parse_config(text: str) -> RunConfig:
    """Parse INI text; every omitted key takes its default."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ValidationError(f"config: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SECTIONS:
            raise ValidationError(f"config: unknown section [{section}]; valid sections: {', '.join(SECTIONS)}")
        keys = SECTIONS[section]
        for key, raw in cp[section].items():
            if key not in keys:
                raise ValidationError(
                    f"config: unknown key {section}.{key}; valid keys: {', '.join(keys)}")
            values[keys[key]] = _convert(keys[key], raw, f"{section}.{key}")
    return RunConfig(**values)
