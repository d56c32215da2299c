"""Command-line entry points: init, run, norms, stability, lift-check."""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_config
from .errors import ConstraintViolated, SheetError, SnapshotError, UndefinedRadius, ValidationError
from .evolution import (
    LAYERS,
    SheetState,
    constraint_defects,
    energy,
    evaluate_rhs,
    initial_data,
    interface_traces,
    max_defect,
    picard_iterate,
    rk4_step_with_rhs,
    stability_margins,
)
from .geometry import lift_identities
from .norms import AnalyticNormParams, estimate_radius, norm_brs, norm_front
from .spectral import LayerField, TangentialSpectrum
from .storage import DiagnosticsWriter, load_snapshot, save_snapshot, write_json

EXIT_OK, EXIT_CHECK_FAILED, EXIT_VALIDATION, EXIT_ABORT = 0, 1, 2, 3
DEFECT_KEYS = (
    "div_u_plus", "div_u_minus", "div_b_plus", "div_b_minus", "u3_jump", "u3_fdot_plus", "u3_fdot_minus",
    "b3_interface_plus", "b3_interface_minus", "u3_wall_plus", "u3_wall_minus", "b3_wall_plus", "b3_wall_minus",
)
FRONT_INDICES = (2.5, 3.5)
LIFT_TOL, PIOLA_TOL = 1e-10, 1e-8


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def initial_state(cfg: RunConfig) -> SheetState:
    return initial_data(cfg.U_plus, cfg.U_minus, cfg.B_plus, cfg.B_minus, cfg.perturbation,
                        cfg.front_amp, cfg.front_mode, cfg.K, cfg.M)


def diagnostic_columns(cfg: RunConfig) -> list[str]:
    cols = ["step", "t", *DEFECT_KEYS, "max_defect", "energy"]
    cols += [f"front_norm_s{s}_rho{rho}" for rho in cfg.norm_rho for s in FRONT_INDICES]
    return cols + ["radius_estimate", "pressure_residual", "pressure_iterations"]


def diagnostic_row(step: int, state: SheetState, cfg: RunConfig, pressure=None) -> dict:
    defects = constraint_defects(state)
    row = {"step": step, "t": state.t, **defects, "max_defect": max_defect(defects),
           "energy": energy(state, cfg.settings())}
    for rho in cfg.norm_rho:
        for s in FRONT_INDICES:
            row[f"front_norm_s{s}_rho{rho}"] = norm_front(state.front.f, rho, s, cfg.n_cap).value
    try:
        row["radius_estimate"] = estimate_radius(state.front.f)
    except UndefinedRadius:
        row["radius_estimate"] = math.inf
    if pressure is not None:
        row["pressure_residual"] = pressure.residual
        row["pressure_iterations"] = pressure.iterations
    return row


def _check_defects(row: dict, cfg: RunConfig) -> None:
    if row["max_defect"] > cfg.abort_tol:
        worst = max(DEFECT_KEYS, key=lambda k: row.get(k, 0.0))
        raise ConstraintViolated(
            f"run: constraint defect {worst} = {row[worst]:.3e} exceeds abort_tol = {cfg.abort_tol:.1e}")


def _time_steps(cfg: RunConfig) -> list[float]:
    n = max(1, math.ceil(cfg.T / cfg.dt - 1e-9))
    steps = [cfg.dt] * n
    steps[-1] = cfg.T - cfg.dt * (n - 1)
    return steps


def run(cfg: RunConfig, out_dir: Path, log=print) -> int:
    """Simulate per cfg, writing config, diagnostics, snapshots and summary into out_dir."""
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "resolved_config.ini").write_text(cfg.to_text())
    summary: dict = {"status": "running", "integrator": cfg.integrator, "K": cfg.K, "M": cfg.M}
    state = t_fail = None
    try:
        state = initial_state(cfg)
        summary["stability_t0"] = stability_summary(state)
        with DiagnosticsWriter(out_dir / cfg.diagnostics, diagnostic_columns(cfg)) as writer:
            if cfg.integrator == "rk4":
                state = _run_rk4(state, cfg, out_dir, writer, log)
            else:
                state = _run_picard(state, cfg, out_dir, writer, summary, log)
        save_snapshot(state, out_dir / "final.snap")
        summary["status"] = "ok"
        summary["final_t"] = state.t
        summary["final_defects"] = constraint_defects(state)
        write_json(out_dir / cfg.summary, summary)
        return EXIT_OK
    except SheetError as exc:
        t_fail = getattr(exc, "time", None)
        if t_fail is None:
            t_fail = getattr(exc, "run_time", state.t if state is not None else 0.0)
        summary.update(status="aborted", error_type=type(exc).__name__, error=str(exc), t_fail=t_fail)
        write_json(out_dir / cfg.summary, summary)
        log(f"run aborted at t={t_fail:.6g}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT


def _tag_time(exc: SheetError, t: float) -> SheetError:
    if getattr(exc, "time", None) is None:
        exc.run_time = t
    return exc


def _run_rk4(state: SheetState, cfg: RunConfig, out_dir: Path, writer, log) -> SheetState:
    settings = cfg.settings()
    seed = None
    for n, dt in enumerate(_time_steps(cfg)):
        try:
            new, rhs = rk4_step_with_rhs(state, dt, settings, seed)
        except SheetError as exc:
            raise _tag_time(exc, state.t)
        row = diagnostic_row(n, state, cfg, rhs.pressure)
        writer.write(row)
        if cfg.snapshot_every and n % cfg.snapshot_every == 0:
            save_snapshot(state, out_dir / f"snapshot_{n:06d}.snap")
        _check_defects_at(row, cfg, state.t)
        seed = rhs.pressure
        state = new
    n = len(_time_steps(cfg))
    try:
        rhs, _ = evaluate_rhs(state, settings, seed)
    except SheetError as exc:
        raise _tag_time(exc, state.t)
    row = diagnostic_row(n, state, cfg, rhs.pressure)
    writer.write(row)
    _check_defects_at(row, cfg, state.t)
    log(f"t={state.t:.6g} max_defect={row['max_defect']:.3e} energy={row['energy']:.12g}")
    return state


def _check_defects_at(row: dict, cfg: RunConfig, t: float) -> None:
    try:
        _check_defects(row, cfg)
    except SheetError as exc:
        raise _tag_time(exc, t)


def _run_picard(state0: SheetState, cfg: RunConfig, out_dir: Path, writer, summary: dict, log) -> SheetState:
    from .evolution import TrajectoryNormParams

    params = TrajectoryNormParams(cfg.norm_r, cfg.sigma, cfg.k_cap, cfg.n_cap)
    result = picard_iterate(state0, cfg.T, cfg.picard_iters, cfg.picard_steps, cfg.a, cfg.rho0, cfg.sigma,
                            cfg.settings(), params)
    summary["picard_distances"] = result.distances
    summary["picard_ratios"] = result.ratios
    seed = None
    for n, s in enumerate(result.states):
        try:
            rhs, _ = evaluate_rhs(s, cfg.settings(), seed)
        except SheetError as exc:
            raise _tag_time(exc, s.t)
        seed = rhs.pressure
        row = diagnostic_row(n, s, cfg, rhs.pressure)
        writer.write(row)
        if cfg.snapshot_every and n % cfg.snapshot_every == 0:
            save_snapshot(s, out_dir / f"snapshot_{n:06d}.snap")
        _check_defects_at(row, cfg, s.t)
    log(f"picard: distances {np.array2string(result.distances, precision=3)}")
    return result.states[-1]


# ---------------------------------------------------------------------------
# snapshot utilities
# ---------------------------------------------------------------------------


def stability_summary(state: SheetState) -> dict:
    rep = stability_margins(*interface_traces(state))
    return {"margin_jump": rep.margin_jump, "margin_cross": rep.margin_cross, "margin_strong": rep.margin_strong,
            "cross_nonzero": rep.cross_nonzero, "satisfied": rep.satisfied, "strict": rep.strict,
            "strong": rep.strong}


NORM_COLUMNS = ["norm_name", "rho", "r", "sigma", "k_cap", "n_cap", "value", "tail_bound"]


def norm_rows(state: SheetState, rhos, r: int, sigma: float, k_cap: int, n_cap: int, front_s=FRONT_INDICES):
    """One row per component field and per front index, for each ρ."""
    rows = []
    for rho in rhos:
        p = AnalyticNormParams(rho=rho, r=r, sigma=sigma, k_cap=k_cap, n_cap=n_cap)
        for kind in ("u", "b"):
            for name in LAYERS:
                vec = getattr(state, f"{kind}_{name}")
                for i in range(3):
                    rep = norm_brs(LayerField(vec.grid, vec.data[i]), p)
                    rows.append([f"{kind}{i + 1}_{name}", rho, r, sigma, k_cap, n_cap, rep.value,
                                 rep.truncation_tail_bound])
        for s in front_s:
            rep = norm_front(state.front.f, rho, s, n_cap)
            rows.append([f"front_s{s}", rho, s, "", "", n_cap, rep.value, rep.truncation_tail_bound])
    return rows


def _front_from_args(args) -> tuple[TangentialSpectrum, int]:
    if args.snapshot:
        state = load_snapshot(args.snapshot)
        return state.front.f, state.M
    cfg = parse_config(Path(args.config).read_text()) if args.config else RunConfig()
    if args.amplitude is not None or args.mode is not None:
        amp = args.amplitude if args.amplitude is not None else cfg.front_amp
        mode = tuple(args.mode) if args.mode is not None else cfg.front_mode
        cfg = RunConfig(**{**cfg.__dict__, "front_amp": amp, "front_mode": mode})
    return cosine_front(cfg.K, cfg.front_amp, cfg.front_mode), cfg.M


def cosine_front(K: int, amp: float, mode: tuple[int, int]) -> TangentialSpectrum:
    """amp·cos(2π mode·x′) without any admissibility check."""
    n = 2 * K + 1
    c = np.zeros((n, n), dtype=complex)
    c[mode[0] % n, mode[1] % n] += 0.5 * amp
    c[-mode[0] % n, -mode[1] % n] += 0.5 * amp
    return TangentialSpectrum(c)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cvsheet", description="Current-vortex-sheet solver toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="emit the default configuration")
    p.add_argument("-o", "--output", help="write to this file instead of stdout")

    p = sub.add_parser("run", help="simulate from a configuration file")
    p.add_argument("config", nargs="?", help="INI configuration (defaults when omitted)")
    p.add_argument("-d", "--output-dir", help="override [output] directory")

    p = sub.add_parser("norms", help="analytic norms of a snapshot")
    p.add_argument("snapshot")
    p.add_argument("--rho", type=float, nargs="+", default=[0.1, 0.25])
    p.add_argument("--r", type=int, default=3)
    p.add_argument("--sigma", type=float, default=0.25)
    p.add_argument("--k-cap", type=int, default=6)
    p.add_argument("--n-cap", type=int, default=12)
    p.add_argument("-o", "--output", help="CSV path (stdout when omitted)")

    p = sub.add_parser("stability", help="planar stability margins of a snapshot's interface traces")
    p.add_argument("snapshot")

    p = sub.add_parser("lift-check", help="lifting trace and Piola identity residuals for a front")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--snapshot")
    src.add_argument("--config")
    p.add_argument("--amplitude", type=float)
    p.add_argument("--mode", type=int, nargs=2)
    p.add_argument("--symbol-scale", type=float, default=1.0)
    return parser


def _cmd_init(args) -> int:
    text = RunConfig().to_text()
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_run(args) -> int:
    cfg = parse_config(Path(args.config).read_text()) if args.config else RunConfig()
    sys.stdout.write(cfg.to_text())
    out_dir = Path(args.output_dir or cfg.directory)
    return run(cfg, out_dir)


def _cmd_norms(args) -> int:
    state = load_snapshot(args.snapshot)
    rows = norm_rows(state, args.rho, args.r, args.sigma, args.k_cap, args.n_cap)
    fh = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(fh)
        w.writerow(NORM_COLUMNS)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, float) else v for v in row])
    finally:
        if args.output:
            fh.close()
    return EXIT_OK


def _cmd_stability(args) -> int:
    state = load_snapshot(args.snapshot)
    print(json.dumps(stability_summary(state), indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_lift_check(args) -> int:
    if args.symbol_scale <= 0:
        raise ValidationError(f"lift-check: symbol_scale must be > 0, got {args.symbol_scale}")
    f, M = _front_from_args(args)
    res = lift_identities(f, M, args.symbol_scale)
    ok = max(res["trace_interface"], res["trace_walls"], res["slope_interface"]) <= LIFT_TOL \
        and res["piola"] <= PIOLA_TOL
    res["ok"] = ok
    print(json.dumps(res, indent=2, sort_keys=True))
    return EXIT_OK if ok else EXIT_CHECK_FAILED


COMMANDS = {"init": _cmd_init, "run": _cmd_run, "norms": _cmd_norms, "stability": _cmd_stability,
            "lift-check": _cmd_lift_check}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, SnapshotError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except SheetError as exc:
        print(f"solver abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
