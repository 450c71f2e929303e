"""Command line driver: validate -> normalize -> reduced -> bifurcation -> branch.

    agebif <validate|reduced|bifurcation|branch|scan|convergence> --config PATH --out DIR [--threads N]

Exit codes: 0 ok, 1 parse error, 2 validation failure, 3 solver failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ._parallel import resolve_threads
from .bifurcate import analyze, uniqueness_scan
from .branch import continue_branch
from .config import ConfigError, ConstraintError, RunConfig, load_config
from .discretize import SingularOperatorError, age_integral
from .model import normalize_birth, principal_eigenvalue, validate
from .reduced import eta_scan, solve_reduced
from .spectral import ConvergenceError, PositivityError, SingularMatrixError

COMMANDS = ("validate", "reduced", "bifurcation", "branch", "scan", "convergence")
EXIT_OK, EXIT_PARSE, EXIT_VALIDATION, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4
BRANCH_HEADER = "eps,xi,norm_u,norm_v,min_u,min_v,residual,newton_iters"


class ValidationFailed(Exception):
    pass


@dataclass
class RunSummary:
    values: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    def render(self) -> str:
        return "".join(f"{k}={_fmt(v)}\n" for k, v in self.values.items())


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_matrix(path: Path, M) -> None:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    path.write_text("".join(",".join(repr(float(x)) for x in row) + "\n" for row in M))


def write_table(path: Path, header: str, rows) -> None:
    path.write_text(header + "\n" + "".join(",".join(_fmt(x) for x in row) + "\n" for row in rows))


def check_model(cfg: RunConfig, summary: RunSummary) -> None:
    report = validate(cfg.model, cfg.z_max, cfg.rho)
    for c in report.checks:
        summary.values[f"check_{c.name}"] = "PASS" if c.passed else f"FAIL ({c.message})"
    summary.values["delta"] = report.delta
    summary.values["status"] = "ok" if report.ok else "fail"
    if not report.ok:
        raise ValidationFailed("; ".join(c.message for c in report.failures()))


def prepare(cfg: RunConfig, summary: RunSummary, grid=None):
    """Validate, build the grid and normalize the birth profile."""
    check_model(cfg, summary)
    grid = grid or cfg.model.grid(cfg.nx, cfg.na)
    spec = normalize_birth(cfg.model, grid, cfg.scheme)
    summary.values["lambda1"] = principal_eigenvalue(grid)[0]
    return spec, grid


def _bifurcation(cfg, spec, grid, threads, summary):
    u_eta = solve_reduced(spec, grid, cfg.eta, tol=cfg.reduced_tol, scheme=cfg.scheme, threads=threads)
    if u_eta.status != "positive":
        raise ConvergenceError(f"no positive semi-trivial state at eta={cfg.eta} (status {u_eta.status})")
    bif = analyze(spec, grid, u_eta, cfg.scheme, threads)
    d = bif.diagnostics
    summary.values.update({
        "eta": cfg.eta,
        "reduced_residual": u_eta.residual,
        "reduced_newton_iters": u_eta.newton_iters,
        "u_eta_sup": u_eta.sup_norm,
        "xi0": bif.xi0,
        "gap": d["gap"],
        "r_etaG1": d["r_etaG1"],
        "etaG2_defect": d["etaG2_defect"],
        "kernel_residual": d["kernel_residual"],
        "overlap": d["overlap"],
        "transversal": d["gap"] > 0 and d["overlap"] > 0,
    })
    return u_eta, bif


def _write_bifurcation(out: Path, spec, grid, u_eta, bif):
    write_matrix(out / "u_field.csv", u_eta.field)
    write_matrix(out / "psi_star.csv", bif.psi_star)
    write_matrix(out / "phi_star.csv", bif.phi_star)
    U_hat = age_integral(u_eta.field, spec.omega, grid)
    write_table(out / "profiles.csv", "x,Psi0,Phi0,u_eta0,U_hat_eta",
                zip(grid.x, bif.Psi0, bif.Phi0, u_eta.trace0, U_hat))


def run(command: str, cfg: RunConfig, out, threads: int = 1) -> RunSummary:
    """Execute one subcommand and write its files into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = RunSummary()
    summary.values["command"] = command
    t0 = time.perf_counter()
    try:
        if command == "validate":
            check_model(cfg, summary)
            return summary

        spec, grid = prepare(cfg, summary)

        if command == "reduced":
            rows = eta_scan(spec, grid, sorted(cfg.eta_scan), cfg.reduced_tol, cfg.scheme, threads)
            write_table(out / "reduced.csv", "eta,sup_norm,min_trace0,newton_iters,status",
                        [(r.eta, r.sup_norm, r.min_trace0, r.newton_iters, r.status) for r in rows])
            summary.values["rows"] = len(rows)

        elif command == "bifurcation":
            u_eta, bif = _bifurcation(cfg, spec, grid, threads, summary)
            _write_bifurcation(out, spec, grid, u_eta, bif)

        elif command == "branch":
            u_eta, bif = _bifurcation(cfg, spec, grid, threads, summary)
            _write_bifurcation(out, spec, grid, u_eta, bif)
            br = continue_branch(spec, grid, cfg.eta, bif, u_eta, cfg.eps0, cfg.ds, cfg.n_steps,
                                 cfg.tol, cfg.scheme, threads, cfg.max_iter)
            rows = [(p.eps, p.xi, float(np.max(np.abs(p.state.u_field))), float(np.max(np.abs(p.state.v_field))),
                     p.min_u, p.min_v, p.residual, p.newton_iters) for p in br.points]
            write_table(out / "branch.csv", BRANCH_HEADER, rows)
            last = br.points[-1].state
            write_matrix(out / "u_field.csv", last.u_field)
            write_matrix(out / "v_field.csv", last.v_field)
            summary.values.update({
                "branch_points": len(br.points),
                "stop_reason": br.stop_reason,
                "max_residual": max(p.residual for p in br.points),
                "min_u": min(p.min_u for p in br.points),
                "min_v": min(p.min_v for p in br.points),
                "xi_slope": br.initial_slope(),
            })

        elif command == "scan":
            _, bif = _bifurcation(cfg, spec, grid, threads, summary)
            scan = uniqueness_scan(bif.H, [f * bif.xi0 for f in cfg.xi_scan])
            write_table(out / "scan.csv", "xi,r_xiH,sign",
                        zip(scan.xis, scan.radii, scan.signs()))
            summary.values["crossings"] = scan.crossings

        elif command == "convergence":
            rows = []
            base = grid
            for level in range(3):
                g = base if level == 0 else base.refined(2**level)
                s, _ = prepare(cfg, RunSummary(), grid=g)
                u_eta = solve_reduced(s, g, cfg.eta, tol=cfg.reduced_tol, scheme=cfg.scheme, threads=threads)
                bif = analyze(s, g, u_eta, cfg.scheme, threads)
                rows.append([g.n_x, g.n_a, bif.xi0])
            d1, d2 = abs(rows[1][2] - rows[0][2]), abs(rows[2][2] - rows[1][2])
            rate = float(np.log2(d1 / d2)) if d2 > 0 else float("inf")
            write_table(out / "convergence.csv", "nx,na,xi0", rows)
            summary.values.update({"xi0_diff_coarse": d1, "xi0_diff_fine": d2, "xi0_rate": rate})

        else:
            raise ValueError(f"unknown command {command!r}")
    finally:
        summary.timings["total"] = time.perf_counter() - t0
        (out / "summary.txt").write_text(summary.render())
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="agebif", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="run configuration file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: $AGEBIF_THREADS or 1)")
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; here that code means validation
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    try:
        threads = resolve_threads(args.threads)
    except ValueError as exc:
        print(f"agebif: {exc}", file=sys.stderr)
        return EXIT_PARSE
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"agebif: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConstraintError as exc:
        print(f"agebif: invalid model: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"agebif: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO

    try:
        summary = run(args.command, cfg, args.out, threads)
    except ValidationFailed as exc:
        print(f"agebif: validation failed: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ConvergenceError, SingularMatrixError, SingularOperatorError, PositivityError) as exc:
        print(f"agebif: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"agebif: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(summary.render())
    print(f"# wall time {summary.timings['total']:.2f}s", file=sys.stderr)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
