"""Command line front end: ``kslsda {solve,sweep,verify,fliptest}``.

Exit status 0 on success, 1 when a solver fails, 2 for configuration
errors.  Configuration is validated before the output directory is
touched, so a bad config leaves no files behind.  Failures also print one
``kslsda-error kind=<kind> ...`` line on stderr.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import Optional

import numpy as np

from .config import RunConfig, load_config
from .exceptions import ConfigError, ContractError, KSLSDAError, NumericError, SolverError
from .operator import nuclear_potential
from .scf import build_problem, scf_solve
from .spin import assemble_U, density_from_orbitals, random_occupied_set, write_density_dump

__all__ = ["main", "build_parser", "fmt", "write_csv"]

logger = logging.getLogger("kslsda")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG = 0, 1, 2


def fmt(x) -> str:
    """17-significant-digit rendering used for every number in every output."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % float(x)


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(r if isinstance(r, str) else fmt(r) for r in row) + "\n")


def _write_report(path, blocks) -> None:
    """``blocks`` is a list of ``(title, [(key, value), ...])``."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for i, (title, items) in enumerate(blocks):
            if i:
                fh.write("\n")
            fh.write(f"[{title}]\n")
            for k, v in items:
                fh.write(f"{k}: {v if isinstance(v, str) else fmt(v)}\n")


# ---------------------------------------------------------------- commands


def cmd_solve(cfg: RunConfig, out: str) -> int:
    state = scf_solve(cfg)
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "energies.csv"), ["part", "value_hartree"], state.energy.as_rows())
    write_density_dump(os.path.join(out, "density.dat"), state.density, state.occupied.grid)
    rows = [(i, e, n) for i, (e, n) in enumerate(zip(state.eigenvalues, state.occupations))]
    write_csv(os.path.join(out, "orbitals.csv"), ["index", "eigenvalue_hartree", "occupation"], rows)
    _write_report(os.path.join(out, "summary.txt"), [("solve", [
        ("mode", cfg.mode), ("lambda", cfg.lam), ("fermi_level", state.fermi_level),
        ("total", state.energy.total), ("iterations", state.iterations), ("start", state.start),
        ("flipped", "yes" if state.flipped else "no"),
    ])])
    return EXIT_OK


def cmd_sweep(cfg: RunConfig, out: str) -> int:
    from .verify import sweep_lambda

    if not cfg.sweep_lambdas:
        raise ConfigError("sweep needs sweep.lambdas")
    rep = sweep_lambda(cfg.sweep_lambdas, cfg)
    os.makedirs(out, exist_ok=True)
    write_csv(os.path.join(out, "sweep.csv"), ["lambda", "I", "I_inf", "binding_margin", "converged"], rep.csv_rows())
    _write_report(os.path.join(out, "sweep_checks.txt"), _check_blocks(rep.checks, rep.note))
    failed = [p for p in rep.points if not (p.converged and p.converged_inf)]
    return EXIT_SOLVER if failed and len(failed) == len(rep.points) else EXIT_OK


def _check_blocks(checks, note=None):
    blocks = []
    for c in checks:
        blocks.append((c.name, [("verdict", "pass" if c.passed else ("soft-fail" if c.kind == "soft" else "fail")),
                                ("kind", c.kind), ("margin", c.margin), ("tol", c.tol), ("detail", c.detail or "-")]))
    if note:
        blocks.append(("note", [("scope", note)]))
    return blocks


def _flip_checks(cfg: RunConfig, seed: int):
    from .verify import CheckResult, check_external_decomposition, check_flip_identity, check_flip_invariance

    grid = cfg.grid()
    ext = cfg.external()
    U = assemble_U(ext, nuclear_potential(ext, grid), grid)
    checks = []
    for s in (seed, seed + 1, seed + 2):
        rng = np.random.default_rng(s)
        occ = random_occupied_set(grid, 3, min(cfg.lam, 3.0), rng)
        if U.B.any():
            B = U.B
        else:
            B = rng.standard_normal((3,) + grid.shape)
        Ur = assemble_U(ext, U.V, grid, B)
        m = check_flip_identity(occ, Ur)
        checks.append(CheckResult(f"flip_zeeman seed={s}", m <= 1e-12, m, 1e-12))
        R = density_from_orbitals(occ)
        m = check_external_decomposition(Ur, R, grid)
        checks.append(CheckResult(f"external_decomposition seed={s}", m <= 1e-12, m, 1e-12))
        inv = check_flip_invariance(occ)
        for k, v in inv.items():
            checks.append(CheckResult(f"flip_{k} seed={s}", v <= 1e-12, v, 1e-12))
    return checks


def cmd_fliptest(cfg: RunConfig, out: str) -> int:
    checks = _flip_checks(cfg, cfg.eig_seed)
    os.makedirs(out, exist_ok=True)
    _write_report(os.path.join(out, "fliptest.txt"), _check_blocks(checks))
    return EXIT_OK if all(c.passed for c in checks) else EXIT_SOLVER


def cmd_verify(cfg: RunConfig, out: str) -> int:
    from .verify import (
        CheckResult,
        check_aufbau,
        check_coleman_history,
        check_hoffman_ostenhof,
        check_pointwise_bounds,
        check_rho_pm,
        fit_decay,
        scaling_trial,
        sweep_lambda,
    )

    checks = _flip_checks(cfg, cfg.eig_seed)
    grid = cfg.grid()
    for s in (cfg.eig_seed, cfg.eig_seed + 1, cfg.eig_seed + 2):
        occ = random_occupied_set(grid, 3, min(cfg.lam, 3.0), np.random.default_rng(s))
        R = density_from_orbitals(occ)
        m = check_rho_pm(R)
        checks.append(CheckResult(f"rho_pm seed={s}", m <= 1e-12, m, 1e-12))
        worst = max(check_pointwise_bounds(R).values())
        checks.append(CheckResult(f"pointwise_bounds seed={s}", worst <= 1e-12, worst, 1e-12))
        for ch, (lhs, rhs, ok) in check_hoffman_ostenhof(occ).items():
            checks.append(CheckResult(f"hoffman_ostenhof {ch} seed={s}", ok, lhs - rhs, 1e-3, "soft"))
    if cfg.lam <= 1.0 and cfg.xc == "xalpha":
        tr = scaling_trial(cfg.lam, np.geomspace(0.02, 1.0, 12), c_x=cfg.c_x, grid_eval=False)
        checks.append(CheckResult("scaling_trial I_inf < 0", tr.certifies_negative, tr.energy_opt, 0.0, "soft",
                                  f"sigma_opt = {tr.sigma_opt:.4g}, analytic gaussian trial"))
    state = scf_solve(cfg)
    checks.append(check_aufbau(state, cfg.deg_tol))
    checks.append(check_coleman_history(state.history))
    checks.append(CheckResult("fermi_level < 0", state.fermi_level < 0, state.fermi_level, 0.0, "soft"))
    try:
        fit = fit_decay(state)
        ok = fit.slope < 0 and 0.5 <= fit.ratio <= 2.0
        checks.append(CheckResult("decay", ok, fit.slope, fit.expected_slope, "soft",
                                  f"ratio {fit.ratio:.3f}, r {fit.r_value:.4f}, window {fit.window[0]:.2f}-{fit.window[1]:.2f}"))
    except ContractError as exc:
        checks.append(CheckResult("decay", False, float("nan"), 0.0, "soft", str(exc)))
    rep = None
    if cfg.sweep_lambdas:
        rep = sweep_lambda(cfg.sweep_lambdas, cfg)
        checks.extend(rep.checks)
    os.makedirs(out, exist_ok=True)
    _write_report(os.path.join(out, "report.txt"),
                  _check_blocks(checks, "checks certify the discretised functional on a finite box"))
    if rep is not None:
        write_csv(os.path.join(out, "sweep.csv"), ["lambda", "I", "I_inf", "binding_margin", "converged"], rep.csv_rows())
    exact_fail = [c for c in checks if c.kind == "exact" and not c.passed]
    return EXIT_SOLVER if exact_fail else EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "verify": cmd_verify, "fliptest": cmd_fliptest}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kslsda", description="Spin-polarised LSDA solver and checks on a real-space grid.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", required=True, help="path to the run configuration")
    p.add_argument("--out", default=".", help="output directory (created if missing)")
    p.add_argument("--seed", type=int, default=None, help="override eig.seed")
    p.add_argument("-v", "--verbose", action="store_true", help="log SCF progress to stderr")
    return p


def _error_line(kind: str, exc: BaseException) -> str:
    msg = str(exc).replace("\n", " ").replace('"', "'")
    line = getattr(exc, "line", None)
    where = f" line={line}" if line is not None else ""
    return f'kslsda-error kind={kind}{where} message="{msg}"'


def main(argv: Optional[list] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace(eig_seed=args.seed)
        build_problem(cfg)  # surfaces field-file and functional errors before any output
        if args.command == "sweep" and not cfg.sweep_lambdas:
            raise ConfigError("sweep needs sweep.lambdas")
    except (ConfigError, ContractError) as exc:
        print(_error_line("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args.out)
    except ConfigError as exc:
        print(_error_line("config", exc), file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NumericError, KSLSDAError) as exc:
        print(_error_line("solver", exc), file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
