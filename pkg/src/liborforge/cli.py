"""``liborforge`` command line.

Exit codes: 0 success, 1 check failure, 2 schema error, 3 invariant error,
4 numerical divergence.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from .affine import CalibrationError, RiccatiDivergenceError, RiccatiRangeError, richardson_error, riccati_solve
from .core import ContractError, InvariantError
from .drift import (
    DriftConsistencyError,
    positivity_check,
    residual_sweep,
    residual_tolerance,
    structure_preservation_check,
    validate_assumptions,
)
from .simulation import (
    SimulationConfig,
    SimulationError,
    caplet_price,
    forward_price_paths,
    martingale_test,
    simulate_driver,
)
from .spec_io import SchemaError, document_to_spec, load_document

EXIT_OK, EXIT_CHECK, EXIT_SCHEMA, EXIT_INVARIANT, EXIT_DIVERGENCE = 0, 1, 2, 3, 4
COMMANDS = ("validate", "simulate", "riccati", "check-martingale", "price")


def fmt(v) -> str:
    """Shortest round-trip decimal text of a number."""
    if isinstance(v, str):
        return v
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_csv(path: Path, header, rows) -> int:
    n = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
            n += 1
    return n


def _config(args, parsed, record_times=None, log_jumps=True) -> SimulationConfig:
    sim = parsed.simulation
    pick = (lambda flag, key: sim[key] if flag is None else flag)
    return SimulationConfig(
        path_count=pick(args.paths, "paths"), time_step=pick(args.step, "step"),
        master_seed=pick(args.seed, "seed"), worker_count=pick(args.workers, "workers"),
        record_times=record_times, log_jumps=log_jumps)


def run_validate(args, parsed, out: Path, lines: list) -> int:
    model = parsed.model
    report = validate_assumptions(model)
    lines += ["assumptions", report.as_table(), ""]
    sweep = residual_sweep(model)
    tol = residual_tolerance(model)
    lines.append("drift-residual sweep (max |residual| over sampled states)")
    lines.append(f"{'k':>3}  {'max |residual|':>22}  {'tolerance':>10}  result")
    rows = []
    for k, r in sweep.items():
        ok = r < tol
        rows.append((k, r, tol, ok))
        lines.append(f"{k:>3}  {fmt(r):>22}  {tol:>10.0e}  {'pass' if ok else 'FAIL'}")
    write_csv(out / "residuals.csv", ["k", "max_abs_residual", "tolerance", "passed"], rows)
    write_csv(out / "assumptions.csv", ["check", "value", "passed"],
              [(r.name, r.value, r.passed) for r in report.records])
    pos = positivity_check(model)
    struct = structure_preservation_check(model)
    lines += ["", f"positivity (informational): {'holds' if pos.passed else 'violated'}"]
    if pos.witness is not None:
        lines.append(f"  witness: {pos.witness}")
    lines.append(f"structure preserving (informational): {struct.preserving}")
    return EXIT_OK if report.verdict and all(r[3] for r in rows) else EXIT_CHECK


def run_simulate(args, parsed, out: Path, lines: list) -> int:
    model = parsed.model
    cfg = _config(args, parsed)
    grid = simulate_driver(model, cfg)
    d = model.dimension
    paths, times = grid.states.shape[:2]
    pidx = np.repeat(np.arange(paths), times)
    tcol = np.tile(grid.times, paths)
    flat = grid.states.reshape(-1, d)
    write_csv(out / "states.csv", ["path", "t"] + [f"x{i + 1}" for i in range(d)],
              ((p, t, *x) for p, t, x in zip(pidx.tolist(), tcol.tolist(), flat.tolist())))
    prices = np.stack([forward_price_paths(model, grid, k) for k in model.tenor.K_bar], axis=-1).reshape(paths * times, -1)
    label = "F(t,T_k,T_k+1)" if model.family == "lmm" else "F(t,T_k,T_N)"
    write_csv(out / "forward_prices.csv", ["path", "t"] + [f"F{k}" for k in model.tenor.K_bar],
              ((p, t, *f) for p, t, f in zip(pidx.tolist(), tcol.tolist(), prices.tolist())))
    write_csv(out / "jumps.csv", ["path", "t", "atom"],
              zip(grid.jump_paths.tolist(), grid.jump_times.tolist(), grid.jump_atoms.tolist()))
    lines += [f"paths: {paths}", f"recorded times: {times}", f"time step: {fmt(cfg.step_for(model))}",
              f"seed: {cfg.master_seed}", f"jumps: {grid.jump_paths.size}",
              f"forward_prices.csv columns F<k> hold {label}"]
    return EXIT_OK


def run_riccati(args, parsed, out: Path, lines: list) -> int:
    model = parsed.model
    if model.family != "affine":
        raise InvariantError("riccati needs an affine-family spec")
    aff = model.affine
    step = args.step if args.step is not None else parsed.riccati_step
    lines.append(f"{'k':>3}  {'u_k':>22}  {'Richardson |dphi|':>18}  {'Richardson |dpsi|':>18}")
    for k, u in enumerate(aff.u, start=1):
        sol = riccati_solve(aff.driver, u, aff.horizon, step)
        write_csv(out / f"riccati_u{k}.csv", ["t", "phi", "psi"], zip(sol.grid.tolist(), sol.phi.tolist(), sol.psi.tolist()))
        ephi, epsi = richardson_error(aff.driver, u, aff.horizon, sol.step)
        lines.append(f"{k:>3}  {fmt(u):>22}  {ephi:>18.3e}  {epsi:>18.3e}")
    return EXIT_OK


def run_check_martingale(args, parsed, out: Path, lines: list) -> int:
    model = parsed.model
    cps = parsed.simulation.get("checkpoints")
    report = martingale_test(model, _config(args, parsed), cps)
    write_csv(out / "martingale.csv", ["k", "t", "mean", "target", "std_error", "z", "passed"],
              ((r.k, r.t, r.mean, r.target, r.std_error, r.z, r.passed) for r in report.rows))
    lines.append(f"paths: {report.path_count}")
    lines.append(f"{'k':>3}  {'t':>8}  {'mean':>14}  {'target':>14}  {'se':>10}  {'z':>8}  result")
    for r in report.rows:
        lines.append(f"{r.k:>3}  {r.t:>8.4g}  {r.mean:>14.10f}  {r.target:>14.10f}  {r.std_error:>10.3e}  "
                     f"{r.z:>8.3f}  {'pass' if r.passed else 'FAIL'}")
    lines.append(f"verdict: {'pass' if report.passed else 'fail'} (max |z| = {report.max_abs_z:.3f})")
    return EXIT_OK if report.passed else EXIT_CHECK


def run_price(args, parsed, out: Path, lines: list) -> int:
    model = parsed.model
    strikes = args.strike if args.strike else parsed.simulation["strikes"]
    dates = tuple(float(t) for t in model.tenor.dates)
    grid = simulate_driver(model, _config(args, parsed, record_times=dates, log_jumps=False))
    rows = []
    lines.append(f"{'k':>3}  {'strike':>10}  {'price':>16}  {'std error':>12}")
    for k in model.tenor.K_bar:
        for K in strikes:
            price, se = caplet_price(model, None, k, K, grid=grid)
            rows.append((k, K, price, se))
            lines.append(f"{k:>3}  {K:>10.6g}  {price:>16.10f}  {se:>12.3e}")
    write_csv(out / "caplets.csv", ["k", "strike", "price", "std_error"], rows)
    return EXIT_OK


RUNNERS = {
    "validate": run_validate,
    "simulate": run_simulate,
    "riccati": run_riccati,
    "check-martingale": run_check_martingale,
    "price": run_price,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="liborforge", description="Arbitrage-free LIBOR model toolkit.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--spec", required=True, help="JSON model document")
    parser.add_argument("--seed", type=int, default=None, help="master seed (default: document)")
    parser.add_argument("--paths", type=int, default=None, help="Monte Carlo paths (default: document)")
    parser.add_argument("--step", type=float, default=None,
                        help="simulation time step; for riccati the ODE step")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--zero-drift", action="store_true", help="replace the driver drift by 0 (sabotage)")
    parser.add_argument("--workers", type=int, default=None, help="worker threads for simulation")
    parser.add_argument("--strike", type=float, action="append", help="caplet strike (repeatable)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        doc = load_document(args.spec)
    except SchemaError as exc:
        print(f"schema error at {exc.path}: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except OSError as exc:
        print(f"cannot read spec: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    lines = [f"liborforge {args.command}", f"spec: {Path(args.spec).name}"]
    try:
        parsed = document_to_spec(doc)
        if args.zero_drift:
            parsed = type(parsed)(parsed.model.with_zero_drift(True), parsed.simulation, parsed.riccati_step)
            lines.append("drift: zeroed (--zero-drift)")
        lines += [f"family: {parsed.model.family}", f"tenors: N={parsed.model.N}", ""]
        out.mkdir(parents=True, exist_ok=True)
        code = RUNNERS[args.command](args, parsed, out, lines)
    except (InvariantError, ContractError, CalibrationError) as exc:
        print(f"invariant error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (RiccatiDivergenceError, RiccatiRangeError, SimulationError, DriftConsistencyError,
            FloatingPointError, OverflowError) as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except ValueError as exc:
        print(f"invariant error: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    lines.append(f"exit code: {code}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    print("\n".join(lines))
    return code


if __name__ == "__main__":
    sys.exit(main())
