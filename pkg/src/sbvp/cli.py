"""Command-line front end.

    sbvp solve <cfg>
    sbvp verify <solution.csv> <cfg>
    sbvp oracle <n> <R> <rho> <f> <variant> [--output radial.csv]
    sbvp sweep <cfg> --param rhs.eps --values 0,0.05,0.1

Exit codes: 0 success, 1 solver error, 2 verification failure,
64 configuration error, 74 I/O error.  Each error prints one JSON line on
stderr.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dual, files, radial, verify
from .config import RunConfig
from .errors import ConfigError, InvalidProblem, IoError, SbvpError
from .problem import admissibility_report
from .solver import continuation_solve

EXIT_OK, EXIT_SOLVER, EXIT_VERIFY, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 64, 74

log = logging.getLogger("sbvp")


def _threads():
    """threadpoolctl limit from SBVP_THREADS, or a no-op context."""
    raw = os.environ.get("SBVP_THREADS")
    if not raw:
        return contextlib.nullcontext()
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"SBVP_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError("SBVP_THREADS must be at least 1")
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def _report_for(grid, u, prob, cfg):
    state = verify.state_from_field(grid, u, prob)
    return verify.full_suite(state, prob, cfg.solver_config())


def _print_summary(report, stream=None):
    stream = stream or sys.stdout
    for e in report.entries:
        print(f"{e.verdict:9s} {e.name} measured={e.measured:.6g} bound={e.bound:.6g} "
              f"tol={e.tol:.3g}", file=stream)
    n_fail = len(report.failures())
    print(f"report: {'pass' if report.passed else 'fail'} ({n_fail} failing of "
          f"{len(report.entries)})", file=stream)


def cmd_solve(config_path) -> int:
    cfg = RunConfig.load(config_path)
    prob = cfg.build_problem()
    grid = cfg.build_grid(prob)
    scfg = cfg.solver_config()
    out = cfg.output_dir
    state, trace = continuation_solve(prob, grid, scfg)
    exports = cfg.exports
    if "solution" in exports:
        files.write_solution(out / "solution.csv", grid, state.u.values)
    if "log" in exports:
        files.write_log(out / "continuation.tsv", trace)
    report = _report_for(grid, state.u.values, prob, cfg)
    if "report" in exports:
        files.write_text(out / "report.json", report.to_json())
    if "dual" in exports:
        rstate = verify.state_from_field(grid, state.u.values, prob)
        samples = dual.legendre_samples(rstate)
        resid = dual.dual_residual(samples, prob, rstate.c, rstate.t)
        files.write_dual(out / "dual.csv", samples, resid)
    print(f"c = {state.c:.12f}  stages = {len(trace)}  newton = {state.newton_iters}  "
          f"residual = {state.residual_norm:.3e}")
    _print_summary(report)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_verify(csv_path, config_path) -> int:
    cfg = RunConfig.load(config_path)
    prob = cfg.build_problem()
    grid = cfg.build_grid(prob)
    u = files.read_solution(csv_path, grid)
    report = _report_for(grid, u, prob, cfg)
    if "report" in cfg.exports:
        files.write_text(cfg.output_dir / "report_verify.json", report.to_json())
    _print_summary(report)
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_oracle(n, R, rho, f, variant, output=None, samples: int = 201) -> int:
    try:
        p = radial.RadialProblem(int(n), float(R), float(rho), float(f), variant)
    except (InvalidProblem, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    c = radial.radial_c(p)
    print(f"{c:.12f}")
    if output is not None:
        r = np.linspace(0.0, p.R, samples)
        uprime, u = radial.radial_profile(p, c, r)
        files.write_radial(output, r, uprime, u)
    return EXIT_OK


SWEEP_COLUMNS = ("param", "value", "success", "t_reached", "c", "stages", "rejected",
                 "min_obliqueness", "min_eig_hess", "osc", "osc_threshold", "osc_pass",
                 "concave_in_x", "dxf_pass", "dxpf_pass", "error")


def _sweep_row(cfg: RunConfig, param: str, value):
    row = {"param": param, "value": value}
    run = cfg.with_value(param, value)
    prob = run.build_problem()
    grid = run.build_grid(prob)
    adm = admissibility_report(prob, max_samples=256)
    row.update(osc=adm.osc, osc_threshold=adm.osc_threshold, osc_pass=adm.osc_pass,
               concave_in_x=adm.concave_in_x, dxf_pass=adm.dxf_pass, dxpf_pass=adm.dxpf_pass)
    try:
        state, trace = continuation_solve(prob, grid, run.solver_config())
    except SbvpError as exc:
        last = getattr(exc, "last_state", None)
        row.update(success=False, t_reached=last.t if last is not None else 0.0,
                   error=f"{type(exc).__name__}: {exc}")
        return row
    last = trace.entries[-1]
    row.update(success=True, t_reached=state.t, c=state.c, stages=len(trace),
               rejected=trace.rejected_steps,
               min_obliqueness=min(e.min_obliqueness for e in trace.entries),
               min_eig_hess=min(e.min_eig_hess for e in trace.entries), error="")
    log.info("sweep %s=%r c=%.12g (%s)", param, value, state.c, last)
    return row


def cmd_sweep(config_path, param: str, values, jobs: int = 1) -> int:
    cfg = RunConfig.load(config_path)
    for v in values:
        cfg.with_value(param, v)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(_sweep_row, [cfg] * len(values), [param] * len(values), values))
    else:
        rows = [_sweep_row(cfg, param, v) for v in values]
    files.write_rows(cfg.output_dir / "sweep.csv", SWEEP_COLUMNS, rows)
    for row in rows:
        status = "ok" if row["success"] else "failed"
        print(f"{param}={row['value']!r}: {status}" +
              (f" c={row['c']:.12f}" if row["success"] else f" ({row['error']})"))
    return EXIT_OK


def _parse_values(text: str):
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        try:
            out.append(json.loads(item))
        except json.JSONDecodeError:
            out.append(item)
    if not out:
        raise ConfigError("--values needs at least one value")
    return out


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="sbvp", description=__doc__.split("\n\n")[0])
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    s = sub.add_parser("solve", help="solve and verify a configured problem")
    s.add_argument("config")
    s = sub.add_parser("verify", help="re-verify a saved solution field")
    s.add_argument("solution")
    s.add_argument("config")
    s = sub.add_parser("oracle", help="radial closed-form/quadrature oracle")
    s.add_argument("n", type=int)
    s.add_argument("R", type=float)
    s.add_argument("rho", type=float)
    s.add_argument("f", type=float)
    s.add_argument("variant", choices=["minkowski", "euclidean"])
    s.add_argument("--output", "-o", help="write the radial profile CSV here")
    s.add_argument("--samples", type=int, default=201)
    s = sub.add_parser("sweep", help="continuation over a 1-D parameter range")
    s.add_argument("config")
    s.add_argument("--param", required=True, help="section.key, default section rhs")
    s.add_argument("--values", required=True, help="comma-separated values")
    s.add_argument("--jobs", type=int, default=1)
    return ap


def _fail(exc: Exception, code: int) -> int:
    print(json.dumps({"error": type(exc).__name__, "exit": code, "message": str(exc)},
                     ensure_ascii=False), file=sys.stderr)
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _threads():
            if args.command == "solve":
                return cmd_solve(args.config)
            if args.command == "verify":
                return cmd_verify(args.solution, args.config)
            if args.command == "oracle":
                return cmd_oracle(args.n, args.R, args.rho, args.f, args.variant,
                                  Path(args.output) if args.output else None, args.samples)
            return cmd_sweep(args.config, args.param, _parse_values(args.values), args.jobs)
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except IoError as exc:
        return _fail(exc, EXIT_IO)
    except SbvpError as exc:
        return _fail(exc, EXIT_SOLVER)


if __name__ == "__main__":
    sys.exit(main())
