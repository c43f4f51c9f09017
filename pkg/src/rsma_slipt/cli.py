"""Command-line entry point: ``solve``, ``sweep`` and ``oracle``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings

from . import bench
from .channel import channel_matrix
from .scenario import ScenarioError, default_scenario, load_scenario
from .schemes import Scheme
from .signal import InfeasibleScenario
from .solver import OPTICAL_CHOICES, SolverOptions, solve_mmf

log = logging.getLogger("rsma_slipt")

ORACLE_MARGIN = 1e-3


def _schemes(text: str) -> tuple[Scheme, ...]:
    if text == "all":
        return bench.SCHEMES
    try:
        return tuple(Scheme(s.strip().lower()) for s in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="scenario YAML file (defaults when omitted)")
    p.add_argument("--out", help="output file (stdout when omitted)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--strict", action="store_true", help="exit 1 if any point fails")
    p.add_argument("-v", "--verbose", action="count", default=0)
    g = p.add_argument_group("solver options")
    d = SolverOptions()
    g.add_argument("--tol", type=float, default=d.convergence_tol, help="convergence tolerance on the penalised objective")
    g.add_argument("--rho", type=float, default=d.penalty_rho, help="initial rank penalty (< 0), relative to the starting objective per unit trace")
    g.add_argument("--penalty-scale", choices=("objective", "absolute"), default=d.penalty_scale)
    g.add_argument("--growth", type=float, default=d.penalty_growth, help="penalty growth factor")
    g.add_argument("--max-iters", type=int, default=d.max_iters)
    g.add_argument("--theta-min", type=float, default=d.theta_min)
    g.add_argument("--rank-tol", type=float, default=d.rank_tol)
    g.add_argument("--optical-form", choices=OPTICAL_CHOICES, default=d.optical_form)
    g.add_argument("--no-common-off", action="store_true", help="RSMA keeps the common stream switched on")
    g.add_argument("--solver", default=d.solver, help="cvxpy solver name")


def _options(args) -> SolverOptions:
    return SolverOptions(convergence_tol=args.tol, penalty_rho=args.rho, penalty_growth=args.growth,
                         penalty_scale=args.penalty_scale,
                         max_iters=args.max_iters, theta_min=args.theta_min, rank_tol=args.rank_tol,
                         seed=args.seed, optical_form=args.optical_form,
                         common_off_mode=not args.no_common_off, solver=args.solver)


def _scenario(args):
    return load_scenario(args.config) if args.config else default_scenario()


def _write(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _num(x):
    return None if isinstance(x, float) and not math.isfinite(x) else x


def cmd_solve(args) -> int:
    scenario = _scenario(args)
    opts = _options(args)
    channel = channel_matrix(scenario)
    out, failed = [], False
    for scheme in args.scheme:
        sol = solve_mmf(scenario, scheme, opts, channel=channel)
        failed |= not sol.converged or sol.validation is None or not sol.validation.ok
        row = {
            "scheme": scheme.value,
            "status": sol.status,
            "mmf_rate": _num(sol.mmf_value),
            "theta": _num(sol.theta),
            "iterations": sol.iterations,
            "penalty_residual": _num(sol.penalty_residual),
            "common_stream": sol.common_stream,
            "message": sol.message,
        }
        if sol.allocation is not None:
            row["user_rates"] = sol.allocation.totals.tolist()
            row["common_shares"] = sol.allocation.common_shares.tolist()
        if sol.validation is not None:
            row["user_energy"] = sol.validation.harvest.harvested.tolist()
            row["valid"] = sol.validation.ok
        if sol.beamformers is not None:
            row["beamformers"] = sol.beamformers.vectors.tolist()
        if args.trace:
            row["trace"] = sol.trace_lines()
        out.append(row)
        log.info("%s: %s mmf=%.6f", scheme.value, sol.status, sol.mmf_value)
    _write(json.dumps(out, indent=2) + "\n", args.out)
    return 1 if args.strict and failed else 0


def cmd_sweep(args) -> int:
    spec = bench.SweepSpec(args.axis, args.grid or (), args.schemes, _scenario(args),
                           tuple(range(args.seed, args.seed + args.repeats)), _options(args),
                           args.workers or bench.default_workers())
    result = bench.run_sweep(spec)
    _write(bench.emit_csv(result), args.out)
    for p in result.failures:
        log.warning("%s=%g %s: %s %s", spec.axis, p.axis_value, p.scheme.value, p.status, p.message)
    return 1 if args.strict and result.failures else 0


def cmd_oracle(args) -> int:
    if args.config:
        scenario = _scenario(args)
    else:
        scenario = bench.random_instance(args.n_users, args.seed, n_leds=args.n_leds,
                                         energy_threshold=args.energy_threshold)
    opts = _options(args)
    lines, failed = ["scheme,oracle_mmf,solver_mmf,margin,status"], False
    for scheme in args.scheme:
        oracle = bench.oracle_grid(scenario, scheme, args.resolution, opts.theta_min)
        sol = solve_mmf(scenario, scheme, opts)
        margin = sol.mmf_value - oracle
        bad = not sol.converged or not margin >= -ORACLE_MARGIN
        failed |= bad
        lines.append(f"{scheme.value},{oracle!r},{sol.mmf_value!r},{margin!r},{'FAIL' if bad else 'ok'}")
    _write("\n".join(lines) + "\n", args.out)
    return 1 if args.strict and failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rsma-slipt",
                                     description="Max-min-fair RSMA beamforming for multi-LED SLIPT.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve one scenario and print a JSON summary")
    _add_common(p)
    p.add_argument("--scheme", type=_schemes, default=bench.SCHEMES, help="rsma, sdma, noma, a list, or all")
    p.add_argument("--trace", action="store_true", help="include the per-iteration trace")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="sweep one parameter and write CSV")
    _add_common(p)
    p.add_argument("--axis", choices=bench.AXES, required=True)
    p.add_argument("--grid", type=_floats, help="comma-separated grid (default grid of the axis)")
    p.add_argument("--schemes", type=_schemes, default=bench.SCHEMES)
    p.add_argument("--repeats", type=int, default=1, help="seeds seed..seed+repeats-1")
    p.add_argument("--workers", type=int, default=0, help="worker processes (0: up to 4)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="compare the solver with the brute-force oracle on a small instance")
    _add_common(p)
    p.add_argument("--scheme", type=_schemes, default=bench.SCHEMES)
    p.add_argument("--n-leds", type=int, default=4)
    p.add_argument("--n-users", type=int, default=2)
    p.add_argument("--energy-threshold", type=float, default=0.005)
    p.add_argument("--resolution", type=int, default=11)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.verbose < 2:
        warnings.filterwarnings("ignore", module="cvxpy")
    try:
        return args.func(args)
    except (ScenarioError, InfeasibleScenario, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
