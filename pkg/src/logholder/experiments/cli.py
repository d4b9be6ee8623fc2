"""``logholder`` command line.

Exit codes: 0 success, 1 a check failed, 2 bad configuration or input,
3 numerical failure (quadrature did not converge, grid too coarse).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from ..errors import ConfigError, GridTooCoarseError, QuadratureError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def parse_range(spec: str, geometric: bool = True) -> np.ndarray:
    """``"r1..r2:steps"`` to a geometric (or linear) grid of ``steps`` points."""
    try:
        lims, steps = spec.split(":")
        lo, hi = (float(v) for v in lims.split(".."))
        n = int(steps)
    except ValueError as exc:
        raise ConfigError(f"bad range {spec!r}; expected r1..r2:steps") from exc
    if n < 1 or not (0 < lo <= hi) or (n > 1 and lo == hi):
        raise ConfigError(f"bad range {spec!r}; need 0 < r1 < r2 and steps >= 1")
    return np.geomspace(lo, hi, n) if geometric else np.linspace(lo, hi, n)


def _emit(obj, path=None):
    text = json.dumps(obj, indent=1, sort_keys=True)
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    print(text)


def cmd_run(args) -> int:
    from .config import load_config
    from .runner import exponent_experiment, run_iteration

    cfg = load_config(args.config)
    if args.threads is not None:
        cfg.threads = args.threads
    out = args.out or cfg.output_dir

    def progress(rec):
        if not args.quiet:
            print(f"step {rec['step']:3d}  eps {rec['eps']:.3g}  E {rec['e_pair']:.6g}", file=sys.stderr)

    report = run_iteration(cfg, progress)
    result = {"name": cfg.name, "summary": report.summary}
    if args.exponent:
        result["exponent"] = exponent_experiment(cfg, report).to_dict()
    if out:
        result["files"] = report.save(out)
        if args.exponent:
            with open(os.path.join(out, "exponent.json"), "w") as fh:
                json.dump(result["exponent"], fh, indent=1, sort_keys=True)
    _emit(result)
    return EXIT_OK if report.summary["passed"] else EXIT_FAIL


def cmd_verify(args) -> int:
    from .verify import verify_suite

    overrides = None
    if args.tol_file:
        try:
            with open(args.tol_file) as fh:
                overrides = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read tolerance file: {exc}") from exc

    def progress(res):
        msg = res.line() + (f"  {res.error}" if res.error else "")
        print(msg, file=sys.stderr)

    report = verify_suite(args.suite, overrides, progress)
    _emit(report.to_dict(), args.json)
    return report.exit_code


def cmd_fit(args) -> int:
    from ..measure import EmpiricalMeasure, fit_log_holder

    try:
        nu = EmpiricalMeasure.from_csv(args.measure)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"cannot read measure {args.measure}: {exc}") from exc
    radii = parse_range(args.radii)
    centers = np.arange(args.centers) / args.centers
    try:
        fit = fit_log_holder(nu, centers, radii, enforce_floor=not args.no_floor)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    _emit(fit.to_dict())
    return EXIT_OK


def cmd_kernel_table(args) -> int:
    from ..kernel import KernelParams, U, V, phi_eps

    try:
        p = KernelParams(args.alpha, args.eps, args.dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    rs = parse_range(args.r_grid, geometric=not args.linear)
    out = open(args.output, "w", newline="") if args.output else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["r", "U", "V", "phi_eps"])
        for r in rs:
            w.writerow([repr(float(r)), repr(U(p, float(r))), repr(float(V(p, r))), repr(float(phi_eps(p, r)))])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="logholder", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="iterate a random map family from a config file")
    r.add_argument("config", help="JSON or TOML experiment file")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--threads", type=int)
    r.add_argument("--exponent", action="store_true", help="also fit the final log-Hölder exponent")
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("suite", choices=["kernel", "energy", "measure", "rds", "all"])
    v.add_argument("--tol-file", help="JSON file of tolerance overrides, merged key by key")
    v.add_argument("--json", help="also write the verdict to this file")
    v.set_defaults(func=cmd_verify)

    f = sub.add_parser("fit", help="fit a log-Hölder exponent to a measure CSV")
    f.add_argument("measure", help="CSV with columns position,weight")
    f.add_argument("--radii", required=True, help="r1..r2:steps (geometric)")
    f.add_argument("--centers", type=int, default=256)
    f.add_argument("--no-floor", action="store_true", help="allow radii below the atom resolution floor")
    f.set_defaults(func=cmd_fit)

    k = sub.add_parser("kernel-table", help="tabulate U, V and phi_eps as CSV")
    k.add_argument("--alpha", type=float, required=True)
    k.add_argument("--eps", type=float, required=True)
    k.add_argument("--dim", type=int, default=1)
    k.add_argument("--r-grid", required=True, help="r1..r2:steps")
    k.add_argument("--linear", action="store_true", help="linear instead of geometric spacing")
    k.add_argument("-o", "--output")
    k.set_defaults(func=cmd_kernel_table)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (QuadratureError, GridTooCoarseError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
