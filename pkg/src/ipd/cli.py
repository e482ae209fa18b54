"""Command-line entry point: ``ipd run | sweep | verify | export``.

Exit codes: 0 success, 1 failed verification or sweep with failures,
2 invalid configuration, 3 runtime failure (message carries the phase tag).
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import time

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

SWEEP_AXES = {
    "N": ("grid_N", int),
    "epsilon": ("horizon_factor", float),
    "nu_stab": ("material.numerical_poisson_ratio", float),
}


def _threads_from_env():
    # the only environment knob: thread count for the BLAS/sparse back ends
    n = os.environ.get("IPD_NUM_THREADS")
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, n)


def _parse_values(text, cast):
    vals = [v for v in text.replace(",", " ").split() if v]
    return [cast(v) for v in vals]


def cmd_run(args):
    from . import config as cfgmod
    from .runner import execute

    cfg = cfgmod.apply_overrides(_read(args.config), args.set)
    out = args.out or os.path.join("runs", cfgmod.resolve(cfg)["name"])
    res = execute(cfg, out, verify_mode=args.verify_mode, progress_every=args.progress)
    print(f"{res.stop_reason}: t={res.final['t']:.6g} s, {res.primary_column}={res.observable():.6g}, "
          f"volume_change_pct={res.final['volume_change_pct']:.3g}; outputs in {out}")
    return EXIT_OK


def _read(path):
    from . import config as cfgmod
    from .errors import ConfigError

    if not os.path.exists(path):
        raise ConfigError(f"config: file not found: {path}")
    with open(path) as fh:
        return cfgmod.loads(fh.read())


def _sweep_one(cfg, key, value):
    from . import config as cfgmod
    from .errors import IPDError
    from .runner import execute

    c = cfgmod.apply_overrides(cfg, [f"{key}={value}"])
    t0 = time.perf_counter()
    try:
        res = execute(c)
        return [value, res.observable(), res.final["volume_change_pct"],
                time.perf_counter() - t0, res.stop_reason]
    except (IPDError, ValueError, ArithmeticError) as exc:
        return [value, float("nan"), float("nan"), time.perf_counter() - t0,
                f"failed: {type(exc).__name__}: {exc}"]


def cmd_sweep(args):
    from . import config as cfgmod
    from .errors import ConfigError

    key, cast = SWEEP_AXES[args.axis]
    try:
        values = _parse_values(args.values, cast)
    except ValueError as exc:
        raise ConfigError(f"--values: {exc}") from exc
    if not values:
        raise ConfigError("--values: the value list is empty")
    cfg = cfgmod.apply_overrides(_read(args.config), args.set)
    cfgmod.resolve(cfg)
    out = args.out or f"sweep_{args.axis}.csv"
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_one, [cfg] * len(values), [key] * len(values), values))
    else:
        rows = [_sweep_one(cfg, key, v) for v in values]
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["value", "observable", "volume_change_pct", "runtime_s", "status"])
        for r in rows:
            w.writerow([r[0], repr(float(r[1])), repr(float(r[2])), f"{r[3]:.3f}", r[4]])
            print(f"{args.axis}={r[0]}: observable={r[1]:.6g} volume_change_pct={r[2]:.3g} "
                  f"({r[3]:.1f} s) {r[4]}")
    print(f"table written to {out}")
    return EXIT_FAILED if any(str(r[4]).startswith("failed") for r in rows) else EXIT_OK


def cmd_verify(args):
    from . import verify

    results = verify.run_all(args.inject_fault)
    for r in results:
        print(r.line())
    print(f"angular momentum residual (informational): {verify.angular_momentum_residual():.3e}")
    failed = [r.name for r in results if not r.passed]
    print("all suites passed" if not failed else f"{len(failed)} suite(s) failed")
    return EXIT_FAILED if failed else EXIT_OK


def cmd_export(args):
    from . import config as cfgmod
    from .scenarios import SCENARIOS

    kwargs = {}
    if args.N is not None:
        kwargs["N"] = args.N
    cfg = cfgmod.apply_overrides(SCENARIOS[args.scenario](**kwargs), args.set)
    text = cfgmod.dumps(cfgmod.resolve(cfg))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser():
    from .scenarios import SCENARIOS

    p = argparse.ArgumentParser(prog="ipd", description="Immersed peridynamics simulations.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one configuration")
    r.add_argument("config", help="JSON configuration file")
    r.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry (dotted path, repeatable)")
    r.add_argument("--out", help="output directory (default runs/<name>)")
    r.add_argument("--verify-mode", action="store_true",
                   help="deterministic outputs; omit wall-clock time from the manifest")
    r.add_argument("--progress", type=int, default=0, metavar="STEPS", help="log every STEPS steps")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="run a configuration over a parameter axis")
    s.add_argument("config")
    s.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    s.add_argument("--values", required=True, help="comma or space separated values")
    s.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    s.add_argument("--out", help="CSV table path (default sweep_<axis>.csv)")
    s.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    s.set_defaults(func=cmd_sweep)

    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--inject-fault", action="append", default=[], metavar="NAME",
                   help="deliberately break a component (repeatable)")
    v.set_defaults(func=cmd_verify)

    e = sub.add_parser("export", help="write a built-in benchmark configuration as JSON")
    e.add_argument("scenario", choices=sorted(SCENARIOS))
    e.add_argument("--N", type=int, help="resolution")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    e.add_argument("--out", help="file to write (default stdout)")
    e.set_defaults(func=cmd_export)
    return p


def main(argv=None):
    _threads_from_env()
    from .errors import ConfigError, IPDError, SimulationError

    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "inject_fault", None):
        from .verify import FAULTS
        bad = [f for f in args.inject_fault if f not in FAULTS]
        if bad:
            parser.error(f"unknown fault {bad[0]!r}; choose from {', '.join(sorted(FAULTS))}")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"error: simulation failed {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except IPDError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
