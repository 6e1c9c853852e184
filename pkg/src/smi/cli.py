"""Command line entry point: ``smi {biased-data,regression,hpv,coherence}``.

Exit codes: 0 success, 1 a check failed or a computation could not finish,
2 usage error or bad input.
"""
from __future__ import annotations

import argparse
import sys

from .errors import DataFormatError, SMIError
from .experiments.config import EXPERIMENTS, ConfigError, defaults_ini, make_settings

EXIT_OK = 0
EXIT_CHECK = 1
EXIT_USAGE = 2


def _parser():
    p = argparse.ArgumentParser(prog="smi", description="Semi-modular inference studies.")
    p.add_argument("--print-defaults", action="store_true",
                   help="print the default configuration of every experiment and exit")
    sub = p.add_subparsers(dest="experiment")
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} study")
        sp.add_argument("--config", metavar="PATH", help="INI file with a [%s] section" % name)
        sp.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
        sp.add_argument("--out", metavar="DIR", default=f"smi-results/{name}",
                        help="output directory (default: %(default)s)")
        sp.add_argument("--replicates", type=int)
        sp.add_argument("--workers", type=int, help="process pool size (results are identical)")
        sp.add_argument("--print-defaults", action="store_true",
                        help="print this experiment's defaults as INI and exit")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key (repeatable)")
        if name in ("biased-data", "regression", "hpv"):
            sp.add_argument("--delta-grid", metavar="a,b,...")
        if name in ("biased-data", "hpv"):
            sp.add_argument("--eta-grid", metavar="a,b,...")
        if name == "regression":
            sp.add_argument("--k-grid", metavar="a,b,...")
        if name == "hpv":
            sp.add_argument("--data", metavar="CSV",
                            help="pop_id,ncases,person_years,ninf,npart (default: bundled data)")
        if name == "coherence":
            sp.add_argument("--inject-mismatch", action="store_true", default=None,
                            help="add a non-coherent (loss, update) pair; the run must fail")
    return p


def _overrides(args) -> dict:
    ov = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        ov[k.strip().replace("-", "_")] = v
    for key in ("seed", "replicates", "workers", "delta_grid", "eta_grid", "k_grid", "data",
                "inject_mismatch"):
        v = getattr(args, key, None)
        if v is not None:
            ov[key] = v
    return ov


def _run(name, settings, out):
    if name == "biased-data":
        from .experiments.biased import run_biased_data

        run_biased_data(settings, out)
        return EXIT_OK
    if name == "regression":
        from .experiments.regression import run_regression

        run_regression(settings, out)
        return EXIT_OK
    if name == "hpv":
        from .experiments.hpv import run_hpv

        run_hpv(settings, out)
        return EXIT_OK
    from .experiments.coherence_run import run_coherence

    report = run_coherence(settings, out)
    for c in report["checks"]:
        if not c["passed"]:
            print(f"FAILED {c['check']} [{c['pair']}]: max deviation {c['max_deviation']:.3g} "
                  f"(expected {c['expect']})", file=sys.stderr)
    return EXIT_OK if report["passed"] else EXIT_CHECK


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    if args.experiment is None:
        if args.print_defaults:
            sys.stdout.write(defaults_ini())
            return EXIT_OK
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    if args.print_defaults:
        sys.stdout.write(defaults_ini(args.experiment))
        return EXIT_OK
    try:
        settings = make_settings(args.experiment, _overrides(args), args.config)
        return _run(args.experiment, settings, args.out)
    except (ConfigError, DataFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SMIError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
