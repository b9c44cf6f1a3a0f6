"""Command line entry point: ``thermolab run | list | check``."""

from __future__ import annotations

import argparse
import sys

from . import __version__
from . import experiments as ex
from .integrators import IntegrationError

EXIT_OK = 0
EXIT_FAILED_CHECK = 1
EXIT_CONFIG = 2
EXIT_INTEGRATION = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="thermolab", description="Thermostatted oscillator experiments.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a config file or catalog id")
    r.add_argument("config", help="path to an .ini config, or a catalog id for the packaged default")
    r.add_argument("--paper-scale", action="store_true", help="use the published step budgets instead of desk scale")
    r.add_argument("--out", metavar="DIR", help="output directory (default: the config's output key)")
    sub.add_parser("list", help="list the experiment catalog")
    c = sub.add_parser("check", help="run the diagnostics suite; nonzero exit on any failed invariant")
    c.add_argument("--config", help="diagnostics config (default: packaged)")
    c.add_argument("--out", metavar="DIR", default="out/diagnostics")
    return p


def _run(config_path: str, out, paper_scale: bool) -> tuple[int, ex.RunResult | None]:
    try:
        cfg = ex.load_config(config_path)
        res = ex.run(cfg, out, paper_scale)
    except ex.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG, None
    except IntegrationError as exc:
        print(f"integration error: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION, None
    for w in res.manifest["warnings"]:
        print(f"warning: {w}", file=sys.stderr)
    return (EXIT_OK if res.ok else EXIT_FAILED_CHECK), res


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        width = max(len(k) for k in ex.CATALOG)
        for e in ex.CATALOG.values():
            print(f"{e.id:<{width}}  {e.description}")
        return EXIT_OK
    if args.command == "run":
        code, res = _run(args.config, args.out, args.paper_scale)
        if res is not None:
            print(f"{res.manifest['experiment']}: {len(res.manifest['outputs'])} files in {res.out} "
                  f"({res.manifest['wall_clock_s']:.3f} s)")
        return code
    code, res = _run(args.config or "diagnostics", args.out, False)
    if res is not None:
        for c in res.manifest["summary"]["checks"]:
            print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: {c['value']:.17g}")
    return code


if __name__ == "__main__":
    sys.exit(main())
