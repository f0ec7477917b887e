"""Command line entry point: ``coagkit [global flags] <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence,
4 I/O error.
"""
from __future__ import annotations

import argparse
import sys

from .kernels import KernelDomainError
from .scenario import (
    FORMATS,
    MODES,
    ConfigError,
    ConvergenceError,
    dumps_json,
    parse_sections,
    run_scenario,
    scenario_from_sections,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


_KERNEL_FLAGS = {
    "kernel": ("kernel", "kind"), "value": ("kernel", "value"), "gamma": ("kernel", "gamma"),
    "lambda_": ("kernel", "lambda"), "c": ("kernel", "c"),
}
_REPEATABLE = {"source"}  # "--source k:rate" may be given several times

# subcommand flag -> (section, key)
_FLAGS = {
    "simulate": {
        **_KERNEL_FLAGS, "nmax": ("solver", "nmax"), "tmax": ("solver", "tmax"),
        "dt_tol": ("solver", "tol_step"), "source": ("source", "rates"), "h": ("source", "h"),
        "checkpoint": ("solver", "checkpoints"), "flux": ("solver", "flux_cuts"),
        "cutoff_mode": ("solver", "cutoff_mode"), "initial": ("solver", "initial"),
    },
    "steady": {
        **_KERNEL_FLAGS, "nmax": ("solver", "nmax"), "source": ("source", "rates"), "h": ("source", "h"),
        "tol": ("steady", "tol"), "t_cap": ("steady", "t_cap"), "method": ("steady", "method"),
        "cutoff_mode": ("solver", "cutoff_mode"),
    },
    "sweep": {
        **_KERNEL_FLAGS, "source": ("source", "rates"), "h": ("source", "h"),
        "truncations": ("sweep", "truncations"), "method": ("sweep", "method"),
    },
    "multicomp": {
        "dim": ("multicomp", "dim"), "cap": ("multicomp", "cap"), "tmax": ("multicomp", "tmax"),
        "source": ("multicomp", "h"), "mode": ("multicomp", "mode"), "heatmap": ("multicomp", "heatmap"),
    },
    "oracle": {
        "kind": ("oracle", "kind"), "kmax": ("oracle", "kmax"), "t": ("oracle", "t"),
        "h": ("oracle", "h"), "z": ("oracle", "z"),
    },
    "classify": dict(_KERNEL_FLAGS),
}

_HELP = {
    "simulate": "integrate the one-component equation and write n_k at checkpoints",
    "steady": "drive the one-component system to its steady state under injection",
    "sweep": "steady totals over growing truncations and a regime verdict",
    "multicomp": "multicomponent solve or closed-form profiles",
    "oracle": "tables of the closed-form constant-kernel solutions",
    "classify": "existence verdict for power-law envelope exponents",
}


def _global_flags(p: argparse.ArgumentParser, suppress: bool) -> None:
    # accepted before or after the subcommand; the subcommand copy never
    # overwrites a value given before it
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", default=d(None), help="scenario file (INI-style sections)")
    p.add_argument("--output", default=d(None), help="result file; printed to stdout when omitted")
    p.add_argument("--format", default=d(None), choices=FORMATS, help="result format (default csv)")
    p.add_argument("--threads", default=d(1), type=int, help="worker count (results do not depend on it)")
    p.add_argument("--seedless", default=d(False), action="store_true",
                   help="assert that no random numbers are used (always true)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="coagkit", description="Discrete coagulation with injection.")
    _global_flags(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for mode in MODES:
        sp = sub.add_parser(mode, help=_HELP[mode], description=_HELP[mode], parents=[common])
        for flag in _FLAGS[mode]:
            name = "--" + flag.rstrip("_").replace("_", "-")
            repeat = flag in _REPEATABLE and mode != "multicomp"
            sp.add_argument(name, dest=flag, default=None, metavar=flag.rstrip("_").upper(),
                            action="append" if repeat else "store")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads < 1:
        parser.error("--threads must be >= 1")

    try:
        raw: dict[str, dict[str, str]] = {}
        if args.config:
            try:
                with open(args.config) as fh:
                    raw = parse_sections(fh.read())
            except OSError as exc:
                print(f"coagkit: cannot read config: {exc}", file=sys.stderr)
                return EXIT_IO
        for flag, (sec, key) in _FLAGS[args.command].items():
            val = getattr(args, flag)
            if isinstance(val, list):
                val = ",".join(val)
            if val is not None:
                raw.setdefault(sec, {})[key] = val
        if args.output is not None:
            raw.setdefault("output", {})["path"] = args.output
        if args.format is not None:
            raw.setdefault("output", {})["format"] = args.format
        if args.command == "classify":
            # the verdict is a one-line JSON object unless csv is asked for
            raw.setdefault("output", {}).setdefault("format", "json")
        scenario = scenario_from_sections(raw, mode=args.command)
    except ConfigError as exc:
        print(f"coagkit: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        manifest = run_scenario(scenario, threads=args.threads, echo=sys.stdout.write)
    except ConvergenceError as exc:
        print(f"coagkit: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"coagkit: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KernelDomainError) as exc:
        print(f"coagkit: config error: scenario '{scenario.name}' ({scenario.mode}): {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if scenario.output_path:
        sys.stdout.write(dumps_json(manifest.to_dict()))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
