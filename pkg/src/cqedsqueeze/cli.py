"""Command line entry point: ``run``, ``sweep`` and ``list-scenarios``.

Exit codes: 0 success, 2 invalid configuration, 3 numerical failure. Errors
are printed to stderr as one JSON object ``{"error": code, "message": ...}``.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings

from .errors import ConfigError, NumericalFailure, SqueezeError
from .scenarios import SWEEP_FAMILIES, builtin_scenarios, get_builtin, load_config, run_scenario, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parse_value(text: str):
    text = text.strip()
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cqedsqueeze", description="Two-mode squeezing simulations in circuit QED.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run a builtin scenario or a config file")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", help="builtin scenario name (see list-scenarios)")
    src.add_argument("--config", help="JSON or INI config file")
    run.add_argument("--out", help="output directory (default: output.dir)")
    run.add_argument("--traj", type=int, help="number of MCWF trajectories")
    run.add_argument("--seed", type=int, help="MCWF master seed")
    run.add_argument("--fock", type=int, help="Fock cutoff for both modes")
    run.add_argument("--strict", action="store_true", help="treat truncation warnings as errors")

    sweep = sub.add_parser("sweep", help="run one config over several values of a field")
    src = sweep.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help="JSON or INI config file")
    src.add_argument("--scenario", help="builtin scenario name")
    sweep.add_argument("--axis", help="field as section.name, e.g. rates.kappa")
    sweep.add_argument("--values", help="comma separated values")
    sweep.add_argument("--out", help="output directory")
    sweep.add_argument("--traj", type=int)
    sweep.add_argument("--seed", type=int)
    sweep.add_argument("--fock", type=int)
    sweep.add_argument("--strict", action="store_true")

    sub.add_parser("list-scenarios", help="print the builtin scenarios")
    return parser


def _load(args):
    cfg = get_builtin(args.scenario) if args.scenario else load_config(args.config)
    return cfg.with_overrides(n_traj=args.traj, seed=args.seed, fock=args.fock, out=args.out, strict=args.strict)


def _cmd_run(args) -> int:
    cfg = _load(args)
    rec = run_scenario(cfg)
    print(json.dumps({"csv": rec.csv_path, "json": rec.json_path,
                      "min_V_ar": rec.summary()["min_V_ar"], "max_dB": rec.summary()["max_dB"],
                      "warnings": rec.warnings}, indent=2))
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    axis, values = args.axis, args.values
    if axis is None and args.scenario in SWEEP_FAMILIES:
        axis, default = SWEEP_FAMILIES[args.scenario]
        values = values if values is not None else ",".join(repr(v) for v in default)
    if axis is None:
        raise ConfigError("--axis is required")
    vals = [_parse_value(v) for v in (values or "").split(",") if v.strip()]
    result = run_sweep(cfg, axis, vals)
    print(json.dumps({"axis": axis, "values": vals, "csv": result.csv_path,
                      "runs": [r.csv_path for r in result.runs]}, indent=2))
    return EXIT_OK


def _cmd_list() -> int:
    for name, cfg in builtin_scenarios().items():
        family = SWEEP_FAMILIES.get(name)
        extra = f"  [sweep {family[0]} over {list(family[1])}]" if family else ""
        print(f"{name:16s} {','.join(cfg.engines):55s} {cfg.description}{extra}")
    return EXIT_OK


def _fail(exc: SqueezeError | Exception, code: int) -> int:
    err = getattr(exc, "code", "error")
    print(json.dumps({"error": err, "message": str(exc)}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    warnings.simplefilter("default")
    try:
        args = build_parser().parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        return _cmd_list()
    except ConfigError as exc:
        return _fail(exc, EXIT_CONFIG)
    except NumericalFailure as exc:
        return _fail(exc, EXIT_NUMERICAL)
    except SqueezeError as exc:
        return _fail(exc, EXIT_NUMERICAL)


if __name__ == "__main__":
    sys.exit(main())
