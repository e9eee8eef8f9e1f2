# Copyright 2026, the overlaysim authors
#
# This library is free software; you can redistribute it and/or
# modify it either under the terms of:
#
#   the EUPL, Version 1.1 or – as soon they will be approved by the
#   European Commission - subsequent versions of the EUPL (the
#   "Licence"). You may obtain a copy of the Licence at:
#   https://joinup.ec.europa.eu/software/page/eupl
#
# or
#
#   the terms of the Mozilla Public License, v. 2.0. If a copy of the
#   MPL was not distributed with this file, You can obtain one at
#   http://mozilla.org/MPL/2.0/.
#
# If you do not alter this notice, a recipient may use your version of
# this file under either the MPL or the EUPL.
"""
``overlaysim`` command line. Every network flag may also come from a
packaged profile (``--profile``) or a YAML file (``--config``); flags
given on the command line win.
"""
import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional
from . import analysis, experiment, phy, tools
from .config import Config, ConfigError, NetworkConfig, OverlaySimError
from .geometry import PRIMARY, SECONDARY, deploy, dump_deployment
from .geometry import load_deployment
from .protocol import Schedule, compute_M, render_pbm
from .routing import PathSet, dump_paths

log = logging.getLogger(__name__)

# (flag, type, help) of every network parameter
NETWORK_FLAGS = (
    ("--n", str, "primary density; a comma list makes a sweep"),
    ("--beta", float, "secondary density exponent, m = n**beta"),
    ("--k1", float, "primary cell area factor"),
    ("--k2", float, "secondary cell area factor"),
    ("--alpha", float, "path-loss exponent (> 2)"),
    ("--a", float, "channel constant A"),
    ("--p0", float, "primary normalised power"),
    ("--p1", float, "secondary normalised power"),
    ("--n0", float, "noise power"),
    ("--tp", float, "primary slot length"),
    ("--frames", int, "primary frames to simulate"),
    ("--warmup", int, "primary frames left out of delay statistics"),
    ("--phy-frames", int, "primary frames of link-rate probing"),
    ("--seed", int, "base seed"),
)


def _add_network(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group("network")
    for flag, kind, text in NETWORK_FLAGS:
        group.add_argument(flag, type=kind, help=text)
    group.add_argument(
        "--primary-only",
        action="store_true",
        default=None,
        help="leave the secondary tier out",
    )
    group.add_argument(
        "--validate-bounds",
        action="store_true",
        default=None,
        help="check interference and rate bounds in every frame",
    )
    group.add_argument("--config", help="YAML file of flag values")
    group.add_argument("--profile", help="packaged profile, e.g. desk")


def _add_run(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seeds", type=int, help="seeds per sweep point")
    parser.add_argument("--out", help="output directory")
    parser.add_argument(
        "--per-pair",
        action="store_true",
        default=None,
        help="also write per-pair throughput and delay",
    )
    parser.add_argument("--cache-db", help="SQL result cache (path or URL)")


def _settings(args: argparse.Namespace) -> Dict[str, Any]:
    """merged profile, config file and flags as one flat mapping."""
    skip = {"command", "verbose", "config", "profile", "func", "n"}
    overrides = {k: v for k, v in vars(args).items() if k not in skip}
    if getattr(args, "n", None) is not None:
        values = tools.parse_values(args.n)
        if not values:
            raise ConfigError("--n needs a value")
        overrides["n"] = values[0]
        if len(values) > 1 and not getattr(args, "sweep", None):
            overrides["sweep"] = values
    settings = Config(args.config).merged(args.profile, overrides)
    if isinstance(settings.get("n"), (list, tuple, str)):
        values = tools.parse_values(settings["n"])
        settings.setdefault("sweep", values)
        settings["n"] = values[0]
    return settings


def _network(args: argparse.Namespace) -> NetworkConfig:
    return NetworkConfig.from_mapping(_settings(args))


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf8")
    else:
        sys.stdout.write(text)


def cmd_simulate(args) -> int:
    settings = _settings(args)
    settings.pop("fit", None)
    settings.pop("sweep", None)
    if args.seeds is None:
        settings["seeds"] = 1
    experiment.run_experiment(experiment.ExperimentSpec.from_mapping(settings))
    return 0


def cmd_sweep(args) -> int:
    spec = experiment.ExperimentSpec.from_mapping(_settings(args))
    result = experiment.run_experiment(spec)
    if result.bound_violations:
        log.warning("%d bound violations", result.bound_violations)
    if spec.out is None and result.fits:
        sys.stderr.write(json.dumps(result.fits, indent=2) + "\n")
    return 0


def cmd_analyze(args) -> int:
    try:
        with open(args.infile, encoding="utf8") as fh:
            records = experiment.read_jsonl(fh)
    except OSError as e:
        raise experiment.ExperimentError(str(e))
    sweep = analysis.SweepResult.from_records(records)
    metrics = tools.parse_values(args.fit, cast=str)
    if "all" in metrics:
        metrics = experiment.PRIMARY_FITS + experiment.SECONDARY_FITS
    fits, report = experiment.run_fits(sweep, metrics)
    _write(args.report, json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.plots:
        if not args.out:
            raise experiment.ExperimentError("--plots needs --out")
        Path(args.out).mkdir(parents=True, exist_ok=True)
        experiment.emit_plots(sweep, fits, Path(args.out))
    return 0


def bounds_table(config: NetworkConfig) -> Dict[str, Any]:
    table: Dict[str, Any] = {
        "n": config.n,
        "alpha": config.alpha,
        "series_8_4": phy.series_sum(8, 4, config.alpha),
        "series_8_3": phy.series_sum(8, 3, config.alpha),
        "series_bound_8_4": phy.series_bound(8, 4, config.alpha),
        "series_bound_8_3": phy.series_bound(8, 3, config.alpha),
    }
    table.update(phy.bound_set(config).as_dict())
    if not config.primary_only and config.large_enough:
        spec = compute_M(config)
        table["M"] = spec.M
        table["region_side"] = spec.side_length
    return table


def cmd_bounds(args) -> int:
    table = bounds_table(_network(args))
    width = max(map(len, table))
    for key, value in table.items():
        print("%-*s  %.10g" % (width, key, value))
    if args.csv:
        writer = csv.DictWriter(sys.stdout, list(table), lineterminator="\n")
        writer.writeheader()
        writer.writerow(table)
    return 0


def cmd_mask_dump(args) -> int:
    config = _network(args)
    if config.primary_only:
        raise ConfigError("mask-dump needs the secondary tier")
    schedule = Schedule.for_config(config)
    _write(args.out, render_pbm(schedule.mask(args.slot)))
    return 0


def cmd_paths(args) -> int:
    if args.load:
        with open(args.load, encoding="utf8") as fh:
            deployment = load_deployment(fh)
    else:
        deployment = deploy(_network(args))
    if args.deployment:
        with open(args.deployment, "w", encoding="utf8") as fh:
            dump_deployment(deployment, fh)
    path_sets = [PathSet.from_tier(t) for t in deployment.tiers()]
    if args.dump and args.dump != "-":
        with open(args.dump, "w", encoding="utf8", newline="") as fh:
            rows = dump_paths(path_sets, fh)
    else:
        rows = dump_paths(path_sets, sys.stdout)
    log.info("%d path rows", rows)
    return 0


def cmd_validate(args) -> int:
    config = _network(args)
    if args.tier != "both":
        tiers: List[str] = [args.tier]
    elif config.primary_only:
        tiers = [PRIMARY]
    else:
        tiers = [PRIMARY, SECONDARY]
    reports = [
        analysis.validate_occupancy(
            config,
            args.trials,
            tier,
            cluster_aligned=args.cluster_aligned,
        )
        for tier in tiers
    ]
    chernoff = analysis.check_chernoff()
    out = {
        "occupancy": [r.as_dict() for r in reports],
        "chernoff": {
            "checked": chernoff["checked"],
            "violations": len(chernoff["violations"]),
            "max_ratio": chernoff["max_ratio"],
        },
    }
    print(json.dumps(out, indent=2, sort_keys=True))
    ok = all(r.passed for r in reports) and not chernoff["violations"]
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="overlaysim",
        description="overlaid primary/secondary ad hoc network simulator",
    )
    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        help="-v for progress, -vv for debugging output",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="realizations at a single n")
    _add_network(p)
    _add_run(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="realizations over a list of n")
    _add_network(p)
    _add_run(p)
    p.add_argument("--sweep", help="comma list of n values")
    p.add_argument("--fit", help="metrics to fit, comma list or 'all'")
    p.add_argument(
        "--plots",
        action="store_true",
        default=None,
        help="write one SVG per fit",
    )
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("analyze", help="fit a stored metrics file")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--fit", default="all")
    p.add_argument("--report", help="fit report path (default stdout)")
    p.add_argument("--plots", action="store_true")
    p.add_argument("--out", help="plot directory")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("bounds", help="interference and rate bounds")
    _add_network(p)
    p.add_argument("--csv", action="store_true", help="also print CSV")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("mask-dump", help="preservation mask as PBM")
    _add_network(p)
    p.add_argument("--slot", type=int, default=0)
    p.add_argument("--out", help="PBM path (default stdout)")
    p.set_defaults(func=cmd_mask_dump)

    p = sub.add_parser("paths", help="cell routes of a deployment as CSV")
    _add_network(p)
    p.add_argument(
        "--dump",
        nargs="?",
        const="-",
        help="CSV path; bare or - for stdout (the default)",
    )
    p.add_argument("--deployment", help="also write the deployment here")
    p.add_argument("--load", help="read a deployment instead of sampling")
    p.set_defaults(func=cmd_paths)

    p = sub.add_parser("validate", help="occupancy and Chernoff checks")
    _add_network(p)
    p.add_argument("--trials", type=int, default=1000)
    p.add_argument(
        "--tier", choices=(PRIMARY, SECONDARY, "both"), default="both"
    )
    p.add_argument("--cluster-aligned", action="store_true")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = (logging.WARNING, logging.INFO, logging.DEBUG)
    logging.basicConfig(
        level=level[min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as e:
        sys.stderr.write("overlaysim: %s\n" % e)
        return 2
    except OverlaySimError as e:
        sys.stderr.write("overlaysim: %s\n" % e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
