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
Runs sweeps of realizations over n and seeds and writes their artifacts:

- ``metrics.jsonl``: a header line with the run time, then one record
  body per realization, sorted by (n, seed)
- ``summary.csv``: the fixed summary columns of every realization
- ``fits.json``: scaling fits and tradeoff ratios, when requested
- ``per_pair.csv``: per-pair throughput and delay, when requested
- ``<metric>.svg``: one log-log plot per fit, when requested
"""
import csv
import dataclasses
import datetime
import json
import logging
import multiprocessing
import sys
from pathlib import Path
from typing import IO, Any, Dict, List, Mapping, Optional, Tuple
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from . import analysis, tools  # noqa: E402
from .cacheutils import ResultDB  # noqa: E402
from .config import NetworkConfig, OverlaySimError  # noqa: E402
from .flow import SUMMARY_FIELDS, run_frames, summary_row  # noqa: E402
from .geometry import PRIMARY, SECONDARY, deploy  # noqa: E402
from .protocol import Schedule  # noqa: E402
from .routing import PathSet  # noqa: E402

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
SUMMARY_FILE = "summary.csv"
FITS_FILE = "fits.json"
PER_PAIR_FILE = "per_pair.csv"
PER_PAIR_FIELDS = (
    "n",
    "seed",
    "tier",
    "pair_id",
    "hops",
    "throughput",
    "delay",
    "delivered",
    "stalled",
)
PRIMARY_FITS = ("lambda_p", "D_p", "tradeoff_p")
SECONDARY_FITS = ("lambda_s", "D_s", "tradeoff_s")


class ExperimentError(OverlaySimError):
    pass


@dataclasses.dataclass(frozen=True)
class ExperimentSpec:
    """what to run and where to put it. ``base`` carries every network
    parameter except n and the seed, which the sweep supplies.
    """

    base: NetworkConfig
    sweep: Tuple[float, ...]
    seeds: int = 1
    out: Optional[Path] = None
    per_pair: bool = False
    plots: bool = False
    fits: Tuple[str, ...] = ()
    cache_db: Optional[str] = None

    def __post_init__(self):
        if not self.sweep:
            raise ExperimentError("the sweep needs at least one n value")
        if len(set(self.sweep)) != len(self.sweep):
            raise ExperimentError("duplicate n values in the sweep")
        if self.seeds < 1:
            raise ExperimentError("seeds must be at least 1")
        if self.plots and self.out is None:
            raise ExperimentError("plots need an output directory")
        unknown = [f for f in self.fits if f not in analysis.DEFAULT_FITS]
        if unknown:
            raise ExperimentError("unknown fit metrics: %s" % unknown)
        # every point must be a valid network; fail before any work
        for n in self.sweep:
            self.base.replace(n=n)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, Any]) -> "ExperimentSpec":
        """build a spec from a merged profile/CLI mapping. ``sweep`` falls
        back to ``n``; ``fit: all`` selects every fit the tiers allow.
        """
        base = NetworkConfig.from_mapping(mapping)
        sweep = tools.parse_values(mapping.get("sweep"))
        if not sweep:
            sweep = tools.parse_values(mapping.get("n", base.n))
        fits = tools.parse_values(mapping.get("fit"), cast=str)
        if "all" in fits:
            fits = PRIMARY_FITS + (() if base.primary_only else SECONDARY_FITS)
        out = mapping.get("out")
        return cls(
            base=base,
            sweep=tuple(sorted(sweep)),
            seeds=int(mapping.get("seeds") or 1),
            out=Path(out) if out else None,
            per_pair=bool(mapping.get("per_pair")),
            plots=bool(mapping.get("plots")),
            fits=tuple(fits),
            cache_db=mapping.get("cache_db"),
        )

    def realizations(self) -> List[NetworkConfig]:
        """one config per (n, seed), in output order."""
        return [
            self.base.replace(n=n, seed=self.base.seed + i)
            for n in sorted(self.sweep)
            for i in range(self.seeds)
        ]


@dataclasses.dataclass
class ExperimentResult:
    records: List[Dict[str, Any]]
    sweep: Optional[analysis.SweepResult] = None
    fits: Dict[str, Any] = dataclasses.field(default_factory=dict)
    files: List[Path] = dataclasses.field(default_factory=list)

    @property
    def bound_violations(self) -> int:
        return sum(r.get("bound_violations", 0) for r in self.records)


def run_realization(
    config: NetworkConfig, per_pair: bool = False
) -> Dict[str, Any]:
    """one full pass: deployment, schedule, routes and frames."""
    deployment = deploy(config)
    schedule = Schedule.for_config(config)
    paths = {t.tier: PathSet.from_tier(t) for t in deployment.tiers()}
    record = run_frames(deployment, paths, schedule, config)
    return record.to_dict(per_pair)


def _realize(job: Tuple[NetworkConfig, bool]) -> Dict[str, Any]:
    return run_realization(*job)


def _has_pairs(body: Mapping) -> bool:
    return "per_pair" in (body.get("primary") or {})


def _without_pairs(body: Dict[str, Any]) -> Dict[str, Any]:
    body = dict(body)
    for tier in PRIMARY, SECONDARY:
        if body.get(tier):
            body[tier] = {
                k: v for k, v in body[tier].items() if k != "per_pair"
            }
    return body


def _db_url(cache_db: str) -> str:
    return cache_db if "://" in cache_db else "sqlite:///" + cache_db


def collect(spec: ExperimentSpec) -> List[Dict[str, Any]]:
    """record bodies of every realization, sorted by (n, seed). Stored
    realizations are taken from the cache; the rest run in a process pool
    capped by OVERLAY_SIM_THREADS.
    """
    configs = spec.realizations()
    bodies: List[Optional[Dict[str, Any]]] = [None] * len(configs)
    db = ResultDB(_db_url(spec.cache_db)) if spec.cache_db else None
    try:
        if db is not None:
            for i, config in enumerate(configs):
                body = db.get(config, config.n, config.seed)
                if body is None:
                    continue
                if _has_pairs(body) or not spec.per_pair:
                    bodies[i] = body
        todo = [i for i, b in enumerate(bodies) if b is None]
        log.info(
            "%d realizations, %d cached",
            len(configs),
            len(configs) - len(todo),
        )
        jobs = [(configs[i], spec.per_pair) for i in todo]
        workers = min(tools.max_workers(), len(jobs))
        if workers > 1:
            with multiprocessing.Pool(processes=workers) as pool:
                fresh = pool.map(_realize, jobs)
        else:
            fresh = [_realize(job) for job in jobs]
        for i, body in zip(todo, fresh):
            bodies[i] = body
        if db is not None and fresh:
            with db:
                for i, body in zip(todo, fresh):
                    db.add(configs[i], body)
    finally:
        if db is not None:
            db.close()
    out = [b if spec.per_pair else _without_pairs(b) for b in bodies]
    out.sort(key=lambda b: (b["n"], b["seed"]))
    return out


def write_jsonl(records: List[Mapping], fh: IO[str]) -> None:
    """the header line holds the only non-reproducible field."""
    header = {"generated": datetime.datetime.now().isoformat()}
    fh.write(json.dumps(header) + "\n")
    for record in records:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_jsonl(fh: IO[str]) -> List[Dict[str, Any]]:
    records = []
    for lineno, line in enumerate(fh, 1):
        if not line.strip():
            continue
        try:
            body = json.loads(line)
        except json.JSONDecodeError as e:
            raise ExperimentError("line %d: %s" % (lineno, e))
        if "generated" in body and "n" not in body:
            continue
        records.append(body)
    return records


def write_summary(records: List[Mapping], fh: IO[str]) -> None:
    writer = csv.DictWriter(fh, SUMMARY_FIELDS, lineterminator="\n")
    writer.writeheader()
    for record in records:
        writer.writerow(summary_row(record))


def write_per_pair(records: List[Mapping], fh: IO[str]) -> int:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(PER_PAIR_FIELDS)
    rows = 0
    for record in records:
        for tier in PRIMARY, SECONDARY:
            pairs = (record.get(tier) or {}).get("per_pair")
            if not pairs:
                continue
            columns = zip(
                pairs["hops"],
                pairs["throughput"],
                pairs["delay"],
                pairs["delivered"],
                pairs["stalled"],
            )
            for i, (hops, lam, delay, delivered, stalled) in enumerate(
                columns
            ):
                writer.writerow(
                    (
                        record["n"],
                        record["seed"],
                        tier,
                        i,
                        hops,
                        lam,
                        "" if delay is None else delay,
                        delivered,
                        int(stalled),
                    )
                )
                rows += 1
    return rows


def run_fits(
    sweep: analysis.SweepResult, metrics
) -> Tuple[Dict[str, analysis.FitReport], Dict[str, Any]]:
    """fit every requested metric; a metric the sweep cannot support is
    reported as an error entry instead of failing the run.
    """
    fits: Dict[str, analysis.FitReport] = {}
    report: Dict[str, Any] = {}
    for metric in metrics:
        try:
            fit = analysis.fit_scaling(sweep, metric)
        except analysis.AnalysisError as e:
            log.warning("no fit for %s: %s", metric, e)
            report[metric] = {"error": str(e)}
            continue
        fits[metric] = fit
        report[metric] = fit.as_dict()
    for tier, metric in (PRIMARY, "tradeoff_p"), (SECONDARY, "tradeoff_s"):
        if metric not in metrics:
            continue
        try:
            report[metric]["ratios"] = analysis.verify_tradeoff(
                sweep, tier
            ).as_dict()
        except analysis.AnalysisError as e:
            report[metric]["ratios"] = {"error": str(e)}
    return fits, report


def emit_plots(
    sweep: analysis.SweepResult,
    fits: Mapping[str, analysis.FitReport],
    out_dir: Path,
) -> List[Path]:
    """one SVG per fit: the per-n means against the predictor on log-log
    axes, the fitted line and its slope.
    """
    if not len(sweep):
        raise ExperimentError("cannot plot an empty sweep")
    out_dir = Path(out_dir)
    written = []
    for metric, fit in fits.items():
        x = np.exp(fit.x)
        y = np.exp(fit.y)
        line = np.exp(fit.intercept + fit.slope * np.asarray(fit.x))
        fig, ax = plt.subplots(figsize=(5, 4))
        try:
            ax.loglog(x, y, "o", label="mean over seeds")
            ax.loglog(x, line, "-", label="fit")
            ax.set_xlabel(fit.predictor)
            ax.set_ylabel(analysis.FIT_METRIC.get(metric, metric))
            ax.set_title(metric)
            ax.annotate(
                "slope %.3f" % fit.slope,
                xy=(0.05, 0.9),
                xycoords="axes fraction",
            )
            ax.legend(loc="lower right")
            path = out_dir / ("%s.svg" % metric)
            try:
                fig.savefig(path, format="svg", metadata={"Date": None})
            except OSError as e:
                raise ExperimentError("cannot write %s: %s" % (path, e))
        finally:
            plt.close(fig)
        written.append(path)
    log.info("wrote %d plots to %s", len(written), out_dir)
    return written


def _open(path: Path):
    try:
        return open(path, "w", encoding="utf8", newline="")
    except OSError as e:
        raise ExperimentError("cannot write %s: %s" % (path, e))


def run_experiment(
    spec: ExperimentSpec, stream: Optional[IO[str]] = None
) -> ExperimentResult:
    """run every realization and write the artifacts. Without an output
    directory the JSON-lines records go to ``stream`` (stdout).
    """
    records = collect(spec)
    result = ExperimentResult(records)
    fits: Dict[str, analysis.FitReport] = {}
    if spec.fits:
        try:
            result.sweep = analysis.SweepResult.from_records(records)
        except analysis.AnalysisError as e:
            raise ExperimentError(str(e))
        fits, result.fits = run_fits(result.sweep, spec.fits)
    if spec.out is None:
        write_jsonl(records, stream or sys.stdout)
        return result
    out = Path(spec.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExperimentError("cannot create %s: %s" % (out, e))
    with _open(out / METRICS_FILE) as fh:
        write_jsonl(records, fh)
    with _open(out / SUMMARY_FILE) as fh:
        write_summary(records, fh)
    result.files += [out / METRICS_FILE, out / SUMMARY_FILE]
    if spec.per_pair:
        with _open(out / PER_PAIR_FILE) as fh:
            write_per_pair(records, fh)
        result.files.append(out / PER_PAIR_FILE)
    if spec.fits:
        with _open(out / FITS_FILE) as fh:
            json.dump(result.fits, fh, indent=2, sort_keys=True)
            fh.write("\n")
        result.files.append(out / FITS_FILE)
        if spec.plots:
            result.files += emit_plots(result.sweep, fits, out)
    log.info("wrote %d files to %s", len(result.files), out)
    return result
