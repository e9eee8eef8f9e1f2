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
Monte Carlo checks of the node-count and occupancy bounds, and log-log
scaling fits over sweeps of realizations.
"""
import collections
import dataclasses
import logging
import math
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional
import numpy as np
from scipy import stats
from .config import DomainError, NetworkConfig, OverlaySimError
from .geometry import PRIMARY, SECONDARY, build_grid
from . import tools

log = logging.getLogger(__name__)

SLACK = 2.0
MIN_FIT_POINTS = 3
TRIAL_BLOCK = 100


class AnalysisError(OverlaySimError):
    pass


def chernoff_tail(mu: float, x: float) -> float:
    """e**-mu (e mu)**x / x**x, bounding P(X >= x) for x > mu and
    P(X <= x) for x < mu when X is Poisson(mu).
    """
    if mu <= 0 or x <= 0:
        raise DomainError("chernoff_tail needs mu > 0 and x > 0")
    if x == mu:
        return 1.0
    return math.exp(-mu + x - x * math.log(x / mu))


def exact_tail(mu: float, x: float) -> float:
    """the Poisson tail chernoff_tail bounds, on the same side of mu."""
    if x > mu:
        return float(stats.poisson.sf(math.ceil(x) - 1, mu))
    return float(stats.poisson.cdf(math.floor(x), mu))


def check_chernoff(
    mus: Iterable[float] = range(1, 51), xs: Iterable[float] = range(1, 101)
) -> Dict[str, Any]:
    """compare chernoff_tail with the exact tail on a grid of (mu, x).
    The bound holds with equality at x == mu, which is skipped.
    """
    xs = list(xs)
    checked, violations, worst = 0, [], 0.0
    for mu in mus:
        for x in xs:
            if x == mu:
                continue
            bound, exact = chernoff_tail(mu, x), exact_tail(mu, x)
            checked += 1
            # relative slack for the far tails, where both underflow
            if bound < exact * (1 - 1e-12):
                violations.append((mu, x))
            if bound > 0:
                worst = max(worst, exact / bound)
    return {
        "checked": checked,
        "violations": violations,
        "max_ratio": worst,
    }


def count_bound(density: float) -> float:
    """bound on P(total count outside (density/2, e * density))."""
    return (2 / math.e) ** (density / 2) + math.exp(-density)


def occupancy_bound(density: float, k: float) -> float:
    """union bound on some cell being empty (or overfull) when cells have
    area k ln(density) / density.
    """
    return 1 / (k * density ** (k - 1) * math.log(density))


@dataclasses.dataclass(frozen=True)
class OccupancyReport:
    tier: str
    density: float
    k: float
    cells_per_side: int
    trials: int
    empty_freq: float
    empty_bound: float
    empty_grid_bound: float
    over_freq: float
    over_bound: float
    over_grid_bound: float
    count_freq: float
    count_bound: float

    @property
    def passed(self) -> bool:
        return (
            self.empty_freq <= SLACK * self.empty_bound
            and self.over_freq <= SLACK * self.over_bound
            and self.count_freq <= SLACK * self.count_bound
        )

    def as_dict(self) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        out["passed"] = self.passed
        return out


def validate_occupancy(
    config: NetworkConfig,
    trials: int = 1000,
    tier: str = PRIMARY,
    cluster_aligned: bool = False,
    seed: Optional[int] = None,
) -> OccupancyReport:
    """Monte Carlo frequencies of an empty cell, an overfull cell and a
    total count outside (density/2, e density), next to their bounds.
    Cell counts of a Poisson process are independent Poisson variables,
    which is what is sampled.
    """
    if trials < 100:
        raise DomainError("validate_occupancy needs at least 100 trials")
    if tier == PRIMARY:
        density, k, area = config.n, config.k1, config.a_p
    elif tier == SECONDARY:
        density, k, area = config.m, config.k2, config.a_s
    else:
        raise DomainError("unknown tier %r" % tier)
    grid = build_grid(area, tier, 5 if cluster_aligned else 1)
    cells = grid.num_cells
    lam = density * grid.actual_area
    ceiling = k * math.e * math.log(density)
    rng = tools.rng_for(config.seed if seed is None else seed, "occupancy")
    empty = over = outside = 0
    for start in range(0, trials, TRIAL_BLOCK):
        block = min(TRIAL_BLOCK, trials - start)
        counts = rng.poisson(lam, size=(block, cells))
        totals = counts.sum(axis=1)
        empty += int(np.count_nonzero((counts == 0).any(axis=1)))
        over += int(np.count_nonzero((counts > ceiling).any(axis=1)))
        outside += int(
            np.count_nonzero(
                (totals <= density / 2) | (totals >= math.e * density)
            )
        )
    printed = occupancy_bound(density, k)
    report = OccupancyReport(
        tier=tier,
        density=density,
        k=k,
        cells_per_side=grid.cells_per_side,
        trials=trials,
        empty_freq=empty / trials,
        empty_bound=printed,
        empty_grid_bound=min(1.0, cells * math.exp(-lam)),
        over_freq=over / trials,
        over_bound=printed,
        over_grid_bound=min(1.0, cells * chernoff_tail(lam, ceiling)),
        count_freq=outside / trials,
        count_bound=count_bound(density),
    )
    log.info(
        "%s occupancy over %d trials: empty %.3g (bound %.3g)",
        tier,
        trials,
        report.empty_freq,
        report.empty_bound,
    )
    return report


def _reader(tier: str, field: str) -> Callable[[Mapping], Any]:
    def read(record: Mapping) -> Any:
        return (record.get(tier) or {}).get(field)

    return read


_FIELDS = (
    ("lambda", "lambda_min"),
    ("lambda_mean", "lambda_mean"),
    ("T", "T"),
    ("D", "D"),
    ("max_load", "max_load"),
    ("path_length", "path_length_mean"),
)
# metric name -> how to read it from a JSON-lines record body
METRICS: Dict[str, Callable[[Mapping], Any]] = {
    "%s_%s" % (name, suffix): _reader(tier, field)
    for tier, suffix in ((PRIMARY, "p"), (SECONDARY, "s"))
    for name, field in _FIELDS
}


@dataclasses.dataclass(frozen=True)
class SweepPoint:
    n: float
    m: float
    a_p: float
    a_s: float
    seeds: int
    means: Dict[str, float]
    percentiles: Dict[str, List[float]]

    def get(self, metric: str) -> float:
        try:
            return self.means[metric]
        except KeyError:
            raise AnalysisError("no metric %r in the sweep" % metric)


def _finite(values) -> List[float]:
    return [
        float(v)
        for v in values
        if v is not None and math.isfinite(float(v))
    ]


@dataclasses.dataclass(frozen=True)
class SweepResult:
    points: List[SweepPoint]

    def __post_init__(self):
        ns = [p.n for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise AnalysisError("sweep n values must strictly increase")

    def __len__(self):
        return len(self.points)

    @classmethod
    def from_records(cls, records: Iterable[Mapping]) -> "SweepResult":
        """group record bodies by n and average each metric over seeds."""
        groups: Dict[float, List[Mapping]] = collections.defaultdict(list)
        for record in records:
            groups[float(record["n"])].append(record)
        points = []
        for n in sorted(groups):
            group = groups[n]
            config = NetworkConfig.from_mapping(
                {**group[0].get("config", {}), "n": n}
            )
            means, pcts = {}, {}
            for name, read in METRICS.items():
                values = _finite(read(r) for r in group)
                if not values:
                    continue
                means[name] = tools.fsum_mean(values)
                pcts[name] = [
                    float(v) for v in np.percentile(values, [10, 50, 90])
                ]
            points.append(
                SweepPoint(
                    n=n,
                    m=float(group[0].get("m", config.m)),
                    a_p=config.a_p,
                    a_s=config.a_s,
                    seeds=len(group),
                    means=means,
                    percentiles=pcts,
                )
            )
        return cls(points)


PREDICTORS: Dict[str, Callable[[SweepPoint], float]] = {
    "n_log_n": lambda p: p.n * math.log(p.n),
    "sqrt_n_over_log_n": lambda p: math.sqrt(p.n / math.log(p.n)),
    "m_log_m": lambda p: p.m * math.log(p.m),
    "sqrt_m_over_log_m": lambda p: math.sqrt(p.m / math.log(p.m)),
    "n_lambda_p": lambda p: p.n * p.get("lambda_p"),
    "m_lambda_s": lambda p: p.m * p.get("lambda_s"),
    "n_sqrt_a_p": lambda p: p.n * math.sqrt(p.a_p),
    "m_sqrt_a_s": lambda p: p.m * math.sqrt(p.a_s),
    "n": lambda p: p.n,
}

# metric -> (predictor, expected slope)
DEFAULT_FITS: Dict[str, Any] = {
    "lambda_p": ("n_log_n", -0.5),
    "D_p": ("sqrt_n_over_log_n", 1.0),
    "lambda_s": ("m_log_m", -0.5),
    "D_s": ("sqrt_m_over_log_m", 1.0),
    "tradeoff_p": ("n_lambda_p", 1.0),
    "tradeoff_s": ("m_lambda_s", 1.0),
    "max_load_p": ("n_sqrt_a_p", 1.0),
    "max_load_s": ("m_sqrt_a_s", 1.0),
}
# tradeoff fits regress delay on n * lambda
FIT_METRIC = {"tradeoff_p": "D_p", "tradeoff_s": "D_s"}


@dataclasses.dataclass(frozen=True)
class FitReport:
    metric: str
    predictor: str
    slope: float
    intercept: float
    r_squared: float
    ci_half_width: float
    points: int
    excluded: int
    expected_slope: Optional[float] = None
    x: List[float] = dataclasses.field(default_factory=list)
    y: List[float] = dataclasses.field(default_factory=list)

    def as_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def fit_scaling(
    sweep: SweepResult, metric: str, predictor: Optional[str] = None
) -> FitReport:
    """ordinary least squares of ln(metric) on ln(predictor) with a 95%
    confidence half-width on the slope. Non-positive or missing metric
    values are dropped and counted.
    """
    default, expected = DEFAULT_FITS.get(metric, (None, None))
    predictor = predictor or default
    if predictor not in PREDICTORS:
        raise AnalysisError("unknown predictor %r" % predictor)
    if len(sweep) < MIN_FIT_POINTS:
        raise AnalysisError(
            "a fit needs at least %d sweep points, got %d"
            % (MIN_FIT_POINTS, len(sweep))
        )
    target = FIT_METRIC.get(metric, metric)
    xs, ys, excluded = [], [], 0
    for point in sweep.points:
        value = point.means.get(target)
        try:
            x = PREDICTORS[predictor](point)
        except AnalysisError:
            x = None
        if value is None or value <= 0 or x is None or not x > 0:
            excluded += 1
            continue
        xs.append(math.log(x))
        ys.append(math.log(value))
    if excluded:
        log.warning("%s: %d sweep points left out", metric, excluded)
    if len(xs) < MIN_FIT_POINTS:
        raise AnalysisError(
            "%s: only %d usable sweep points" % (metric, len(xs))
        )
    fit = stats.linregress(xs, ys)
    half = stats.t.ppf(0.975, len(xs) - 2) * fit.stderr
    return FitReport(
        metric=metric,
        predictor=predictor,
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=min(1.0, float(fit.rvalue) ** 2),
        ci_half_width=float(half),
        points=len(xs),
        excluded=excluded,
        expected_slope=expected if predictor == default else None,
        x=xs,
        y=ys,
    )


@dataclasses.dataclass(frozen=True)
class TradeoffReport:
    tier: str
    ratios: List[float]
    spread: float
    sufficient: bool

    def as_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)


def verify_tradeoff(sweep: SweepResult, tier: str = PRIMARY) -> TradeoffReport:
    """ratio of delay to density times per-pair throughput at every sweep
    point, and the max/min spread of those ratios.
    """
    if not len(sweep):
        raise AnalysisError("empty sweep")
    suffix = "p" if tier == PRIMARY else "s"
    ratios = []
    for point in sweep.points:
        delay = point.means.get("D_" + suffix)
        lam = point.means.get("lambda_" + suffix)
        density = point.n if tier == PRIMARY else point.m
        if delay is None or lam is None or lam <= 0:
            continue
        ratios.append(delay / (density * lam))
    if not ratios:
        raise AnalysisError("no %s tradeoff ratios in the sweep" % tier)
    spread = max(ratios) / min(ratios) if len(ratios) > 1 else 1.0
    sufficient = len(ratios) >= MIN_FIT_POINTS
    if not sufficient:
        log.warning("%s tradeoff from %d point(s) only", tier, len(ratios))
    return TradeoffReport(tier, ratios, spread, sufficient)
