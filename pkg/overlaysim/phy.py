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
Physical layer: pathloss, transmit powers, SINR link rates, and the
analytic interference and rate bounds the protocols guarantee.

Rates are in nats per time unit and already carry the 1/25 TDMA factor.
"""
import dataclasses
import logging
import math
from typing import Dict, Optional, Sequence, Tuple
import numpy as np
from scipy import special
from .config import DomainError, NetworkConfig
from .geometry import PRIMARY, SECONDARY

log = logging.getLogger(__name__)

TDMA_FACTOR = 1 / 25
SERIES_RTOL = 1e-12
EM_ORDER = 5
BOUND_RTOL = 1e-12


class DivergenceError(DomainError):
    pass


def pathloss(r, alpha: float, A: float = 1.0):
    """A * r**-alpha for a distance or an array of distances."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("pathloss needs positive distances")
    gain = A * r ** (-alpha)
    return float(gain) if gain.ndim == 0 else gain


def tx_power(tier: str, config: NetworkConfig, cell_area: float) -> float:
    if cell_area <= 0:
        raise DomainError("cell area must be positive")
    scale = config.P0 if tier == PRIMARY else config.P1
    return scale * cell_area ** (config.alpha / 2)


@dataclasses.dataclass(frozen=True)
class TxSet:
    """the transmitters active in one slot of one tier."""

    tier: str
    positions: np.ndarray
    power: float

    def __len__(self):
        return len(self.positions)

    @classmethod
    def empty(cls, tier: str, power: float = 0.0) -> "TxSet":
        return cls(tier, np.zeros((0, 2)), power)


@dataclasses.dataclass(frozen=True)
class LinkSample:
    tier: str
    tx: Tuple[float, float]
    rx: Tuple[float, float]
    tx_power: float
    rate: float
    interference_same_tier: float
    interference_cross_tier: float

    @property
    def distance(self) -> float:
        return math.dist(self.tx, self.rx)


def _received(
    rx: np.ndarray, txs: np.ndarray, power: float, config, own=None
):
    """(L, K) received powers from every transmitter at every receiver.
    ``own[l]`` is left out for receiver l; it may sit on that receiver,
    as when a destination is its own cell's relay.
    """
    if not len(txs) or not len(rx):
        return np.zeros((len(rx), len(txs)))
    d = np.linalg.norm(rx[:, None, :] - txs[None, :, :], axis=2)
    if own is not None and len(own):
        d[np.arange(len(rx)), own] = np.inf
    if np.any(d <= 0):
        raise DomainError("a receiver is co-located with a transmitter")
    return power * config.A * d ** (-config.alpha)


@dataclasses.dataclass(frozen=True)
class LinkBatch:
    rate: np.ndarray
    signal: np.ndarray
    same: np.ndarray
    cross: np.ndarray
    distance: np.ndarray


def evaluate_links(
    tx: np.ndarray,
    rx: np.ndarray,
    own: np.ndarray,
    same: TxSet,
    cross: Optional[TxSet],
    config: NetworkConfig,
) -> LinkBatch:
    """rates of L links at once. ``own[l]`` is the index in ``same`` of the
    transmitter whose cell serves link l; that transmitter is left out of
    the link's same-tier interference. ``tx`` may differ from the cell's
    relay (a source sending its own packet).
    """
    tx = np.asarray(tx, dtype=float).reshape(-1, 2)
    rx = np.asarray(rx, dtype=float).reshape(-1, 2)
    distance = np.linalg.norm(tx - rx, axis=1)
    if np.any(distance <= 0):
        raise DomainError("a link's transmitter and receiver coincide")
    signal = same.power * config.A * distance ** (-config.alpha)
    g_same = _received(rx, same.positions, same.power, config, own)
    i_same = g_same.sum(axis=1)
    if cross is not None and len(cross):
        i_cross = _received(rx, cross.positions, cross.power, config).sum(
            axis=1
        )
    else:
        i_cross = np.zeros(len(rx))
    rate = TDMA_FACTOR * np.log1p(signal / (config.N0 + i_same + i_cross))
    return LinkBatch(rate, signal, i_same, i_cross, distance)


def link_rate(
    rx: Sequence[float],
    server: int,
    same: TxSet,
    cross: Optional[TxSet],
    config: NetworkConfig,
) -> LinkSample:
    """rate of the link from ``same.positions[server]`` to ``rx`` with
    every other transmitter of both tiers interfering.
    """
    if not 0 <= server < len(same):
        raise DomainError("the serving transmitter must be active")
    tx = same.positions[server]
    batch = evaluate_links(tx, rx, np.array([server]), same, cross, config)
    return LinkSample(
        same.tier,
        (float(tx[0]), float(tx[1])),
        (float(rx[0]), float(rx[1])),
        same.power,
        float(batch.rate[0]),
        float(batch.same[0]),
        float(batch.cross[0]),
    )


def _check_series_args(a, b, alpha):
    if alpha <= 2:
        raise DivergenceError("the series diverges for alpha <= 2")
    if a < 0 or int(a) != a:
        raise DomainError("a must be a non-negative integer, got %r" % a)
    if b < 2 or int(b) != b:
        raise DomainError("b must be an integer of at least 2, got %r" % b)


def _falling(s: float, j: int) -> float:
    out = 1.0
    for i in range(j):
        out *= s - i
    return out


def _series_tail(a: int, b: int, alpha: float, T: int) -> Tuple[float, float]:
    """sum of a t (b t - 1)**-alpha over t >= T by Euler-Maclaurin, with
    the last correction term for the convergence test. Writing
    u = b t - 1 the summand is (a/b)(u**(1-alpha) + u**-alpha).
    """
    U = b * T - 1
    integral = a / b**2 * (
        U ** (2 - alpha) / (alpha - 2) + U ** (1 - alpha) / (alpha - 1)
    )

    def deriv(j):
        return (a / b) * b**j * (
            _falling(1 - alpha, j) * U ** (1 - alpha - j)
            + _falling(-alpha, j) * U ** (-alpha - j)
        )

    bern = special.bernoulli(2 * EM_ORDER)
    corrections = [
        -bern[2 * k] / math.factorial(2 * k) * deriv(2 * k - 1)
        for k in range(1, EM_ORDER + 1)
    ]
    tail = math.fsum([integral, deriv(0) / 2, *corrections])
    return tail, corrections[-1]


@dataclasses.dataclass(frozen=True)
class SeriesResult:
    value: float
    terms: int


def series_detail(a: int, b: int, alpha: float) -> SeriesResult:
    """sum of a t (b t - 1)**-alpha over t >= 1 and the number of terms
    summed directly before the tail took over.
    """
    _check_series_args(a, b, alpha)
    if a == 0:
        return SeriesResult(0.0, 0)
    T = 64
    while True:
        head = math.fsum(
            a * t * (b * t - 1) ** (-alpha) for t in range(1, T)
        )
        tail, last = _series_tail(a, b, alpha, T)
        value = head + tail
        if abs(last) < SERIES_RTOL * value or T >= 2**20:
            return SeriesResult(value, T - 1)
        T *= 2


def series_sum(a: int, b: int, alpha: float) -> float:
    return series_detail(a, b, alpha).value


def series_bound(a: int, b: int, alpha: float) -> float:
    """closed-form upper bound on series_sum from comparing the sum with
    an integral after splitting t = (t - 1/b) + 1/b.
    """
    _check_series_args(a, b, alpha)
    q = 1 - 1 / b
    return math.fsum(
        [
            a / (b**alpha * q ** (alpha - 1)),
            a * q ** (2 - alpha) / (b**alpha * (alpha - 2)),
            a / (b ** (alpha + 1) * q**alpha),
            a * q ** (1 - alpha) / (b ** (alpha + 1) * (alpha - 1)),
        ]
    )


@dataclasses.dataclass(frozen=True)
class BoundSet:
    I_p_bound: float
    I_sp_bound: float
    I_ps_bound: float
    I_s_bound: float
    K1: float
    K2: float

    def as_dict(self) -> Dict[str, float]:
        return dataclasses.asdict(self)


def bound_set(config: NetworkConfig) -> BoundSet:
    """interference ceilings and rate floors of both tiers. Interference is
    in units of the normalised powers P0, P1 scaled by the channel
    constant A.
    """
    alpha, A = config.alpha, config.A
    s84 = series_sum(8, 4, alpha)
    s83 = series_sum(8, 3, alpha)
    I_p = A * config.P0 * s84
    I_sp = A * config.P1 * (s84 + 1)
    I_ps = A * config.P0 * (s83 + 1.5 ** (-alpha))
    I_s = A * config.P1 * s84
    near = 5 ** (-alpha / 2)
    K1 = TDMA_FACTOR * math.log1p(
        A * config.P0 * near / (config.N0 + I_p + I_sp)
    )
    K2 = (
        TDMA_FACTOR
        * (9 / 25)
        * math.log1p(A * config.P1 * near / (config.N0 + I_ps + I_s))
    )
    return BoundSet(I_p, I_sp, I_ps, I_s, K1, K2)


# counter keys of BoundCheck
BOUND_KINDS = ("I_p", "I_sp", "I_s", "I_ps", "K1", "K2", "distance")


@dataclasses.dataclass
class BoundCheck:
    """per-kind counts of checked samples and violations, with the largest
    measured/bound ratio seen (bound/measured for rate floors).
    """

    checked: Dict[str, int] = dataclasses.field(
        default_factory=lambda: dict.fromkeys(BOUND_KINDS, 0)
    )
    violations: Dict[str, int] = dataclasses.field(
        default_factory=lambda: dict.fromkeys(BOUND_KINDS, 0)
    )
    worst: Dict[str, float] = dataclasses.field(
        default_factory=lambda: dict.fromkeys(BOUND_KINDS, 0.0)
    )

    def ceiling(self, kind: str, measured: np.ndarray, bound: float):
        measured = np.asarray(measured, dtype=float)
        if not measured.size:
            return
        self.checked[kind] += measured.size
        self.violations[kind] += int(
            np.count_nonzero(measured > bound * (1 + BOUND_RTOL))
        )
        self.worst[kind] = max(self.worst[kind], float(measured.max() / bound))

    def floor(self, kind: str, measured: np.ndarray, bound: float):
        measured = np.asarray(measured, dtype=float)
        if not measured.size:
            return
        self.checked[kind] += measured.size
        self.violations[kind] += int(
            np.count_nonzero(measured < bound * (1 - BOUND_RTOL))
        )
        low = float(measured.min())
        ratio = math.inf if low <= 0 else bound / low
        self.worst[kind] = max(self.worst[kind], ratio)

    def merge(self, other: "BoundCheck") -> "BoundCheck":
        for kind in BOUND_KINDS:
            self.checked[kind] += other.checked[kind]
            self.violations[kind] += other.violations[kind]
            self.worst[kind] = max(self.worst[kind], other.worst[kind])
        return self

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())

    def as_dict(self) -> dict:
        return {
            "checked": dict(self.checked),
            "violations": dict(self.violations),
            "worst": dict(self.worst),
        }


def check_links(
    check: BoundCheck,
    tier: str,
    batch: LinkBatch,
    bounds: BoundSet,
    cell_side: float,
):
    """record one slot's probed links against the bounds of their tier."""
    if tier == PRIMARY:
        check.ceiling("I_p", batch.same, bounds.I_p_bound)
        check.ceiling("I_sp", batch.cross, bounds.I_sp_bound)
        check.floor("K1", batch.rate, bounds.K1)
    elif tier == SECONDARY:
        check.ceiling("I_s", batch.same, bounds.I_s_bound)
        check.ceiling("I_ps", batch.cross, bounds.I_ps_bound)
        check.floor("K2", batch.rate, bounds.K2 * 25 / 9)
    check.ceiling("distance", batch.distance, math.sqrt(5) * cell_side)
