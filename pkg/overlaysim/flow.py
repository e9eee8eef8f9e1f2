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
Frame-by-frame packet transport for both tiers, and the throughput and
delay measurements built on it.

Each tier moves packets once per tier frame: a primary frame is 25
primary slots, a secondary frame is one primary slot. In its turn a cell
forwards the head-of-line packet of every path it serves; a packet sent
in frame f may leave the next cell from frame f + 1 on. Delay runs from
the start of the frame of a packet's first transmission to the end of
the frame of its last one.
"""
import dataclasses
import logging
import math
from typing import Any, Dict, List, Optional, Tuple
import numpy as np
from . import phy
from .config import NetworkConfig, OverlaySimError
from .geometry import PRIMARY, SECONDARY, Deployment, TierDeployment
from .protocol import SLOTS, Schedule, check_separation
from .routing import (
    LinkPlan,
    PathSet,
    PathTable,
    count_paths,
    mean_path_length,
    plan_links,
    relay_table,
)

log = logging.getLogger(__name__)

MAX_BUFFER = 10**6
LINK_CHUNK = 2048


class FlowError(OverlaySimError):
    pass


class InstabilityError(FlowError):
    pass


class UndefinedDelayError(OverlaySimError):
    pass


@dataclasses.dataclass(frozen=True)
class Packet:
    pair: int
    tier: str
    seq: int
    departure: Optional[float]
    arrival: Optional[float]
    hop: int


class PacketTable:
    """in-flight packets of one tier as parallel arrays, always in
    sequence order. ``depart`` is -1 until the first transmission.
    """

    FIELDS = ("pair", "seq", "hop", "eligible", "depart", "last_tx", "born")

    def __init__(self):
        for name in self.FIELDS:
            setattr(self, name, np.zeros(0, dtype=np.int64))

    def __len__(self):
        return len(self.seq)

    def append(self, pairs, seqs, eligible: int, born: int):
        count = len(pairs)
        fresh = {
            "pair": pairs,
            "seq": seqs,
            "hop": np.zeros(count, dtype=np.int64),
            "eligible": np.full(count, eligible, dtype=np.int64),
            "depart": np.full(count, -1, dtype=np.int64),
            "last_tx": np.full(count, -1, dtype=np.int64),
            "born": np.full(count, born, dtype=np.int64),
        }
        for name in self.FIELDS:
            setattr(
                self,
                name,
                np.concatenate((getattr(self, name), fresh[name])),
            )

    def keep(self, mask: np.ndarray):
        for name in self.FIELDS:
            setattr(self, name, getattr(self, name)[mask])

    def packets(self, tier: str, frame_len: float) -> List[Packet]:
        return [
            Packet(
                int(p),
                tier,
                int(s),
                None if d < 0 else d * frame_len,
                None,
                int(h),
            )
            for p, s, d, h in zip(self.pair, self.seq, self.depart, self.hop)
        ]


class TierFlow:
    """packet motion of one tier. Frame indices are tier frames; ``born``
    and the warm-up are counted in primary frames.
    """

    def __init__(
        self,
        tier: TierDeployment,
        paths: PathSet,
        table: PathTable,
        frame_len: float,
        frames_per_primary: int,
        warmup: int,
    ):
        self.tier = tier
        self.paths = paths
        self.table = table
        self.frame_len = frame_len
        self.slot_len = frame_len / SLOTS
        self.frames_per_primary = frames_per_primary
        self.warmup = warmup
        self.stall = paths.stall_steps(tier.member_counts)
        self.stalled = self.stall >= 0
        pairs = len(paths)
        self.moving = np.flatnonzero(paths.hops > 0)
        self.still = np.flatnonzero(paths.hops == 0)
        self.key_base = int(paths.hops.max()) + 1 if pairs else 1
        self.packets = PacketTable()
        self.next_seq = 0
        self.emitted = 0
        self.delivered_total = 0
        self.delivered = np.zeros(pairs, dtype=np.int64)
        self.last_seq = np.full(pairs, -1, dtype=np.int64)
        self.delay_sum = np.zeros(pairs)
        self.delay_count = np.zeros(pairs, dtype=np.int64)
        self.hop_hist = np.zeros(SLOTS + 2, dtype=np.int64)

    def inject(self, primary_frame: int):
        """one fresh packet per source. Pairs inside one cell are served
        within a packet slot of their cell's turn.
        """
        count = len(self.moving) + len(self.still)
        seqs = self.next_seq + np.arange(count, dtype=np.int64)
        self.next_seq += count
        self.emitted += count
        self.packets.append(
            self.moving,
            seqs[: len(self.moving)],
            primary_frame * self.frames_per_primary,
            primary_frame,
        )
        if len(self.still):
            cells = self.paths.cells[self.paths.offsets[self.still]]
            load = self.table.load[cells]
            self._deliver(
                self.still,
                seqs[len(self.moving):],
                self.slot_len / load,
                primary_frame >= self.warmup,
            )

    def _deliver(self, pairs, seqs, delays, measured):
        if np.any(seqs <= self.last_seq[pairs]):
            raise FlowError(
                "%s packets delivered out of order" % self.tier.tier
            )
        self.last_seq[pairs] = seqs
        np.add.at(self.delivered, pairs, 1)
        self.delivered_total += len(pairs)
        measured = np.broadcast_to(measured, len(pairs))
        delays = np.broadcast_to(delays, len(pairs))
        np.add.at(self.delay_sum, pairs[measured], delays[measured])
        np.add.at(self.delay_count, pairs[measured], 1)

    def step(self, frame: int, permitted: Optional[np.ndarray] = None):
        """advance every head-of-line packet whose cell may send."""
        pk = self.packets
        if not len(pk):
            return
        idx = np.flatnonzero(pk.eligible <= frame)
        if permitted is not None and len(idx):
            cells = self.paths.cell_at(pk.pair[idx], pk.hop[idx])
            idx = idx[permitted[cells]]
        if len(idx):
            idx = idx[self.stall[pk.pair[idx]] != pk.hop[idx] + 1]
        if not len(idx):
            return
        key = pk.pair[idx] * self.key_base + pk.hop[idx]
        # idx is in sequence order, so the first hit per key is the head
        idx = idx[np.unique(key, return_index=True)[1]]
        was = pk.hop[idx]
        waited = np.where(was == 0, 1, frame - pk.last_tx[idx])
        measured = pk.born[idx] >= self.warmup
        self._record_hops(waited[measured])
        pk.depart[idx[was == 0]] = frame
        pk.hop[idx] = was + 1
        pk.last_tx[idx] = frame
        pk.eligible[idx] = frame + 1
        done = idx[pk.hop[idx] == self.paths.hops[pk.pair[idx]]]
        if len(done):
            delays = (frame + 1 - pk.depart[done]) * self.frame_len
            self._deliver(
                pk.pair[done],
                pk.seq[done],
                delays,
                pk.born[done] >= self.warmup,
            )
            gone = np.ones(len(pk), dtype=bool)
            gone[done] = False
            pk.keep(gone)

    def _record_hops(self, waited: np.ndarray):
        if not len(waited):
            return
        counts = np.bincount(waited)
        if len(counts) > len(self.hop_hist):
            grown = np.zeros(len(counts), dtype=np.int64)
            grown[: len(self.hop_hist)] = self.hop_hist
            self.hop_hist = grown
        self.hop_hist[: len(counts)] += counts

    def check(self, primary_frame: int):
        in_flight = len(self.packets)
        if self.emitted != in_flight + self.delivered_total:
            raise FlowError(
                "%s frame %d: %d emitted but %d in flight + %d delivered"
                % (
                    self.tier.tier,
                    primary_frame,
                    self.emitted,
                    in_flight,
                    self.delivered_total,
                )
            )
        if not in_flight:
            return
        cells = self.paths.cell_at(self.packets.pair, self.packets.hop)
        buffered = np.bincount(cells)
        if buffered.max() > MAX_BUFFER:
            raise InstabilityError(
                "%s cell %d buffers %d packets in frame %d"
                % (
                    self.tier.tier,
                    int(buffered.argmax()),
                    int(buffered.max()),
                    primary_frame,
                )
            )


@dataclasses.dataclass(frozen=True)
class Throughput:
    per_pair: np.ndarray
    minimum: float
    minimum_all: float
    mean: float
    total: float


def measure_throughput(
    rates: np.ndarray, table: PathTable, stalled: Optional[np.ndarray] = None
) -> Throughput:
    """fluid throughput of every pair: the smallest share r(c)/load(c) over
    the cells that transmit its packets. Stalled pairs get 0; ``minimum``
    leaves them out and ``minimum_all`` does not.
    """
    paths = table.paths
    pairs = len(paths)
    if not pairs:
        return Throughput(np.zeros(0), math.nan, math.nan, math.nan, 0.0)
    load = table.load[paths.cells]
    share = np.asarray(rates, dtype=float)[paths.cells] / np.maximum(load, 1)
    hops = paths.hops[paths.pair_of]
    receiving = (paths.step_of == hops) & (hops > 0)
    share[receiving] = np.inf
    per_pair = np.minimum.reduceat(share, paths.offsets[:-1])
    if stalled is not None:
        per_pair = np.where(stalled, 0.0, per_pair)
        flowing = per_pair[~stalled]
    else:
        flowing = per_pair
    minimum = float(flowing.min()) if len(flowing) else math.nan
    mean = float(flowing.mean()) if len(flowing) else math.nan
    return Throughput(
        per_pair,
        minimum,
        float(per_pair.min()),
        mean,
        pairs * minimum if len(flowing) else 0.0,
    )


def measure_delay(delay_sum: np.ndarray, delay_count: np.ndarray) -> float:
    """mean over pairs of each pair's mean packet delay."""
    delay_count = np.asarray(delay_count)
    seen = delay_count > 0
    if not seen.any():
        raise UndefinedDelayError("no packet was delivered")
    return math.fsum(np.asarray(delay_sum)[seen] / delay_count[seen]) / int(
        seen.sum()
    )


@dataclasses.dataclass
class CellRates:
    tier: str
    rate_sum: np.ndarray
    turns: int
    bounds: phy.BoundCheck

    @property
    def rates(self) -> np.ndarray:
        if not self.turns:
            return np.zeros_like(self.rate_sum)
        return self.rate_sum / self.turns


def measurement_window(config: NetworkConfig, frames: int) -> range:
    if config.validate_bounds:
        return range(frames)
    start = min(config.warmup, max(frames - config.phy_frames, 0))
    return range(start, min(frames, start + config.phy_frames))


def _turn_minimum(cells, values, num_cells):
    out = np.full(num_cells, np.inf)
    np.minimum.at(out, cells, values)
    return out


class RateProbe:
    """link rates of every active cell over a window of primary frames.
    In each slot the designated relays of the active cells of both tiers
    transmit; a cell's turn rate is the minimum over the links it serves.
    """

    def __init__(
        self,
        deployment: Deployment,
        paths: Dict[str, PathSet],
        schedule: Schedule,
    ):
        self.config = deployment.config
        self.deployment = deployment
        self.schedule = schedule
        self.bounds = phy.bound_set(self.config)
        self.plans: Dict[str, LinkPlan] = {}
        self.power: Dict[str, float] = {}
        self.by_slot: Dict[str, List[np.ndarray]] = {}
        for tier in deployment.tiers():
            plan = plan_links(paths[tier.tier], tier)
            self.plans[tier.tier] = plan
            self.power[tier.tier] = phy.tx_power(
                tier.tier, self.config, tier.grid.actual_area
            )
            slots = (
                schedule.primary_slots
                if tier.tier == PRIMARY
                else schedule.secondary_slots
            )
            link_slot = slots[plan.cell]
            self.by_slot[tier.tier] = [
                np.flatnonzero(link_slot == k) for k in range(SLOTS)
            ]

    def _txset(self, tier: TierDeployment, cells, relays) -> phy.TxSet:
        cells = cells[relays[cells] >= 0]
        positions = tier.positions[relays[cells]]
        return phy.TxSet(tier.tier, positions, self.power[tier.tier])

    def _links(self, tier, links, relays, tx_cells):
        """transmitter/receiver positions, server columns and cells of the
        links in ``links`` whose cell transmits and whose relays exist.
        """
        plan = self.plans[tier.tier]
        tx, rx, ok = plan.resolve(relays, links)
        column = np.full(tier.grid.num_cells, -1, dtype=np.int64)
        column[tx_cells] = np.arange(len(tx_cells))
        cells = plan.cell[links]
        ok &= column[cells] >= 0
        cells = cells[ok]
        return (
            tier.positions[tx[ok]],
            tier.positions[rx[ok]],
            column[cells],
            cells,
        )

    def _evaluate(self, tx, rx, own, same, cross):
        batches = [
            phy.evaluate_links(
                tx[i:i + LINK_CHUNK],
                rx[i:i + LINK_CHUNK],
                own[i:i + LINK_CHUNK],
                same,
                cross,
                self.config,
            )
            for i in range(0, len(tx), LINK_CHUNK)
        ]
        if not batches:
            empty = np.zeros(0)
            return phy.LinkBatch(empty, empty, empty, empty, empty)
        return phy.LinkBatch(
            *(
                np.concatenate([getattr(b, f.name) for b in batches])
                for f in dataclasses.fields(phy.LinkBatch)
            )
        )

    def measure(self, window: range) -> Dict[str, CellRates]:
        dep = self.deployment
        prim, sec = dep.primary, dep.secondary
        result = {
            t.tier: CellRates(
                t.tier, np.zeros(t.grid.num_cells), 0, phy.BoundCheck()
            )
            for t in dep.tiers()
        }
        for frame in window:
            relays_p = relay_table(prim, frame)
            for k in range(SLOTS):
                self._primary_slot(frame, k, relays_p, result)
            result[PRIMARY].turns += 1
            if sec is not None:
                result[SECONDARY].turns += SLOTS
        return result

    def _primary_slot(self, frame, k, relays_p, result):
        prim, sec = self.deployment.primary, self.deployment.secondary
        active_p = self.schedule.primary_active(k)
        active_p = active_p[relays_p[active_p] >= 0]
        tx_p = self._txset(prim, active_p, relays_p)
        p_tx, p_rx, p_own, p_cells = self._links(
            prim, self.by_slot[PRIMARY][k], relays_p, active_p
        )
        p_rate = np.zeros(len(p_tx))
        if sec is None:
            batch = self._evaluate(p_tx, p_rx, p_own, tx_p, None)
            self._check(PRIMARY, batch, prim, result)
            p_rate = batch.rate
        else:
            relays_s = relay_table(sec, frame * SLOTS + k)
            for j in range(SLOTS):
                active_s = self.schedule.secondary_active(k, j)
                active_s = active_s[relays_s[active_s] >= 0]
                tx_s = self._txset(sec, active_s, relays_s)
                batch = self._evaluate(p_tx, p_rx, p_own, tx_p, tx_s)
                self._check(PRIMARY, batch, prim, result)
                p_rate += batch.rate / SLOTS
                s_tx, s_rx, s_own, s_cells = self._links(
                    sec, self.by_slot[SECONDARY][j], relays_s, active_s
                )
                s_batch = self._evaluate(s_tx, s_rx, s_own, tx_s, tx_p)
                self._check(SECONDARY, s_batch, sec, result)
                self._accumulate(result[SECONDARY], s_cells, s_batch.rate)
        self._accumulate(result[PRIMARY], p_cells, p_rate)

    @staticmethod
    def _accumulate(rates: CellRates, cells, values):
        if not len(cells):
            return
        turn = _turn_minimum(cells, values, len(rates.rate_sum))
        served = np.isfinite(turn)
        rates.rate_sum[served] += turn[served]

    def _check(self, tier, batch, deployment_tier, result):
        phy.check_links(
            result[tier].bounds,
            tier,
            batch,
            self.bounds,
            deployment_tier.grid.cell_side,
        )


@dataclasses.dataclass
class TierMetrics:
    tier: str
    pairs: int
    excluded_node: Optional[int]
    nodes: int
    cells_per_side: int
    hops_mean: float
    path_length_mean: float
    max_load: int
    emitted: int
    delivered: int
    in_flight: int
    outage: int
    stalled: int
    lambda_min: float
    lambda_min_all: float
    lambda_mean: float
    T: float
    D: float
    per_hop_mean: float
    per_hop_max: int
    per_hop_unit_share: float
    hop_histogram: List[int]
    rate_min: float
    rate_mean: float
    bounds: Dict[str, Any]
    per_pair: Dict[str, list] = dataclasses.field(default_factory=dict)

    def to_dict(self, per_pair: bool = False) -> Dict[str, Any]:
        out = dataclasses.asdict(self)
        if not per_pair:
            out.pop("per_pair")
        return {k: _jsonable(v) for k, v in out.items()}


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        return _jsonable(value.item())
    return value


SUMMARY_FIELDS = (
    "n",
    "m",
    "seed",
    "lambda_p_min",
    "lambda_p_mean",
    "T_p",
    "D_p",
    "lambda_s_min",
    "lambda_s_mean",
    "T_s",
    "D_s",
    "eta_min",
    "eta_max",
    "outage_s",
    "bound_violations",
    "stalled_paths",
)


def summary_row(body: Dict[str, Any]) -> Dict[str, Any]:
    """CSV summary columns of a record body; secondary columns are None
    for primary-only runs.
    """
    p = body["primary"]
    s = body.get("secondary") or {}
    return {
        "n": body["n"],
        "m": body["m"],
        "seed": body["seed"],
        "lambda_p_min": p["lambda_min"],
        "lambda_p_mean": p["lambda_mean"],
        "T_p": p["T"],
        "D_p": p["D"],
        "lambda_s_min": s.get("lambda_min"),
        "lambda_s_mean": s.get("lambda_mean"),
        "T_s": s.get("T"),
        "D_s": s.get("D"),
        "eta_min": body.get("eta_min"),
        "eta_max": body.get("eta_max"),
        "outage_s": s.get("outage"),
        "bound_violations": body.get("bound_violations", 0),
        "stalled_paths": body.get("stalled_paths", 0),
    }


@dataclasses.dataclass
class MetricsRecord:
    n: float
    m: float
    seed: int
    frames: int
    primary: TierMetrics
    secondary: Optional[TierMetrics] = None
    eta_min: Optional[float] = None
    eta_max: Optional[float] = None
    eta_min_all: Optional[float] = None
    eta_max_all: Optional[float] = None
    max_blocked_run: Optional[int] = None
    hop_wait_violations: Optional[int] = None
    config: Dict[str, Any] = dataclasses.field(default_factory=dict)
    separation: Dict[str, Any] = dataclasses.field(default_factory=dict)

    def tiers(self) -> List[TierMetrics]:
        return [t for t in (self.primary, self.secondary) if t is not None]

    @property
    def bound_violations(self) -> int:
        return sum(
            sum(t.bounds["violations"].values()) for t in self.tiers()
        )

    @property
    def stalled_paths(self) -> int:
        return sum(t.stalled for t in self.tiers())

    def to_dict(self, per_pair: bool = False) -> Dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "seed": self.seed,
            "frames": self.frames,
            "primary": self.primary.to_dict(per_pair),
            "secondary": (
                self.secondary.to_dict(per_pair) if self.secondary else None
            ),
            "eta_min": self.eta_min,
            "eta_max": self.eta_max,
            "eta_min_all": self.eta_min_all,
            "eta_max_all": self.eta_max_all,
            "max_blocked_run": self.max_blocked_run,
            "hop_wait_violations": self.hop_wait_violations,
            "separation": _jsonable(self.separation),
            "bound_violations": self.bound_violations,
            "stalled_paths": self.stalled_paths,
            "config": self.config,
        }

    def summary(self) -> Dict[str, Any]:
        """one row of the CSV summary."""
        return summary_row(self.to_dict())


def _tier_metrics(
    flow: TierFlow,
    rates: CellRates,
    tier_unit: float,
) -> TierMetrics:
    tier, paths, table = flow.tier, flow.paths, flow.table
    throughput = measure_throughput(rates.rates, table, flow.stalled)
    try:
        delay = measure_delay(flow.delay_sum, flow.delay_count)
    except UndefinedDelayError:
        log.warning("%s tier: no packet delivered after warm-up", tier.tier)
        delay = math.nan
    hist = flow.hop_hist
    samples = int(hist.sum())
    if samples:
        hop_frames = np.arange(len(hist))
        per_hop_mean = (
            float(np.dot(hop_frames, hist)) / samples * flow.frame_len
        ) / tier_unit
        per_hop_max = int(np.flatnonzero(hist).max())
        unit_share = float(hist[1]) / samples
    else:
        per_hop_mean, per_hop_max, unit_share = math.nan, 0, math.nan
    used = table.load > 0
    cell_rates = rates.rates[used]
    outage = int(np.count_nonzero(flow.delivered == 0))
    stalled = int(np.count_nonzero(flow.stalled))
    if stalled:
        log.info("%s tier: %d stalled paths", tier.tier, stalled)
    with np.errstate(invalid="ignore", divide="ignore"):
        pair_delay = flow.delay_sum / flow.delay_count
    return TierMetrics(
        tier=tier.tier,
        pairs=len(paths),
        excluded_node=tier.excluded,
        nodes=tier.num_nodes,
        cells_per_side=tier.grid.cells_per_side,
        hops_mean=float(paths.hops.mean()) if len(paths) else 0.0,
        path_length_mean=mean_path_length(paths),
        max_load=table.max_load,
        emitted=flow.emitted,
        delivered=flow.delivered_total,
        in_flight=len(flow.packets),
        outage=outage,
        stalled=stalled,
        lambda_min=throughput.minimum,
        lambda_min_all=throughput.minimum_all,
        lambda_mean=throughput.mean,
        T=throughput.total,
        D=delay,
        per_hop_mean=per_hop_mean,
        per_hop_max=per_hop_max,
        per_hop_unit_share=unit_share,
        hop_histogram=[int(x) for x in np.trim_zeros(hist, "b")],
        rate_min=float(cell_rates.min()) if len(cell_rates) else math.nan,
        rate_mean=float(cell_rates.mean()) if len(cell_rates) else math.nan,
        bounds=rates.bounds.as_dict(),
        per_pair={
            "throughput": throughput.per_pair.tolist(),
            "delay": [
                None if not math.isfinite(d) else float(d) for d in pair_delay
            ],
            "delivered": flow.delivered.tolist(),
            "hops": paths.hops.tolist(),
            "stalled": flow.stalled.tolist(),
        },
    )


def build_flows(
    deployment: Deployment,
    paths: Dict[str, PathSet],
    config: NetworkConfig,
) -> Dict[str, TierFlow]:
    flows = {}
    for tier in deployment.tiers():
        table = count_paths(paths[tier.tier], tier.grid)
        if tier.tier == PRIMARY:
            frame_len, per_primary = SLOTS * config.tp, 1
        else:
            frame_len, per_primary = config.tp, SLOTS
        flows[tier.tier] = TierFlow(
            tier,
            paths[tier.tier],
            table,
            frame_len,
            per_primary,
            config.warmup,
        )
    return flows


def run_frames(
    deployment: Deployment,
    paths: Dict[str, PathSet],
    schedule: Schedule,
    config: Optional[NetworkConfig] = None,
    frames: Optional[int] = None,
) -> MetricsRecord:
    """simulate ``frames`` primary frames (default ``config.frames``) and
    measure both tiers. Raises FlowError if packets are lost or reordered
    and InstabilityError if a cell buffers more than a million packets.
    """
    config = config or deployment.config
    frames = config.frames if frames is None else frames
    flows = build_flows(deployment, paths, config)
    prim = flows[PRIMARY]
    sec = flows.get(SECONDARY)
    for frame in range(frames):
        prim.inject(frame)
        prim.step(frame)
        if sec is not None:
            sec.inject(frame)
            for k in range(SLOTS):
                sec.step(frame * SLOTS + k, schedule.permitted[k])
        for flow in flows.values():
            flow.check(frame)
    window = measurement_window(config, frames)
    rates = RateProbe(deployment, paths, schedule).measure(window)
    record = MetricsRecord(
        n=config.n,
        m=config.m,
        seed=config.seed,
        frames=frames,
        primary=_tier_metrics(prim, rates[PRIMARY], config.tp),
        config=config.as_dict(),
    )
    if sec is not None:
        record.secondary = _tier_metrics(sec, rates[SECONDARY], config.tp)
        lo, hi = schedule.eta_range(interior=True)
        lo_all, hi_all = schedule.eta_range(interior=False)
        record.eta_min, record.eta_max = float(lo), float(hi)
        record.eta_min_all, record.eta_max_all = float(lo_all), float(hi_all)
        record.max_blocked_run = int(schedule.blocked_runs().max())
        record.hop_wait_violations = hop_bound_violations(sec, schedule)[0]
        record.separation = dataclasses.asdict(check_separation(schedule))
    log.info(
        "n=%g seed=%d: lambda_p=%.4g D_p=%.4g%s",
        config.n,
        config.seed,
        record.primary.lambda_min,
        record.primary.D,
        ""
        if sec is None
        else " lambda_s=%.4g D_s=%.4g"
        % (record.secondary.lambda_min, record.secondary.D),
    )
    return record


def hop_bound_violations(
    flow: TierFlow, schedule: Schedule
) -> Tuple[int, int]:
    """secondary per-hop waits longer than the cell's longest blocked run
    plus one frame; returns (violations, samples).
    """
    runs = schedule.blocked_runs()
    limit = int(runs.max()) + 1
    hist = flow.hop_hist
    return int(hist[limit + 1:].sum()), int(hist.sum())
