#!/usr/bin/env pytest
import json
import math
import numpy as np
import overlaysim as osim
import pytest
from overlaysim import flow, routing
from overlaysim.geometry import PRIMARY, SECONDARY, CellGrid
from overlaysim.protocol import Schedule

LN2_RATE = math.log(2) / 25


def line_network(points, pairs, **changes):
    """primary-only instance on the 10x10 grid of n = 1000."""
    cfg = osim.NetworkConfig(n=1000, frames=10, primary_only=True)
    cfg = cfg.replace(**changes)
    dep = osim.from_points(cfg, points, pairs)
    paths = {PRIMARY: routing.PathSet.from_tier(dep.primary)}
    return dep, paths, Schedule.for_config(cfg)


@pytest.fixture(scope="module")
def overlay():
    cfg = osim.NetworkConfig(n=200, frames=12, seed=4)
    dep = osim.deploy(cfg)
    paths = {t.tier: routing.PathSet.from_tier(t) for t in dep.tiers()}
    return dep, paths, Schedule.for_config(cfg)


@pytest.fixture(scope="module")
def overlay_record(overlay):
    return osim.run_frames(*overlay)


def test_adjacent_cells():
    record = osim.run_frames(
        *line_network([(0.05, 0.05), (0.15, 0.05)], [(0, 1)])
    )
    p = record.primary
    assert record.secondary is None
    assert p.emitted == p.delivered == 10
    assert p.in_flight == 0
    # one hop takes one primary frame of 25 slots
    assert p.D == pytest.approx(25.0)
    assert p.per_hop_unit_share == 1.0
    assert p.per_hop_mean == pytest.approx(25.0)
    assert p.lambda_min == pytest.approx(LN2_RATE)
    assert p.T == pytest.approx(LN2_RATE)
    assert p.outage == 0
    assert record.bound_violations == 0


@pytest.mark.parametrize("validate", [False, True])
def test_same_cell_pair_to_relay(validate):
    # the destination serves as its cell's relay in alternate frames
    record = osim.run_frames(
        *line_network(
            [(0.05, 0.05), (0.06, 0.06)], [(1, 0)], validate_bounds=validate
        )
    )
    p = record.primary
    assert p.hops_mean == 0
    assert p.emitted == p.delivered == 10
    assert p.D == pytest.approx(1.0)
    # d ** -4 with d ** 2 == 2e-4, over unit noise
    assert p.lambda_min == pytest.approx(math.log1p(2500) / 25)
    assert record.bound_violations == 0


def test_relayed_route():
    record = osim.run_frames(
        *line_network([(0.05, 0.05), (0.15, 0.05), (0.25, 0.05)], [(0, 2)])
    )
    p = record.primary
    assert p.hops_mean == 2
    assert p.D == pytest.approx(50.0)
    assert p.per_hop_max == 1
    assert p.lambda_min == pytest.approx(LN2_RATE)
    assert p.emitted == p.delivered + p.in_flight


def test_instability(monkeypatch):
    monkeypatch.setattr(flow, "MAX_BUFFER", 0)
    with pytest.raises(osim.InstabilityError):
        osim.run_frames(
            *line_network(
                [(0.05, 0.05), (0.15, 0.05), (0.25, 0.05)], [(0, 2)]
            )
        )


def test_stalled_route():
    record = osim.run_frames(
        *line_network([(0.05, 0.05), (0.25, 0.05)], [(0, 1)])
    )
    p = record.primary
    assert p.stalled == 1
    assert p.delivered == 0
    assert p.in_flight == 10
    assert math.isnan(p.D)
    assert math.isnan(p.lambda_min)
    assert p.lambda_min_all == 0
    assert p.T == 0
    body = record.to_dict()
    assert body["primary"]["D"] is None
    assert body["stalled_paths"] == 1
    json.dumps(body)


def test_out_of_order_delivery():
    dep, paths, _ = line_network([(0.05, 0.05), (0.15, 0.05)], [(0, 1)])
    tier_flow = flow.build_flows(dep, paths, dep.config)[PRIMARY]
    tier_flow._deliver(np.array([0]), np.array([5]), 1.0, True)
    with pytest.raises(osim.FlowError):
        tier_flow._deliver(np.array([0]), np.array([3]), 1.0, True)


def test_measure_throughput():
    grid = CellGrid(PRIMARY, 10, 0.01)
    paths = routing.PathSet(PRIMARY, grid, [0, 5], [2, 5])
    table = osim.count_paths(paths, grid)
    rates = np.zeros(grid.num_cells)
    rates[[0, 1, 2, 5]] = [0.4, 0.2, 0.01, 0.3]
    got = osim.measure_throughput(rates, table)
    assert got.per_pair.tolist() == pytest.approx([0.2, 0.3])
    assert got.minimum == pytest.approx(0.2)
    assert got.mean == pytest.approx(0.25)
    assert got.total == pytest.approx(0.4)
    stalled = osim.measure_throughput(
        rates, table, np.array([True, False])
    )
    assert stalled.per_pair.tolist() == pytest.approx([0.0, 0.3])
    assert stalled.minimum == pytest.approx(0.3)
    assert stalled.minimum_all == 0
    assert stalled.total == pytest.approx(0.6)


def test_measure_delay():
    assert osim.measure_delay([50.0, 30.0, 0.0], [2, 1, 0]) == 27.5
    with pytest.raises(osim.UndefinedDelayError):
        osim.measure_delay([0.0], [0])


def test_measurement_window():
    cfg = osim.NetworkConfig(warmup=2, phy_frames=1)
    assert flow.measurement_window(cfg, 10) == range(2, 3)
    assert flow.measurement_window(cfg, 1) == range(0, 1)
    wide = cfg.replace(validate_bounds=True)
    assert flow.measurement_window(wide, 10) == range(10)


def test_overlay_conservation(overlay_record):
    for tier in overlay_record.tiers():
        assert tier.emitted == tier.delivered + tier.in_flight
        assert tier.pairs > 0
    assert overlay_record.secondary.tier == SECONDARY


def test_overlay_primary_hops_take_one_frame(overlay_record):
    p = overlay_record.primary
    assert p.per_hop_max == 1
    assert p.per_hop_unit_share == 1.0


def test_overlay_secondary_waits_bounded(overlay_record):
    assert overlay_record.hop_wait_violations == 0
    assert overlay_record.secondary.per_hop_max <= (
        overlay_record.max_blocked_run + 1
    )
    assert 0 <= overlay_record.eta_min <= overlay_record.eta_max <= 1


def test_overlay_bounds_checked(overlay_record):
    checked = overlay_record.primary.bounds["checked"]
    assert checked["I_p"] > 0
    assert checked["I_sp"] > 0
    assert overlay_record.secondary.bounds["checked"]["I_s"] > 0


@pytest.fixture(scope="module")
def validated_record():
    cfg = osim.NetworkConfig(n=200, frames=4, seed=4, validate_bounds=True)
    dep = osim.deploy(cfg)
    paths = {t.tier: routing.PathSet.from_tier(t) for t in dep.tiers()}
    return osim.run_frames(dep, paths, Schedule.for_config(cfg))


@pytest.fixture(scope="module")
def long_record():
    # four secondary grid widths of primary frames
    cfg = osim.NetworkConfig(n=200, frames=80, seed=4)
    dep = osim.deploy(cfg)
    assert cfg.frames >= 4 * dep.secondary.grid.cells_per_side
    paths = {t.tier: routing.PathSet.from_tier(t) for t in dep.tiers()}
    return osim.run_frames(dep, paths, Schedule.for_config(cfg))


def test_overlay_bounds_hold(validated_record):
    assert validated_record.bound_violations == 0
    for tier in validated_record.tiers():
        assert sum(tier.bounds["checked"].values()) > 0
        assert not any(tier.bounds["violations"].values())


def test_overlay_every_flowing_pair_delivers(long_record):
    for tier in long_record.tiers():
        pairs = tier.per_pair
        idle = [
            i
            for i, (count, stalled) in enumerate(
                zip(pairs["delivered"], pairs["stalled"])
            )
            if count == 0 and not stalled
        ]
        assert idle == []
        assert tier.outage == tier.stalled


def test_overlay_unpreserved_share(long_record):
    assert 9 / 25 <= long_record.eta_min <= long_record.eta_max <= 16 / 25


def test_overlay_summary(overlay_record):
    row = overlay_record.summary()
    assert tuple(row) == flow.SUMMARY_FIELDS
    assert row["n"] == 200
    assert row["lambda_s_min"] == overlay_record.secondary.lambda_min


def test_primary_only_summary():
    record = osim.run_frames(
        *line_network([(0.05, 0.05), (0.15, 0.05)], [(0, 1)])
    )
    row = record.summary()
    assert row["D_s"] is None
    assert row["eta_min"] is None
    assert row["D_p"] == pytest.approx(25.0)


def test_deterministic(overlay, overlay_record):
    again = osim.run_frames(*overlay)
    assert json.dumps(again.to_dict(True), sort_keys=True) == json.dumps(
        overlay_record.to_dict(True), sort_keys=True
    )


def test_per_pair_export(overlay_record):
    body = overlay_record.to_dict(per_pair=True)
    pairs = body["secondary"]["per_pair"]
    count = overlay_record.secondary.pairs
    assert len(pairs["throughput"]) == count
    assert len(pairs["delay"]) == count
    assert "per_pair" not in overlay_record.to_dict()["primary"]
