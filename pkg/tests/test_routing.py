#!/usr/bin/env pytest
import io
import itertools
import pathlib
import numpy as np
import overlaysim as osim
import pytest
from overlaysim import geometry, routing
from overlaysim.geometry import PRIMARY, CellGrid

DIR = pathlib.Path(__file__).parent


def walk(src, dst):
    """route by single steps: across to the destination column first,
    then along it.
    """
    (row, col), (dr, dc) = src, dst
    cells = [(row, col)]
    while col != dc:
        col += 1 if dc > col else -1
        cells.append((row, col))
    while row != dr:
        row += 1 if dr > row else -1
        cells.append((row, col))
    return tuple(cells)


@pytest.fixture
def grid():
    return CellGrid(PRIMARY, 10, 0.01)


@pytest.fixture
def golden():
    with (DIR / "golden.deploy").open(encoding="utf8") as fh:
        return geometry.load_deployment(fh)


def test_build_path_all_pairs(grid):
    cells = list(itertools.product(range(10), repeat=2))
    src, dst = zip(*itertools.product(cells, repeat=2))
    paths = routing.PathSet(
        PRIMARY, grid, [grid.flat(s) for s in src], [grid.flat(d) for d in dst]
    )
    assert len(paths) == 10_000
    for i, (s, d) in enumerate(zip(src, dst)):
        expected = walk(s, d)
        path = osim.build_path(s, d, pair_id=i)
        assert path.cells == expected
        assert path.hops == abs(s[0] - d[0]) + abs(s[1] - d[1])
        assert paths.path(i).cells == expected


def test_path_shape():
    path = osim.build_path((2, 1), (5, 4))
    assert path.cells[0] == (2, 1)
    assert path.cells[-1] == (5, 4)
    assert path.cells[3] == (2, 4)
    assert path.hops == 6
    assert path.length(CellGrid(PRIMARY, 10, 0.01)) == pytest.approx(0.6)
    assert osim.build_path((3, 3), (3, 3)).hops == 0


def test_path_set_lookup(grid):
    paths = routing.PathSet(PRIMARY, grid, [0, 99], [9, 0])
    assert paths.hops.tolist() == [9, 18]
    assert paths.cell_at(np.array([0, 1]), np.array([9, 9])).tolist() == [
        9,
        90,
    ]
    assert [p.pair_id for p in paths] == [0, 1]


def test_count_paths(grid):
    paths = routing.PathSet(PRIMARY, grid, [0, 0, 2], [2, 1, 2])
    table = osim.count_paths(paths, grid)
    assert table.originating[0] == 2
    assert table.originating[2] == 1
    assert table.through[1] == 2
    assert table.through[2] == 1
    assert table.load[0] == 2
    assert table.max_load == 2


def test_designated_relay():
    assert osim.designated_relay(0, 0, [5, 2, 9]) == 2
    assert osim.designated_relay(0, 1, [5, 2, 9]) == 5
    assert osim.designated_relay(0, 4, [5, 2, 9]) == 5
    with pytest.raises(osim.StalledCellError):
        osim.designated_relay(3, 0, [])


def test_relay_table_rotates(golden):
    tier = golden.primary
    relays = routing.relay_table(tier, 0)
    assert relays[0] == 0
    assert relays[1] == 1
    assert relays[2] == -1
    extra = geometry.TierDeployment(
        PRIMARY, tier.grid, [(0.01, 0.01), (0.02, 0.02), (0.03, 0.03)], []
    )
    assert [routing.relay_table(extra, f)[0] for f in range(4)] == [
        0,
        1,
        2,
        0,
    ]


def test_stall_steps(golden):
    paths = routing.PathSet.from_tier(golden.primary)
    assert paths.hops.tolist() == [1, 12]
    # nothing lives between the second pair's end points
    assert paths.stall_steps(golden.primary.member_counts).tolist() == [-1, 1]


def test_dump_paths(golden):
    paths = routing.PathSet.from_tier(golden.primary)
    buf = io.StringIO()
    rows = routing.dump_paths([paths], buf)
    lines = buf.getvalue().splitlines()
    assert rows == 2 + 13
    assert lines[0] == ",".join(routing.PATH_FIELDS)
    assert lines[1] == "0,primary,0,0,0"
    assert lines[2] == "0,primary,1,0,1"
    assert lines[-1] == "1,primary,12,1,9"


def test_link_plan(golden):
    tier = golden.primary
    paths = routing.PathSet.from_tier(tier)
    plan = routing.plan_links(paths, tier)
    links = set(
        zip(
            plan.cell.tolist(),
            plan.tx_node.tolist(),
            plan.rx_node.tolist(),
            plan.rx_cell.tolist(),
        )
    )
    # source straight to a destination one hop away
    assert (0, 0, 1, 1) in links
    # source of the long route to the next relay
    assert (95, 2, -1, 96) in links
    # last relay to the destination
    assert (29, -1, 3, 19) in links
    relays = routing.relay_table(tier, 0)
    tx, rx, ok = plan.resolve(relays)
    assert len(tx) == len(plan)
    assert not ok.all()


def test_mean_path_length(grid):
    paths = routing.PathSet(PRIMARY, grid, [0, 0], [3, 30])
    assert routing.mean_path_length(paths) == pytest.approx(0.3)
    empty = routing.PathSet(PRIMARY, grid, [], [])
    assert routing.mean_path_length(empty) == 0.0


def test_mean_route_length_on_random_pairs():
    dep = osim.deploy(osim.NetworkConfig(n=1000, seed=3))
    for tier in dep.tiers():
        paths = routing.PathSet.from_tier(tier)
        assert 0.5 <= routing.mean_path_length(paths) <= 1.4


def test_max_load_grows_like_n_sqrt_a():
    records, ratios = [], []
    for n in (500, 1000, 2000, 4000):
        cfg = osim.NetworkConfig(n=n, seed=2, primary_only=True)
        tier = osim.deploy(cfg).primary
        load = routing.count_paths(
            routing.PathSet.from_tier(tier), tier.grid
        ).max_load
        ratios.append(load / (n * cfg.a_p ** 0.5))
        records.append(
            {"n": n, "m": cfg.m, "seed": 2, "primary": {"max_load": load}}
        )
    # one constant bounds the busiest cell across the sweep
    assert max(ratios) < 2 * min(ratios)
    assert max(ratios) < 1.5
    report = osim.fit_scaling(
        osim.SweepResult.from_records(records), "max_load_p"
    )
    assert report.predictor == "n_sqrt_a_p"
    assert report.expected_slope == 1.0
    assert 0.6 < report.slope < 1.6
