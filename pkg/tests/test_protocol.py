#!/usr/bin/env pytest
from fractions import Fraction
import numpy as np
import overlaysim as osim
import pytest
from overlaysim import protocol
from overlaysim.geometry import PRIMARY, SECONDARY, CellGrid


@pytest.fixture(scope="module")
def fine():
    """10x10 primary cells over 245x245 secondary cells."""
    primary = CellGrid(PRIMARY, 10, 0.01)
    secondary = CellGrid(SECONDARY, 245, 1 / 245**2)
    spec = osim.PreservationSpec(75, 0.3 + 2 / 245, 1 / 245)
    return osim.Schedule(primary, secondary, spec)


@pytest.fixture(scope="module")
def dense():
    return osim.Schedule.for_config(osim.NetworkConfig(n=1000, beta=2))


def test_serpentine_slots():
    assert protocol.cell_slot((0, 0)) == 0
    assert protocol.cell_slot((0, 4)) == 4
    assert protocol.cell_slot((1, 4)) == 5
    assert protocol.cell_slot((1, 0)) == 9
    assert protocol.cell_slot((4, 4)) == 24
    assert protocol.cell_slot((7, 12)) == protocol.cell_slot((2, 2))
    for slot in range(osim.SLOTS):
        assert protocol.cell_slot(protocol.slot_offset(slot)) == slot


def test_slot_offset_range():
    with pytest.raises(ValueError):
        protocol.slot_offset(25)
    with pytest.raises(ValueError):
        protocol.slot_offset(-1)


def test_one_active_cell_per_cluster():
    grid = CellGrid(PRIMARY, 15, 1 / 225)
    table = protocol.slot_table(grid)
    for slot in range(osim.SLOTS):
        cells = np.flatnonzero(table == slot)
        assert len(cells) == grid.clusters_per_side**2
        clusters = {grid.cluster_of(grid.unflat(c)) for c in cells}
        assert len(clusters) == len(cells)
    assert osim.primary_active_cell((1, 2), 9) == (6, 10)


def test_compute_M(dense):
    spec = dense.spec
    assert spec.M == 69
    assert spec.side_length == pytest.approx(0.3 + 2 / 270)
    assert spec.epsilon_p == pytest.approx(1 / 270)


def test_compute_M_needs_large_n():
    with pytest.raises(osim.ConfigError):
        osim.compute_M(osim.NetworkConfig(n=1000, k2=30))


def test_secondary_schedule_needs_preservation():
    with pytest.raises(osim.ConfigError):
        osim.Schedule(
            CellGrid(PRIMARY, 10, 0.01), CellGrid(SECONDARY, 50, 0.0004)
        )


def test_preservation_blocks(dense):
    mask = dense.mask(12)
    assert mask.shape == (270, 270)
    # four active primary cells, each preserving an 85x85 block
    assert int(mask.sum()) == 4 * 85 * 85
    rows = np.flatnonzero(mask.any(axis=1))
    assert rows[0] == 25 and rows[-1] == 244
    assert not mask[110:160].any()
    assert mask[25:110, 25:110].all()


def test_preservation_clipped_at_border(dense):
    # slot 0 activates the lower-left cell of every cluster
    mask = dense.mask(0)
    assert mask[0, 0]
    assert mask[:, 0].any()
    assert int(mask.sum()) < 4 * 85 * 85


def test_mask_is_read_only(dense):
    with pytest.raises(ValueError):
        dense.masks[0, 0] = True


@pytest.mark.parametrize(
    "point, eta",
    [
        ((0.5, 0.5), Fraction(9, 25)),
        ((0.55, 0.55), Fraction(16, 25)),
        ((0.5, 0.55), Fraction(13, 25)),
    ],
)
def test_opportunistic_factor(fine, point, eta):
    cell = osim.locate_cell(point, fine.secondary)
    assert osim.opportunistic_factor(cell, fine) == eta


def test_eta_range(fine):
    assert fine.eta_range(interior=True) == (
        Fraction(9, 25),
        Fraction(16, 25),
    )
    lo, hi = fine.eta_range(interior=False)
    assert lo == Fraction(9, 25)
    assert hi > Fraction(16, 25)
    assert all(f >= Fraction(9, 25) for f in fine.opportunistic_factors())


def test_blocked_runs(fine):
    vertex = fine.secondary.flat(osim.locate_cell((0.5, 0.5), fine.secondary))
    runs = fine.blocked_runs()
    # preserved slots wrap from 23, 24 into 0, 1
    assert runs[vertex] == 4
    assert runs.max() <= osim.SLOTS - 9


def test_secondary_turns(fine):
    mask = fine.mask(0)
    cell = osim.secondary_active_cell((0, 0), 0, mask)
    assert cell is osim.BLOCKED
    free = osim.secondary_active_cell((14, 14), 0, mask)
    assert free == (70, 70)
    assert osim.secondary_active_cell((0, 0), 0, None) == (0, 0)


def test_state(dense):
    state = dense.state(12, 3)
    assert state.primary_slot == 12
    assert sorted(state.active_primary_cells.tolist()) == [22, 27, 72, 77]
    c = dense.secondary.cells_per_side
    for cell in state.active_secondary_cells:
        row, col = divmod(int(cell), c)
        assert protocol.cell_slot((row, col)) == 3
        assert not state.preservation_mask[row, col]


def test_primary_only_state():
    sched = osim.Schedule.for_config(
        osim.NetworkConfig(n=1000, primary_only=True)
    )
    state = sched.state(0)
    assert state.preservation_mask is None
    assert len(state.active_secondary_cells) == 0
    with pytest.raises(osim.ConfigError):
        sched.mask(0)


@pytest.mark.parametrize("schedule", ["fine", "dense"])
def test_separation(schedule, request):
    report = protocol.check_separation(request.getfixturevalue(schedule))
    assert report.slots_checked == osim.SLOTS
    assert report.ok
    assert report.min_center_distance >= 0.15


def test_render_pbm():
    text = protocol.render_pbm(np.array([[1, 0], [0, 0]], dtype=bool))
    assert text == "P1\n2 2\n00\n10\n"
