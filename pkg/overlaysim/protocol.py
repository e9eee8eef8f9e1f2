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
25-slot TDMA schedules for both tiers and the preservation regions that
keep secondary transmitters away from active primary cells.

Both tiers activate the cells of every 5x5 cluster in serpentine order:
row 0 of the cluster left to right, row 1 right to left, and so on, so
slot 0 is the lower-left cell. A secondary frame lasts one primary slot,
and a secondary cell may only transmit in its turn if it lies outside
every preservation region of the current primary slot.
"""
import dataclasses
import enum
import logging
import math
from fractions import Fraction
from typing import Iterable, List, Optional, Sequence, Tuple, Union
import numpy as np
from .config import ConfigError, NetworkConfig
from .geometry import CellGrid, Cell, build_grids, PRIMARY, SECONDARY

log = logging.getLogger(__name__)

SLOTS = 25
CLUSTER = 5
# closed squares are widened by this fraction of a secondary side so cells
# that exactly touch a region are counted the same way on every platform
TOUCH_TOLERANCE = 1e-9


class Turn(enum.Enum):
    BLOCKED = "blocked"

    def __repr__(self):
        return "BLOCKED"


BLOCKED = Turn.BLOCKED


def cell_slot(cell: Cell) -> int:
    """the slot in which a cell is scheduled."""
    r, c = cell[0] % CLUSTER, cell[1] % CLUSTER
    return CLUSTER * r + (c if r % 2 == 0 else CLUSTER - 1 - c)


def slot_offset(slot: int) -> Cell:
    """position inside a cluster of the cell active in ``slot``."""
    if not 0 <= slot < SLOTS:
        raise ValueError("slot must lie in [0, 25), got %r" % slot)
    r, i = divmod(slot, CLUSTER)
    return r, (i if r % 2 == 0 else CLUSTER - 1 - i)


def primary_active_cell(cluster: Cell, slot: int) -> Cell:
    r, c = slot_offset(slot)
    return cluster[0] * CLUSTER + r, cluster[1] * CLUSTER + c


def slot_table(grid: CellGrid) -> np.ndarray:
    """cell_slot for every cell of a grid, in flat order."""
    idx = np.arange(grid.cells_per_side)
    rows = (idx % CLUSTER)[:, None]
    cols = (idx % CLUSTER)[None, :]
    serp = np.where(rows % 2 == 0, cols, CLUSTER - 1 - cols)
    return (CLUSTER * rows + serp).ravel()


@dataclasses.dataclass(frozen=True)
class PreservationSpec:
    M: int
    side_length: float
    epsilon_p: float

    @property
    def half_width(self) -> float:
        return self.side_length / 2


def compute_M(
    config: NetworkConfig, grids: Optional[dict] = None
) -> PreservationSpec:
    """preservation square for a configuration. M uses the nominal areas
    and is informational; the square itself uses the grid cell sides.
    """
    if not config.a_s < config.a_p:
        raise ConfigError(
            "n not large enough: a_s = %.4g is not below a_p = %.4g"
            % (config.a_s, config.a_p)
        )
    grids = grids or build_grids(config.replace(primary_only=False))
    side_p = grids[PRIMARY].cell_side
    side_s = grids[SECONDARY].cell_side
    M = math.floor(3 * math.sqrt(config.a_p / config.a_s)) + 2
    spec = PreservationSpec(M, 3 * side_p + 2 * side_s, side_s)
    if M * side_s < spec.side_length - side_s:
        log.warning(
            "M = %d secondary cells (%.4g) short of region side %.4g",
            M,
            M * side_s,
            spec.side_length,
        )
    return spec


def _covered_span(
    lo: float, hi: float, grid: CellGrid
) -> Optional[Tuple[int, int]]:
    """first and last cell index along one axis whose closed interval
    meets [lo, hi], or None.
    """
    edges = np.arange(grid.cells_per_side + 1) * grid.cell_side
    hit = np.flatnonzero((edges[1:] >= lo) & (edges[:-1] <= hi))
    if not len(hit):
        return None
    return int(hit[0]), int(hit[-1])


def preservation_mask(
    active_primary_cells: Iterable[int],
    primary: CellGrid,
    secondary: CellGrid,
    spec: PreservationSpec,
) -> np.ndarray:
    """boolean (C_s, C_s) array; True where a secondary cell meets the
    closed preservation square of any active primary cell. Squares are
    clipped at the boundary of the unit square.
    """
    c = secondary.cells_per_side
    mask = np.zeros((c, c), dtype=bool)
    half = spec.half_width + TOUCH_TOLERANCE * secondary.cell_side
    for cell in active_primary_cells:
        cx, cy = primary.center(primary.unflat(cell))
        cols = _covered_span(cx - half, cx + half, secondary)
        rows = _covered_span(cy - half, cy + half, secondary)
        if cols is None or rows is None:
            continue
        mask[rows[0]:rows[1] + 1, cols[0]:cols[1] + 1] = True
    return mask


def opportunistic_factor(
    cell: Union[Cell, int], schedule: "Schedule"
) -> Fraction:
    """share of the 25 primary slots in which a secondary cell may send."""
    if isinstance(cell, tuple):
        cell = schedule.secondary.flat(cell)
    return Fraction(int(schedule.unpreserved_counts()[cell]), SLOTS)


def secondary_active_cell(
    cluster: Cell, secondary_slot: int, mask: Optional[np.ndarray]
) -> Union[Cell, Turn]:
    """serpentine turn of a secondary cluster, or BLOCKED when the
    scheduled cell is preserved under ``mask``.
    """
    cell = primary_active_cell(cluster, secondary_slot)
    if mask is not None and mask[cell]:
        return BLOCKED
    return cell


@dataclasses.dataclass(frozen=True)
class ScheduleState:
    primary_slot: int
    secondary_slot: int
    active_primary_cells: np.ndarray
    active_secondary_cells: np.ndarray
    preservation_mask: Optional[np.ndarray]


class Schedule:
    """activation tables for one pair of grids. The 25 preservation masks
    are computed once; every later lookup is read-only.
    """

    def __init__(
        self,
        primary: CellGrid,
        secondary: Optional[CellGrid] = None,
        spec: Optional[PreservationSpec] = None,
    ):
        self.primary = primary
        self.secondary = secondary
        self.spec = spec
        self.primary_slots = slot_table(primary)
        self._primary_active = [
            np.flatnonzero(self.primary_slots == k) for k in range(SLOTS)
        ]
        if secondary is None:
            self.secondary_slots = None
            self.masks = None
            self.permitted = None
            return
        if spec is None:
            raise ConfigError("a secondary schedule needs a PreservationSpec")
        self.secondary_slots = slot_table(secondary)
        self.masks = np.stack(
            [
                preservation_mask(
                    self._primary_active[k], primary, secondary, spec
                ).ravel()
                for k in range(SLOTS)
            ]
        )
        self.masks.setflags(write=False)
        # permitted[k, c]: secondary cell c may transmit in primary slot k
        self.permitted = ~self.masks
        self._secondary_scheduled = [
            np.flatnonzero(self.secondary_slots == j) for j in range(SLOTS)
        ]

    @classmethod
    def for_config(
        cls, config: NetworkConfig, grids: Optional[dict] = None
    ) -> "Schedule":
        grids = grids or build_grids(config)
        if SECONDARY not in grids:
            return cls(grids[PRIMARY])
        spec = compute_M(config, grids)
        return cls(grids[PRIMARY], grids[SECONDARY], spec)

    def primary_active(self, slot: int) -> np.ndarray:
        return self._primary_active[slot % SLOTS]

    def mask(self, primary_slot: int) -> np.ndarray:
        if self.masks is None:
            raise ConfigError("no secondary tier in this schedule")
        c = self.secondary.cells_per_side
        return self.masks[primary_slot % SLOTS].reshape(c, c)

    def secondary_scheduled(self, slot: int) -> np.ndarray:
        return self._secondary_scheduled[slot % SLOTS]

    def secondary_active(self, primary_slot: int, slot: int) -> np.ndarray:
        """scheduled secondary cells that are not preserved."""
        cells = self.secondary_scheduled(slot)
        return cells[self.permitted[primary_slot % SLOTS, cells]]

    def state(
        self, primary_slot: int, secondary_slot: int = 0
    ) -> ScheduleState:
        if self.secondary is None:
            return ScheduleState(
                primary_slot % SLOTS,
                secondary_slot % SLOTS,
                self.primary_active(primary_slot),
                np.zeros(0, dtype=np.int64),
                None,
            )
        return ScheduleState(
            primary_slot % SLOTS,
            secondary_slot % SLOTS,
            self.primary_active(primary_slot),
            self.secondary_active(primary_slot, secondary_slot),
            self.mask(primary_slot),
        )

    def unpreserved_counts(self) -> np.ndarray:
        return self.permitted.sum(axis=0)

    def opportunistic_factors(self) -> List[Fraction]:
        return [Fraction(int(k), SLOTS) for k in self.unpreserved_counts()]

    def interior_cells(self) -> np.ndarray:
        """secondary cells lying inside [2 s_p, 1 - 2 s_p]^2, where no
        preservation square is clipped by the boundary.
        """
        margin = 2 * self.primary.cell_side
        s = self.secondary.cell_side
        idx = np.arange(self.secondary.cells_per_side)
        inside = (idx * s >= margin - 1e-12) & (
            (idx + 1) * s <= 1 - margin + 1e-12
        )
        return np.flatnonzero(np.outer(inside, inside).ravel())

    def eta_range(self, interior: bool = True) -> Tuple[Fraction, Fraction]:
        counts = self.unpreserved_counts()
        if interior:
            cells = self.interior_cells()
            if len(cells):
                counts = counts[cells]
        return Fraction(int(counts.min()), SLOTS), Fraction(
            int(counts.max()), SLOTS
        )

    def blocked_runs(self) -> np.ndarray:
        """longest cyclic run of consecutive preserved primary slots per
        secondary cell. A secondary packet waits at most this many frames
        plus one at a hop.
        """
        blocked = self.masks.astype(np.int64)
        doubled = np.concatenate((blocked, blocked))
        run = np.zeros(blocked.shape[1], dtype=np.int64)
        best = np.zeros_like(run)
        for row in doubled:
            run = (run + 1) * row
            np.maximum(best, run, out=best)
        return np.minimum(best, SLOTS)


@dataclasses.dataclass
class SeparationReport:
    slots_checked: int = 0
    strip_violations: int = 0
    distance_violations: int = 0
    min_strip_gap: float = math.inf
    min_center_distance: float = math.inf

    @property
    def ok(self) -> bool:
        return not (self.strip_violations or self.distance_violations)


def _axis_gaps(center: float, half: float, grid: CellGrid) -> np.ndarray:
    """distance along one axis from [center-half, center+half] to every
    cell interval of the grid.
    """
    s = grid.cell_side
    lo = np.arange(grid.cells_per_side) * s
    hi = lo + s
    return np.maximum(
        0.0, np.maximum(lo - (center + half), (center - half) - hi)
    )


def check_separation(schedule: Schedule) -> SeparationReport:
    """geometric guarantees behind the rate floors: every unpreserved
    secondary cell keeps one secondary side away from the 3x3 primary
    block around each active primary cell, and 1.5 primary sides away
    from the active cell centre.

    Both distances are measured from active primary cell centres, not
    from transmitter positions. A primary transmitter sits anywhere in
    its cell, so it can come up to half a primary side closer to an
    unpreserved secondary receiver than ``min_center_distance`` says.
    """
    report = SeparationReport()
    if schedule.secondary is None:
        return report
    primary, secondary = schedule.primary, schedule.secondary
    side_p, side_s = primary.cell_side, secondary.cell_side
    tol = 1e-9 * side_s
    for k in range(SLOTS):
        free = schedule.permitted[k].reshape(
            secondary.cells_per_side, secondary.cells_per_side
        )
        for cell in schedule.primary_active(k):
            cx, cy = primary.center(primary.unflat(cell))
            gx = _axis_gaps(cx, 1.5 * side_p, secondary)
            gy = _axis_gaps(cy, 1.5 * side_p, secondary)
            strip = np.maximum.outer(gy, gx)[free]
            dx = _axis_gaps(cx, 0.0, secondary)
            dy = _axis_gaps(cy, 0.0, secondary)
            dist = np.hypot.outer(dy, dx)[free]
            if strip.size:
                report.min_strip_gap = min(report.min_strip_gap, strip.min())
                report.min_center_distance = min(
                    report.min_center_distance, dist.min()
                )
            report.strip_violations += int(
                np.count_nonzero(strip < side_s - tol)
            )
            report.distance_violations += int(
                np.count_nonzero(dist < 1.5 * side_p - tol)
            )
        report.slots_checked += 1
    return report


def render_pbm(mask: np.ndarray) -> str:
    """plain PBM (P1) text. The top image row is the highest grid row;
    1 marks a preserved cell.
    """
    mask = np.asarray(mask, dtype=bool)
    rows, cols = mask.shape
    lines = ["P1", "%d %d" % (cols, rows)]
    for row in mask[::-1]:
        lines.append("".join("1" if v else "0" for v in row))
    return "\n".join(lines) + "\n"
