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
Cell-level routes: each packet first runs along the source's row to the
destination's column, then along that column to the destination's row.
Within a cell one designated relay forwards every passing path, and the
role rotates through the members frame by frame.
"""
import csv
import dataclasses
import logging
from typing import IO, Iterable, Sequence, Tuple
import numpy as np
from .config import OverlaySimError
from .geometry import Cell, CellGrid, TierDeployment

log = logging.getLogger(__name__)


class StalledCellError(OverlaySimError):
    pass


@dataclasses.dataclass(frozen=True)
class DataPath:
    pair_id: int
    tier: str
    cells: Tuple[Cell, ...]

    @property
    def hops(self) -> int:
        return len(self.cells) - 1

    def length(self, grid: CellGrid) -> float:
        return self.hops * grid.cell_side


def _run(start: int, stop: int) -> range:
    step = 1 if stop >= start else -1
    return range(start, stop + step, step)


def build_path(
    src_cell: Cell, dst_cell: Cell, pair_id: int = 0, tier: str = "primary"
) -> DataPath:
    (sr, sc), (dr, dc) = src_cell, dst_cell
    cells = [(sr, c) for c in _run(sc, dc)]
    cells.extend((r, dc) for r in _run(sr, dr)[1:])
    return DataPath(pair_id, tier, tuple(cells))


class PathSet:
    """every pair's route of one tier as flat cell indices; path i is
    ``cells[offsets[i]:offsets[i + 1]]``.
    """

    def __init__(self, tier: str, grid: CellGrid, src, dst):
        self.tier = tier
        self.grid = grid
        c = grid.cells_per_side
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        sr, sc = np.divmod(src, c)
        dr, dc = np.divmod(dst, c)
        across = np.abs(dc - sc)
        self.hops = across + np.abs(dr - sr)
        self.offsets = np.concatenate(([0], np.cumsum(self.hops + 1)))
        pair = np.repeat(np.arange(len(src)), self.hops + 1)
        step = np.arange(self.offsets[-1]) - self.offsets[pair]
        horizontal = step <= across[pair]
        row = np.where(
            horizontal,
            sr[pair],
            sr[pair] + np.sign(dr - sr)[pair] * (step - across[pair]),
        )
        col = np.where(
            horizontal, sc[pair] + np.sign(dc - sc)[pair] * step, dc[pair]
        )
        self.cells = row * c + col
        self.pair_of = pair
        self.step_of = step
        for arr in (self.hops, self.offsets, self.cells):
            arr.setflags(write=False)

    @classmethod
    def from_tier(cls, tier: TierDeployment) -> "PathSet":
        if not len(tier.pairs):
            return cls(tier.tier, tier.grid, [], [])
        return cls(
            tier.tier,
            tier.grid,
            tier.cells[tier.pairs[:, 0]],
            tier.cells[tier.pairs[:, 1]],
        )

    def __len__(self):
        return len(self.hops)

    def path(self, i: int) -> DataPath:
        cells = self.cells[self.offsets[i]:self.offsets[i + 1]]
        return DataPath(
            i, self.tier, tuple(self.grid.unflat(x) for x in cells)
        )

    def __iter__(self):
        return (self.path(i) for i in range(len(self)))

    def cell_at(self, pairs: np.ndarray, steps: np.ndarray) -> np.ndarray:
        return self.cells[self.offsets[pairs] + steps]

    def stall_steps(self, member_counts: np.ndarray) -> np.ndarray:
        """per pair, the first intermediate step whose cell has no members,
        or -1. The destination cell never stalls a path.
        """
        empty = member_counts[self.cells] == 0
        last = self.offsets[1:] - 1
        empty[last] = False
        empty[self.offsets[:-1]] = False
        stall = np.full(len(self), -1, dtype=np.int64)
        hit = np.flatnonzero(empty)
        if len(hit):
            pairs = self.pair_of[hit]
            first = np.unique(pairs, return_index=True)[1]
            stall[pairs[first]] = self.step_of[hit[first]]
        return stall


def designated_relay(cell: int, frame: int, members: Sequence[int]) -> int:
    """members are taken in id order; the relay index is frame mod count."""
    if not len(members):
        raise StalledCellError("cell %r has no relay candidates" % (cell,))
    return int(sorted(members)[frame % len(members)])


def relay_table(tier: TierDeployment, frame: int) -> np.ndarray:
    """designated relay of every cell for a tier frame; -1 where empty."""
    counts = tier.member_counts
    relays = np.full(len(counts), -1, dtype=np.int64)
    busy = np.flatnonzero(counts)
    if len(busy):
        relays[busy] = tier.member_ids[
            tier.member_offsets[busy] + frame % counts[busy]
        ]
    return relays


@dataclasses.dataclass(frozen=True)
class PathTable:
    paths: PathSet
    through: np.ndarray
    originating: np.ndarray

    @property
    def load(self) -> np.ndarray:
        return self.through + self.originating

    @property
    def max_load(self) -> int:
        return int(self.load.max()) if self.load.size else 0


def count_paths(paths: PathSet, grid: CellGrid) -> PathTable:
    """per-cell numbers of paths originating at or passing through a cell.
    Every cell after the first on a route counts as traversed.
    """
    first = paths.offsets[:-1]
    originating = np.bincount(paths.cells[first], minlength=grid.num_cells)
    through = np.bincount(paths.cells, minlength=grid.num_cells)
    through = through - originating
    return PathTable(paths, through, originating)


def mean_path_length(paths: PathSet) -> float:
    """mean hop count times the cell side, a proxy for the mean S-D
    distance.
    """
    if not len(paths):
        return 0.0
    return float(paths.hops.mean()) * paths.grid.cell_side


PATH_FIELDS = ("pair_id", "tier", "step", "row", "col")


def dump_paths(path_sets: Iterable[PathSet], fh: IO[str]) -> int:
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(PATH_FIELDS)
    rows = 0
    for paths in path_sets:
        c = paths.grid.cells_per_side
        rows_iter = zip(
            paths.pair_of.tolist(),
            paths.step_of.tolist(),
            paths.cells.tolist(),
        )
        for pair, step, cell in rows_iter:
            writer.writerow((pair, paths.tier, step, *divmod(cell, c)))
            rows += 1
    return rows


@dataclasses.dataclass(frozen=True)
class LinkPlan:
    """distinct links the cells of one tier serve. A node id of -1 stands
    for the designated relay of ``cell`` (transmitter) or ``rx_cell``
    (receiver), resolved per frame.
    """

    cell: np.ndarray
    tx_node: np.ndarray
    rx_node: np.ndarray
    rx_cell: np.ndarray

    def __len__(self):
        return len(self.cell)

    def resolve(self, relays: np.ndarray, links=None):
        """transmitter and receiver ids for a relay table, and the mask of
        links whose relays exist. ``links`` selects a subset.
        """
        if links is None:
            links = np.arange(len(self))
        tx_node, rx_node = self.tx_node[links], self.rx_node[links]
        tx = np.where(tx_node >= 0, tx_node, relays[self.cell[links]])
        rx = np.where(rx_node >= 0, rx_node, relays[self.rx_cell[links]])
        return tx, rx, (tx >= 0) & (rx >= 0) & (tx != rx)


def plan_links(paths: PathSet, tier: TierDeployment) -> LinkPlan:
    """sources send to the next cell's relay (or straight to a destination
    one hop away), relays forward to the next relay, the last relay hands
    the packet to the destination, and a pair sharing a cell talks
    directly.
    """
    none = np.zeros(0, dtype=np.int64)
    if not len(paths):
        return LinkPlan(none, none, none, none)
    num = paths.grid.num_cells
    hops = paths.hops
    cells = paths.cells
    first = paths.offsets[:-1]
    src, dst = tier.pairs[:, 0], tier.pairs[:, 1]
    step = paths.step_of
    pair_hops = hops[paths.pair_of]

    inner = np.flatnonzero((step > 0) & (step + 1 < pair_hops))
    key = np.unique(cells[inner] * num + cells[inner + 1])
    relay_cell, relay_next = np.divmod(key, num)

    moving = np.flatnonzero(hops >= 1)
    far = np.flatnonzero(hops >= 2)
    last_tx = paths.offsets[1:][far] - 2
    still = np.flatnonzero(hops == 0)

    def relay(n):
        return np.full(n, -1, dtype=np.int64)

    return LinkPlan(
        np.concatenate(
            (
                relay_cell,
                cells[first[moving]],
                cells[last_tx],
                cells[first[still]],
            )
        ),
        np.concatenate(
            (relay(len(key)), src[moving], relay(len(far)), src[still])
        ),
        np.concatenate(
            (
                relay(len(key)),
                np.where(hops[moving] == 1, dst[moving], -1),
                dst[far],
                dst[still],
            )
        ),
        np.concatenate(
            (
                relay_next,
                cells[first[moving] + 1],
                cells[last_tx + 1],
                cells[first[still]],
            )
        ),
    )
