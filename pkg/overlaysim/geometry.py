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
Random network instances: Poisson node placement on the unit square, the
primary and secondary cell grids, and random source-destination pairing.
"""
import dataclasses
import logging
import math
from typing import IO, Dict, List, Optional, Sequence, Tuple
import numpy as np
from .config import ConfigError, DomainError, NetworkConfig
from . import tools

log = logging.getLogger(__name__)

PRIMARY = "primary"
SECONDARY = "secondary"
TIERS = (PRIMARY, SECONDARY)
CLUSTER_SIDE = 5
ROUNDING_SLACK = 0.6

Cell = Tuple[int, int]


def sample_poisson_nodes(density: float, seed) -> np.ndarray:
    """positions of a Poisson point process of the given intensity on the
    unit square, as an (N, 2) array of (x, y). ``seed`` may be an int or a
    numpy Generator.
    """
    if density < 0:
        raise DomainError("density must be non-negative, got %r" % density)
    rng = seed if isinstance(seed, np.random.Generator) else (
        np.random.default_rng(seed)
    )
    count = rng.poisson(density) if density > 0 else 0
    return rng.random((count, 2))


@dataclasses.dataclass(frozen=True)
class CellGrid:
    """square partition of the unit square into C x C cells. Rows count
    up from y = 0, columns from x = 0; flat index = row * C + col.
    """

    tier: str
    cells_per_side: int
    nominal_area: float
    cluster_side: int = CLUSTER_SIDE

    @property
    def cell_side(self) -> float:
        return 1 / self.cells_per_side

    @property
    def actual_area(self) -> float:
        return 1 / self.cells_per_side**2

    @property
    def num_cells(self) -> int:
        return self.cells_per_side**2

    @property
    def clusters_per_side(self) -> int:
        return self.cells_per_side // self.cluster_side

    @property
    def slack(self) -> float:
        return abs(self.actual_area - self.nominal_area) / self.nominal_area

    def flat(self, cell: Cell) -> int:
        return cell[0] * self.cells_per_side + cell[1]

    def unflat(self, index: int) -> Cell:
        return divmod(int(index), self.cells_per_side)

    def center(self, cell: Cell) -> Tuple[float, float]:
        row, col = cell
        return ((col + 0.5) * self.cell_side, (row + 0.5) * self.cell_side)

    def centers(self) -> np.ndarray:
        """(C*C, 2) array of cell centres in flat order."""
        idx = (np.arange(self.cells_per_side) + 0.5) * self.cell_side
        xs, ys = np.meshgrid(idx, idx)
        return np.column_stack((xs.ravel(), ys.ravel()))

    def cluster_of(self, cell: Cell) -> Cell:
        return cell[0] // self.cluster_side, cell[1] // self.cluster_side


def build_grid(
    nominal_area: float, tier: str = PRIMARY, cluster_side: int = CLUSTER_SIDE
) -> CellGrid:
    """smallest-error grid whose side is a multiple of ``cluster_side`` so
    every cell belongs to a complete cluster. ``cluster_side=1`` gives the
    unconstrained grid used by the occupancy validators.
    """
    if not 0 < nominal_area < 1:
        raise ConfigError(
            "cell area must lie in (0, 1), got %r" % nominal_area
        )
    per_cluster = 1 / (cluster_side * math.sqrt(nominal_area))
    # round half up; Python's round() would go to even
    cells = cluster_side * max(1, math.floor(per_cluster + 0.5))
    grid = CellGrid(tier, cells, nominal_area, cluster_side)
    if grid.slack > ROUNDING_SLACK:
        log.warning(
            "%s grid %dx%d: cell area %.4g is %.0f%% off nominal %.4g",
            tier,
            cells,
            cells,
            grid.actual_area,
            100 * grid.slack,
            nominal_area,
        )
    return grid


def locate_cell(point: Sequence[float], grid: CellGrid) -> Cell:
    x, y = point
    if not (0 <= x <= 1 and 0 <= y <= 1):
        raise DomainError("point %r lies outside the unit square" % (point,))
    c = grid.cells_per_side
    return min(math.floor(y * c), c - 1), min(math.floor(x * c), c - 1)


def locate_cells(points: np.ndarray, grid: CellGrid) -> np.ndarray:
    """vectorised locate_cell returning flat indices."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if points.size and (points.min() < 0 or points.max() > 1):
        raise DomainError("points outside the unit square")
    c = grid.cells_per_side
    rc = np.minimum(np.floor(points * c).astype(np.int64), c - 1)
    return rc[:, 1] * c + rc[:, 0]


@dataclasses.dataclass(frozen=True)
class Matching:
    pairs: Tuple[Tuple[int, int], ...]
    excluded: Optional[int] = None
    warning: bool = False

    def __len__(self):
        return len(self.pairs)


def pair_sources_destinations(node_ids: Sequence[int], seed) -> Matching:
    """uniform random perfect matching. With an odd count the largest id
    sits out. The first node of each pair is the source.
    """
    ids = sorted(int(i) for i in node_ids)
    if len(ids) < 2:
        log.warning("cannot pair %d node(s)", len(ids))
        return Matching((), ids[0] if ids else None, True)
    excluded = None
    if len(ids) % 2:
        excluded = ids.pop()
        log.debug("odd node count; node %d left unpaired", excluded)
    rng = seed if isinstance(seed, np.random.Generator) else (
        np.random.default_rng(seed)
    )
    order = rng.permutation(np.asarray(ids, dtype=np.int64))
    pairs = tuple(
        (int(a), int(b)) for a, b in order.reshape(-1, 2).tolist()
    )
    return Matching(pairs, excluded)


class TierDeployment:
    """nodes, pairs and per-cell membership of one network tier. Node ids
    are the row indices of ``positions``. Immutable after construction.
    """

    __slots__ = (
        "tier",
        "grid",
        "positions",
        "pairs",
        "excluded",
        "cells",
        "member_ids",
        "member_offsets",
    )

    def __init__(
        self,
        tier: str,
        grid: CellGrid,
        positions: np.ndarray,
        pairs: np.ndarray,
        excluded: Optional[int] = None,
    ):
        self.tier = tier
        self.grid = grid
        self.positions = np.asarray(positions, dtype=float).reshape(-1, 2)
        self.pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        self.excluded = excluded
        self.cells = locate_cells(self.positions, grid)
        order = np.argsort(self.cells, kind="stable")
        counts = np.bincount(self.cells, minlength=grid.num_cells)
        self.member_ids = order
        self.member_offsets = np.concatenate(([0], np.cumsum(counts)))
        for arr in (
            self.positions,
            self.pairs,
            self.cells,
            self.member_ids,
            self.member_offsets,
        ):
            arr.setflags(write=False)
        if len(self.pairs):
            if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
                raise DomainError("a node is paired with itself")
            if len(np.unique(self.pairs)) != self.pairs.size:
                raise DomainError("a node appears in two pairs")

    def __eq__(self, other):
        return (
            isinstance(other, TierDeployment)
            and self.tier == other.tier
            and self.grid == other.grid
            and np.array_equal(self.positions, other.positions)
            and np.array_equal(self.pairs, other.pairs)
        )

    def __repr__(self):
        return "TierDeployment(%r, nodes=%d, pairs=%d, grid=%dx%d)" % (
            self.tier,
            len(self.positions),
            len(self.pairs),
            self.grid.cells_per_side,
            self.grid.cells_per_side,
        )

    @property
    def num_nodes(self) -> int:
        return len(self.positions)

    @property
    def member_counts(self) -> np.ndarray:
        return np.diff(self.member_offsets)

    def members(self, cell) -> np.ndarray:
        """node ids in a cell, sorted ascending."""
        if isinstance(cell, tuple):
            cell = self.grid.flat(cell)
        return self.member_ids[
            self.member_offsets[cell]:self.member_offsets[cell + 1]
        ]

    def cell_members(self) -> Dict[int, List[int]]:
        return {
            c: self.members(c).tolist()
            for c in range(self.grid.num_cells)
            if self.member_offsets[c + 1] > self.member_offsets[c]
        }


@dataclasses.dataclass(frozen=True)
class Deployment:
    config: NetworkConfig
    primary: TierDeployment
    secondary: Optional[TierDeployment] = None

    def tiers(self) -> List[TierDeployment]:
        return [t for t in (self.primary, self.secondary) if t is not None]

    def __getitem__(self, tier: str) -> TierDeployment:
        found = getattr(self, tier, None)
        if found is None:
            raise KeyError(tier)
        return found


def build_grids(config: NetworkConfig) -> Dict[str, CellGrid]:
    grids = {PRIMARY: build_grid(config.a_p, PRIMARY)}
    if not config.primary_only:
        grids[SECONDARY] = build_grid(config.a_s, SECONDARY)
    return grids


def deploy_tier(
    tier: str, density: float, grid: CellGrid, seed: int
) -> TierDeployment:
    positions = sample_poisson_nodes(density, tools.rng_for(seed, tier))
    matching = pair_sources_destinations(
        range(len(positions)), tools.rng_for(seed, tier, "pairs")
    )
    return TierDeployment(
        tier, grid, positions, np.asarray(matching.pairs), matching.excluded
    )


def deploy(config: NetworkConfig, seed: Optional[int] = None) -> Deployment:
    """one random instance. Identical (config, seed) gives identical
    positions and pairs.
    """
    seed = config.seed if seed is None else seed
    grids = build_grids(config)
    primary = deploy_tier(PRIMARY, config.n, grids[PRIMARY], seed)
    secondary = None
    if not config.primary_only:
        secondary = deploy_tier(SECONDARY, config.m, grids[SECONDARY], seed)
    log.info(
        "deployed n=%g: %d primary, %s secondary nodes",
        config.n,
        primary.num_nodes,
        secondary.num_nodes if secondary else "no",
    )
    return Deployment(config, primary, secondary)


def from_points(
    config: NetworkConfig,
    primary_points,
    primary_pairs,
    secondary_points=None,
    secondary_pairs=None,
) -> Deployment:
    """hand-built instance on the grids the config implies."""
    grids = build_grids(config)
    primary = TierDeployment(
        PRIMARY, grids[PRIMARY], primary_points, primary_pairs
    )
    secondary = None
    if secondary_points is not None and not config.primary_only:
        secondary = TierDeployment(
            SECONDARY,
            grids[SECONDARY],
            secondary_points,
            secondary_pairs if secondary_pairs is not None else [],
        )
    return Deployment(config, primary, secondary)


# plain-text instance format:
#   # overlaysim-deployment key=value ...   (config echo)
#   <id>,<tier>,<x>,<y>        one line per node
#   <tier>,<src>,<dst>         one line per pair
HEADER = "# overlaysim-deployment"


def dump_deployment(deployment: Deployment, fh: IO[str]) -> None:
    echo = " ".join(
        "%s=%r" % (k, v) for k, v in deployment.config.as_dict().items()
    )
    fh.write("%s %s\n" % (HEADER, echo))
    for tier in deployment.tiers():
        for i, (x, y) in enumerate(tier.positions.tolist()):
            fh.write("%d,%s,%r,%r\n" % (i, tier.tier, x, y))
    for tier in deployment.tiers():
        for src, dst in tier.pairs.tolist():
            fh.write("%s,%d,%d\n" % (tier.tier, src, dst))


def load_deployment(fh: IO[str]) -> Deployment:
    header = fh.readline()
    if not header.startswith(HEADER):
        raise ConfigError("not a deployment file")
    echo = {}
    for item in header[len(HEADER):].split():
        key, _, value = item.partition("=")
        echo[key] = value
    config = NetworkConfig.from_mapping(echo)
    points: Dict[str, List[Tuple[float, float]]] = {t: [] for t in TIERS}
    pairs: Dict[str, List[Tuple[int, int]]] = {t: [] for t in TIERS}
    for lineno, line in enumerate(fh, 2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split(",")
        try:
            if len(fields) == 4:
                node_id, tier, x, y = fields
                if int(node_id) != len(points[tier]):
                    raise ConfigError(
                        "line %d: node ids must be consecutive" % lineno
                    )
                points[tier].append((float(x), float(y)))
            elif len(fields) == 3:
                tier, src, dst = fields
                pairs[tier].append((int(src), int(dst)))
            else:
                raise ConfigError("line %d: malformed %r" % (lineno, line))
        except (ValueError, KeyError):
            raise ConfigError("line %d: malformed %r" % (lineno, line))
    secondary = points[SECONDARY] if points[SECONDARY] else None
    return from_points(
        config,
        points[PRIMARY],
        pairs[PRIMARY],
        secondary,
        pairs[SECONDARY] if secondary else None,
    )
