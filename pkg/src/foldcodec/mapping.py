"""Occupancy-regularized attribute mapping and grid expansion.

Original points are assigned to reconstructed grid cells greedily, scoring
candidates by occupancy times distance so crowded cells repel further
assignments. Cell colors are the channelwise mean of their points; holes
take the color of the nearest original point. Overloaded grids grow by
inserting rows/columns next to the most crowded line until the mapping is
lossless or the mean occupancy stops changing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .cloud import PointCloud
from .grid import Grid


@dataclass(frozen=True)
class MappingTable:
    """Point-to-cell assignment plus its inverse and per-cell occupancy."""

    forward: np.ndarray        # (n,) cell index per original point
    inverse: tuple[tuple[int, ...], ...]  # per-cell original point indices
    occupancy: np.ndarray      # (n_cells,) assignment counts
    k: int                     # candidate count used to build the table

    def __post_init__(self):
        if self.forward.ndim != 1 or self.occupancy.ndim != 1:
            raise ValueError("forward and occupancy must be 1-D")
        if len(self.inverse) != self.occupancy.shape[0]:
            raise ValueError("inverse list count must match cell count")
        if int(self.occupancy.sum()) != self.forward.shape[0]:
            raise ValueError("occupancy must sum to the point count")

    @property
    def n_cells(self) -> int:
        return self.occupancy.shape[0]


@dataclass(frozen=True)
class AttributeImage:
    """RGB image laid out over the (possibly expanded) grid."""

    width: int
    height: int
    pixels: np.ndarray      # (height, width, 3) uint8
    occupancy: np.ndarray   # (height, width) counts
    provenance: np.ndarray  # (height, width) flat source grid index

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("image dims must be positive")
        shape = (self.height, self.width)
        if self.pixels.shape != shape + (3,) or self.pixels.dtype != np.uint8:
            raise ValueError(f"pixels must be uint8 with shape {shape + (3,)}")
        if self.occupancy.shape != shape or self.provenance.shape != shape:
            raise ValueError(f"occupancy and provenance must have shape {shape}")


@dataclass(frozen=True)
class InsertionRecord:
    """One expansion round: the selected line and where new lines landed."""

    axis: str                  # "row" or "col"
    selected: int              # line index in the grid before this round
    inserted: tuple[int, ...]  # new line indices in the grid after this round


@dataclass(frozen=True)
class ExpansionState:
    width: int
    height: int
    row_means: np.ndarray
    col_means: np.ndarray
    average: float             # mean of all row and column means
    averages: tuple[float, ...]  # that mean after round 0, 1, ... (round 0 = initial mapping)
    delta_r: float | None      # relative change of average in the last round
    delta_r_min: float
    records: tuple[InsertionRecord, ...]
    rounds: int
    reason: str                # "lossless", "delta_r" or "max_rounds"


def build_mapping(original: np.ndarray, recon: np.ndarray, k: int = 9) -> MappingTable:
    """Greedy assignment of each original point (in ascending index order)
    to the best of its k nearest reconstructed cells, scored by
    occupancy * Euclidean distance with occupancies updated immediately.
    Ties prefer the smaller distance, then the lower cell index."""
    original = np.ascontiguousarray(original, dtype=np.float64)
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    if original.ndim != 2 or original.shape[1] != 3 or original.shape[0] == 0:
        raise ValueError("original cloud must be a nonempty (n, 3) array")
    if recon.ndim != 2 or recon.shape[1] != 3 or recon.shape[0] == 0:
        raise ValueError("reconstruction must be a nonempty (m, 3) array")
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > recon.shape[0]:
        raise ValueError(f"k={k} exceeds cell count {recon.shape[0]}")
    cand_idx, cand_d2 = _kernels.knn(recon, original, k)
    forward, occupancy = _kernels.greedy_assign(cand_idx, np.sqrt(cand_d2), recon.shape[0])
    order = np.argsort(forward, kind="stable")
    groups = np.split(order, np.cumsum(occupancy)[:-1])
    inverse = tuple(tuple(int(p) for p in g) for g in groups)
    return MappingTable(forward=forward, inverse=inverse, occupancy=occupancy, k=k)


def map_attributes(pc: PointCloud, table: MappingTable, w: int, h: int,
                   recon: np.ndarray) -> AttributeImage:
    """Rasterize point colors onto the grid. Occupied cells average their
    points' channels (rounded half-up); empty cells copy the color of the
    original point nearest to the cell's folded position."""
    if table.forward.shape[0] != pc.n:
        raise ValueError("mapping table does not match the point cloud")
    n_cells = w * h
    if table.n_cells != n_cells:
        raise ValueError(f"table has {table.n_cells} cells, grid has {n_cells}")
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    if recon.shape != (n_cells, 3):
        raise ValueError(f"expected ({n_cells}, 3) folded positions")
    sums = np.zeros((n_cells, 3))
    np.add.at(sums, table.forward, pc.attributes.astype(np.float64))
    counts = table.occupancy.astype(np.float64)
    flat = np.zeros((n_cells, 3), dtype=np.uint8)
    occupied = table.occupancy > 0
    mean = sums[occupied] / counts[occupied, None]
    flat[occupied] = np.floor(mean + 0.5).astype(np.uint8)
    if not np.all(occupied):
        empty = ~occupied
        idx, _ = _kernels.nn1(pc.positions, recon[empty])
        flat[empty] = pc.attributes[idx]
    return AttributeImage(
        width=w,
        height=h,
        pixels=flat.reshape(h, w, 3),
        occupancy=table.occupancy.reshape(h, w).copy(),
        provenance=np.arange(n_cells, dtype=np.int64).reshape(h, w),
    )


def occupancy_stats(occupancy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-row and per-column mean of the strictly positive entries.
    Lines without any occupied cell get mean 0."""
    occ = np.asarray(occupancy, dtype=np.float64)
    if occ.ndim != 2 or occ.size == 0:
        raise ValueError("occupancy must be a nonempty 2-D grid")

    def line_means(axis):
        pos = occ > 0
        counts = pos.sum(axis=axis)
        sums = np.where(pos, occ, 0.0).sum(axis=axis)
        means = np.zeros_like(sums)
        np.divide(sums, counts, out=means, where=counts > 0)
        return means

    return line_means(axis=1), line_means(axis=0)


def _mean_average(row_means: np.ndarray, col_means: np.ndarray) -> float:
    return float(np.concatenate([row_means, col_means]).mean())


def _select_line(row_means: np.ndarray, col_means: np.ndarray) -> tuple[str, int]:
    r = int(np.argmax(row_means))
    c = int(np.argmax(col_means))
    if row_means[r] >= col_means[c]:
        return "row", r
    return "col", c


def _insert_lines(block: np.ndarray, axis_index: int, selected: int):
    """Insert new lines next to ``selected`` along ``axis_index`` of a
    (h, w, 3) block. Interior lines get a midpoint neighbor on each side;
    an edge line gets a single interior-side midpoint; the sole line of a
    one-line grid gets a copy after itself."""
    lines = np.moveaxis(block, axis_index, 0)
    count = lines.shape[0]
    if count == 1:
        new = np.insert(lines, 1, lines[0], axis=0)
        inserted = (1,)
    elif selected == 0:
        new = np.insert(lines, 1, 0.5 * (lines[0] + lines[1]), axis=0)
        inserted = (1,)
    elif selected == count - 1:
        new = np.insert(lines, selected, 0.5 * (lines[selected - 1] + lines[selected]), axis=0)
        inserted = (selected,)
    else:
        above = 0.5 * (lines[selected - 1] + lines[selected])
        below = 0.5 * (lines[selected] + lines[selected + 1])
        new = np.insert(lines, [selected, selected + 1], np.stack([above, below]), axis=0)
        inserted = (selected, selected + 2)
    return np.moveaxis(new, 0, axis_index), inserted


def _apply_insertion(grid: Grid, recon: np.ndarray, axis: str, selected: int):
    """Insert lines into both the lattice and the folded positions."""
    axis_index = 0 if axis == "row" else 1
    lattice = grid.points.reshape(grid.h, grid.w, 3)
    folded = recon.reshape(grid.h, grid.w, 3)
    new_lattice, inserted = _insert_lines(lattice, axis_index, selected)
    new_folded, _ = _insert_lines(folded, axis_index, selected)
    h, w = new_lattice.shape[:2]
    new_grid = Grid(w=w, h=h, points=np.ascontiguousarray(new_lattice.reshape(-1, 3)))
    return new_grid, np.ascontiguousarray(new_folded.reshape(-1, 3)), inserted


def expand_grid(grid: Grid, recon: np.ndarray, original: np.ndarray, k: int = 9,
                delta_r_min: float = 1e-6, max_rounds: int = 64):
    """Grow the grid until the mapping is lossless, the average line
    occupancy stalls, or ``max_rounds`` insertions happened.

    Each round picks the row or column with the highest zero-excluded mean
    occupancy (ties: row first, then lower index), inserts midpoint lines
    around it and rebuilds the mapping.

    Returns (expanded grid, expanded folded positions, MappingTable,
    ExpansionState).
    """
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    if recon.shape != (grid.n, 3):
        raise ValueError(f"expected ({grid.n}, 3) folded positions")
    table = build_mapping(original, recon, k)
    row_means, col_means = occupancy_stats(table.occupancy.reshape(grid.h, grid.w))
    average = _mean_average(row_means, col_means)
    averages = [average]
    delta_r: float | None = None
    records: list[InsertionRecord] = []
    rounds = 0
    while True:
        if np.all(table.occupancy <= 1):
            reason = "lossless"
            break
        if delta_r is not None and delta_r < delta_r_min:
            reason = "delta_r"
            break
        if rounds >= max_rounds:
            reason = "max_rounds"
            break
        axis, selected = _select_line(row_means, col_means)
        grid, recon, inserted = _apply_insertion(grid, recon, axis, selected)
        records.append(InsertionRecord(axis=axis, selected=selected, inserted=inserted))
        rounds += 1
        table = build_mapping(original, recon, k)
        row_means, col_means = occupancy_stats(table.occupancy.reshape(grid.h, grid.w))
        new_average = _mean_average(row_means, col_means)
        delta_r = abs(new_average - average) / average
        average = new_average
        averages.append(average)
    state = ExpansionState(
        width=grid.w,
        height=grid.h,
        row_means=row_means,
        col_means=col_means,
        average=average,
        averages=tuple(averages),
        delta_r=delta_r,
        delta_r_min=delta_r_min,
        records=tuple(records),
        rounds=rounds,
        reason=reason,
    )
    return grid, recon, table, state


def replay_expansion(grid: Grid, recon: np.ndarray, original: np.ndarray, k: int,
                     records: tuple[InsertionRecord, ...]):
    """Re-apply a recorded insertion sequence without re-deciding it.
    Returns (grid, folded positions, MappingTable) and must agree with the
    expand_grid run that produced the records."""
    recon = np.ascontiguousarray(recon, dtype=np.float64)
    for rec in records:
        grid, recon, inserted = _apply_insertion(grid, recon, rec.axis, rec.selected)
        if inserted != rec.inserted:
            raise ValueError("insertion record does not match the grid shape")
    return grid, recon, build_mapping(original, recon, k)


def decode_attributes(image: AttributeImage, table: MappingTable) -> np.ndarray:
    """Read each original point's color back from its assigned pixel."""
    if image.width * image.height != table.n_cells:
        raise ValueError("image dims do not match the mapping table")
    flat = image.pixels.reshape(-1, 3)
    return flat[table.forward]
