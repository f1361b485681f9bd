"""Occupancy-grid encoding of the contact history, and its two image views."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .env import ContactSignal
from .errors import BoundsError

UNEXPLORED = 0
FREE = 1
CONTACT = 2

UNEXPLORED_VALUE = 0.5
FREE_VALUE = 0.0
CONTACT_VALUE = 1.0
MARKER_VALUE = 0.75

# image value per cell-state code
STATE_VALUES = np.array([UNEXPLORED_VALUE, FREE_VALUE, CONTACT_VALUE])

PGM_LEVELS = {UNEXPLORED_VALUE: 128, FREE_VALUE: 0, CONTACT_VALUE: 255, MARKER_VALUE: 191}


class OccupancyGrid:
    """Per-cell exploration state plus the finger position.

    ``cells`` holds state codes (``UNEXPLORED``/``FREE``/``CONTACT``) indexed
    ``[ix, iy]``. Repeat probes overwrite: the latest reading wins.
    """

    def __init__(self, shape, finger=(0, 0)):
        self.cells = np.zeros(shape, dtype=np.uint8)
        self.finger = (int(finger[0]), int(finger[1]))
        self._explored = 0

    @classmethod
    def from_cells(cls, cells, finger=(0, 0)) -> "OccupancyGrid":
        g = cls(np.shape(cells), finger)
        g.cells[...] = cells
        g._explored = int(np.count_nonzero(g.cells))
        return g

    @property
    def shape(self):
        return self.cells.shape

    @property
    def explored_count(self) -> int:
        return self._explored

    def copy(self) -> "OccupancyGrid":
        g = OccupancyGrid(self.shape, self.finger)
        g.cells[...] = self.cells
        g._explored = self._explored
        return g

    def in_bounds(self, ix, iy) -> bool:
        return 0 <= ix < self.cells.shape[0] and 0 <= iy < self.cells.shape[1]

    def update(self, probed_cell, signal) -> "OccupancyGrid":
        ix, iy = probed_cell
        if not self.in_bounds(ix, iy):
            raise BoundsError(f"cell {probed_cell} outside grid {self.shape}")
        new = CONTACT if int(signal) == ContactSignal.COLLISION else FREE
        if self.cells[ix, iy] == UNEXPLORED:
            self._explored += 1
        self.cells[ix, iy] = new
        return self

    def move_finger(self, finger) -> None:
        if not self.in_bounds(*finger):
            raise BoundsError(f"finger {finger} outside grid {self.shape}")
        self.finger = (int(finger[0]), int(finger[1]))

    def view_for_discriminator(self, dtype=np.float64) -> np.ndarray:
        return STATE_VALUES.astype(dtype)[self.cells]

    def view_for_explorer(self, dtype=np.float64) -> np.ndarray:
        img = STATE_VALUES.astype(dtype)[self.cells]
        img[self.finger] = MARKER_VALUE
        return img


def view_for_discriminator(grid: OccupancyGrid, dtype=np.float64) -> np.ndarray:
    return grid.view_for_discriminator(dtype)


def view_for_explorer(grid: OccupancyGrid, dtype=np.float64) -> np.ndarray:
    return grid.view_for_explorer(dtype)


def codes_to_images(codes: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Discriminator-view images from stacked state-code arrays."""
    return STATE_VALUES.astype(dtype)[codes]


def image_to_codes(image: np.ndarray) -> np.ndarray:
    img = np.asarray(image)
    codes = np.full(img.shape, 255, dtype=np.uint8)
    codes[img == UNEXPLORED_VALUE] = UNEXPLORED
    codes[img == FREE_VALUE] = FREE
    codes[img == CONTACT_VALUE] = CONTACT
    if (codes == 255).any():
        raise ValueError("image contains values other than unexplored/free/contact")
    return codes


def has_marker(image: np.ndarray) -> bool:
    return bool(np.any(np.asarray(image) == MARKER_VALUE))


def to_pgm(image: np.ndarray) -> str:
    """Plain-text P2 graymap of a view image; the top row is the largest y."""
    img = np.asarray(image)
    levels = np.zeros(img.shape, dtype=np.int64)
    for value, level in PGM_LEVELS.items():
        levels[img == value] = level
    rows = levels.T[::-1]  # [iy, ix] with +y up
    h, w = rows.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def write_pgm(path, image: np.ndarray) -> None:
    Path(path).write_text(to_pgm(image))


def read_pgm(path) -> np.ndarray:
    """Inverse of :func:`write_pgm`: returns the view image."""
    tokens = Path(path).read_text().split()
    if tokens[0] != "P2":
        raise ValueError("not a plain graymap")
    w, h, _maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    levels = np.array([int(t) for t in tokens[4:4 + w * h]]).reshape(h, w)
    inverse = {level: value for value, level in PGM_LEVELS.items()}
    img = np.vectorize(inverse.__getitem__)(levels[::-1].T)
    return img.astype(np.float64)
