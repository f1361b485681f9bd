"""Random polygon objects, rigid placement, containment and rasterization.

Coordinates are meters in the workspace frame, whose origin is the workspace
center. Grid cells are indexed ``[ix, iy]`` with ``ix`` along +x.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .errors import ConfigurationError, InvalidParameterError

TWO_PI = 2.0 * math.pi
OBJECT_SET_FORMAT_VERSION = 1
DEFAULT_MIN_RADIUS_FRACTION = 0.2


def shoelace_area(vertices) -> float:
    v = np.asarray(vertices, dtype=np.float64)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


@dataclass(frozen=True, eq=False)
class Polygon:
    """Simple counter-clockwise polygon with an integer object label."""

    vertices: np.ndarray
    id: int = 0

    def __post_init__(self):
        v = np.array(self.vertices, dtype=np.float64)
        if v.ndim != 2 or v.shape[1] != 2 or len(v) < 3:
            raise InvalidParameterError(f"polygon needs >= 3 2D vertices, got shape {v.shape}")
        if not shoelace_area(v) > 0:
            raise InvalidParameterError("polygon vertices must be counter-clockwise with positive area")
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    def __len__(self):
        return len(self.vertices)

    @property
    def area(self) -> float:
        return shoelace_area(self.vertices)

    @property
    def centroid(self) -> np.ndarray:
        """Area centroid."""
        v = self.vertices
        x, y = v[:, 0], v[:, 1]
        xn, yn = np.roll(x, -1), np.roll(y, -1)
        cross = x * yn - xn * y
        a = cross.sum() / 2.0
        return np.array([((x + xn) * cross).sum(), ((y + yn) * cross).sum()]) / (6.0 * a)

    def max_radius(self) -> float:
        return float(np.hypot(self.vertices[:, 0], self.vertices[:, 1]).max())

    def same_shape(self, other: "Polygon") -> bool:
        return self.vertices.shape == other.vertices.shape and bool(np.array_equal(self.vertices, other.vertices))


@dataclass(frozen=True)
class Pose2D:
    rotation: float = 0.0
    translation: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        r = math.fmod(float(self.rotation), TWO_PI)
        if r < 0:
            r += TWO_PI
        if r >= TWO_PI:
            r = 0.0
        object.__setattr__(self, "rotation", r)
        tx, ty = self.translation
        object.__setattr__(self, "translation", (float(tx), float(ty)))

    def then(self, other: "Pose2D") -> "Pose2D":
        """Pose equivalent to applying ``self`` first and ``other`` second."""
        c, s = math.cos(other.rotation), math.sin(other.rotation)
        tx, ty = self.translation
        ox, oy = other.translation
        return Pose2D(self.rotation + other.rotation, (c * tx - s * ty + ox, s * tx + c * ty + oy))


@dataclass(frozen=True)
class GridSpec:
    """Square workspace discretized into square cells, centered on the origin."""

    workspace_size: float = 0.30
    cell_size: float = 0.005

    def __post_init__(self):
        if self.workspace_size <= 0 or self.cell_size <= 0:
            raise ConfigurationError("workspace and cell size must be positive")
        n = self.workspace_size / self.cell_size
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigurationError(
                f"workspace size {self.workspace_size} is not a whole number of {self.cell_size} cells"
            )

    @property
    def n(self) -> int:
        return int(round(self.workspace_size / self.cell_size))

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    @property
    def origin(self) -> tuple[float, float]:
        """Workspace-frame coordinates of the grid's lower-left corner."""
        h = -self.workspace_size / 2.0
        return (h, h)

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        ox, oy = self.origin
        return (ox + (ix + 0.5) * self.cell_size, oy + (iy + 0.5) * self.cell_size)

    def in_bounds(self, ix: int, iy: int) -> bool:
        n = self.n
        return 0 <= ix < n and 0 <= iy < n


@dataclass(frozen=True, eq=False)
class TruthGrid:
    occupied: np.ndarray = field(repr=False)

    def __post_init__(self):
        occ = np.array(self.occupied, dtype=bool)
        occ.setflags(write=False)
        object.__setattr__(self, "occupied", occ)

    @property
    def width(self) -> int:
        return self.occupied.shape[0]

    @property
    def height(self) -> int:
        return self.occupied.shape[1]


def _sample_angle_steps(rng: np.random.Generator, n: int) -> np.ndarray:
    # every step < pi keeps the origin strictly inside and the orientation CCW
    while True:
        steps = 1.0 - rng.random(n)  # uniform in (0, 1]
        steps = steps / steps.sum() * TWO_PI
        if steps.max() < math.pi:
            return steps


def generate_polygon(seed, max_edges: int = 8, max_radius: float = 0.10,
                     min_radius_fraction: float = DEFAULT_MIN_RADIUS_FRACTION,
                     object_id: int = 0) -> Polygon:
    """Random polygon from an angular walk around the origin.

    The vertex count is uniform in ``[3, max_edges]``; each vertex sits at a
    radius uniform in ``(min_radius_fraction * max_radius, max_radius]``.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if int(max_edges) != max_edges or max_edges < 3:
        raise InvalidParameterError(f"max_edges must be an integer >= 3, got {max_edges}")
    if not max_radius > 0:
        raise InvalidParameterError(f"max_radius must be positive, got {max_radius}")
    if not 0 <= min_radius_fraction < 1:
        raise InvalidParameterError("min_radius_fraction must be in [0, 1)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = int(rng.integers(3, int(max_edges) + 1))
    start = rng.random() * TWO_PI
    steps = _sample_angle_steps(rng, n)
    angles = start + np.concatenate([[0.0], np.cumsum(steps[:-1])])
    r_min = min_radius_fraction * max_radius
    radii = max_radius - rng.random(n) * (max_radius - r_min)
    verts = np.stack([radii * np.cos(angles), radii * np.sin(angles)], axis=1)
    return Polygon(verts, id=object_id)


def generate_object_set(seed: int, num_objects: int = 10, max_edges: int = 8,
                        max_radius: float = 0.10,
                        min_radius_fraction: float = DEFAULT_MIN_RADIUS_FRACTION) -> list[Polygon]:
    children = np.random.SeedSequence(seed).spawn(num_objects)
    return [
        generate_polygon(np.random.default_rng(ss), max_edges, max_radius, min_radius_fraction, object_id=i)
        for i, ss in enumerate(children)
    ]


def transform(poly: Polygon, pose: Pose2D) -> Polygon:
    c, s = math.cos(pose.rotation), math.sin(pose.rotation)
    v = poly.vertices
    x = c * v[:, 0] - s * v[:, 1] + pose.translation[0]
    y = s * v[:, 0] + c * v[:, 1] + pose.translation[1]
    return Polygon(np.stack([x, y], axis=1), id=poly.id)


def point_in_polygon(p, poly: Polygon) -> bool:
    """True when ``p`` is inside ``poly`` or within 1e-12 m of its boundary."""
    return bool(kernels.points_in_polygon(np.asarray(p, dtype=np.float64).reshape(1, 2), poly.vertices)[0])


def points_in_polygon(points, poly: Polygon) -> np.ndarray:
    return kernels.points_in_polygon(points, poly.vertices)


def rasterize_truth(poly: Polygon, pose: Pose2D, grid: GridSpec) -> TruthGrid:
    placed = transform(poly, pose)
    ox, oy = grid.origin
    occ = kernels.rasterize_polygon(placed.vertices, grid.n, grid.n, grid.cell_size, ox, oy)
    return TruthGrid(occ.astype(bool))


# object-set files ---------------------------------------------------------


def save_object_set(path, objects: list[Polygon], max_edges: int, max_radius: float) -> None:
    doc = {
        "format_version": OBJECT_SET_FORMAT_VERSION,
        "max_edges": int(max_edges),
        "max_radius_m": float(max_radius),
        "objects": [{"id": int(o.id), "vertices": o.vertices.tolist()} for o in objects],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_object_set(path) -> list[Polygon]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read object set {path}: {exc}") from exc
    if doc.get("format_version") != OBJECT_SET_FORMAT_VERSION:
        raise ConfigurationError(f"unsupported object-set format_version {doc.get('format_version')!r}")
    objects = [Polygon(np.asarray(o["vertices"], dtype=np.float64), id=int(o["id"])) for o in doc["objects"]]
    ids = [o.id for o in objects]
    if ids != list(range(len(objects))):
        raise ConfigurationError(f"object ids must be 0..n-1 in order, got {ids}")
    return objects


def default_object_set_path() -> Path:
    return Path(__file__).with_name("data") / "objects.json"


def load_default_objects() -> list[Polygon]:
    return load_object_set(default_object_set_path())
