"""Non-learned discriminator: contact cells as a point cloud, matched to each object by 2D ICP."""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from ._pykernels import _nearest_on_edges
from .discriminator import Prediction
from .encoder import CONTACT, OccupancyGrid, image_to_codes
from .errors import ConfigurationError, DataError
from .geometry import GridSpec, Polygon, Pose2D


RESIDUALS = {"rms": 0, "mean": 1}
INIT_TRANSLATIONS = ("centroid", "origin", "both")


@dataclass(frozen=True)
class ICPConfig:
    match_threshold: float = 0.0025
    spacing: float = 0.001
    num_inits: int = 36
    max_iter: int = 100
    tol: float = 1e-9
    residual: str = "mean"
    # clouds arrive in the workspace frame, where objects sit near the origin
    init_translation: str = "origin"

    def __post_init__(self):
        if self.match_threshold <= 0 or self.spacing <= 0:
            raise ConfigurationError("match_threshold and spacing must be positive")
        if self.residual not in RESIDUALS:
            raise ConfigurationError(f"residual must be one of {tuple(RESIDUALS)}")
        if self.init_translation not in INIT_TRANSLATIONS:
            raise ConfigurationError(f"init_translation must be one of {INIT_TRANSLATIONS}")
        if self.num_inits < 1 or self.max_iter < 0:
            raise ConfigurationError("num_inits must be >= 1 and max_iter >= 0")

    @property
    def init_angles(self) -> np.ndarray:
        return np.arange(self.num_inits) * (2.0 * math.pi / self.num_inits)


def _cells_of(grid) -> np.ndarray:
    if isinstance(grid, OccupancyGrid):
        return grid.cells
    return np.asarray(grid)


def grid_to_pointcloud(grid, cell_size: float = 0.005, origin=(0.0, 0.0)) -> np.ndarray:
    """Centers of the contact cells as an (N, 2) array in meters.

    ``grid`` is an :class:`OccupancyGrid` or a state-code array. ``origin`` is the
    position of the corner of cell (0, 0).
    """
    idx = np.argwhere(_cells_of(grid) == CONTACT)
    return np.asarray(origin, dtype=np.float64) + (idx + 0.5) * cell_size


@dataclass(frozen=True, eq=False)
class BoundaryModel:
    """A polygon boundary sampled uniformly along each edge.

    Nearest-sample queries are exact: each edge's samples sit at multiples of
    ``lengths / counts`` from its start, so the nearest one follows from the
    projection onto the edge.
    """

    starts: np.ndarray
    directions: np.ndarray
    lengths: np.ndarray
    counts: np.ndarray
    centroid: np.ndarray = field(repr=False)

    @classmethod
    def from_polygon(cls, poly: Polygon | np.ndarray, spacing: float = 0.001) -> "BoundaryModel":
        v = np.asarray(poly.vertices if isinstance(poly, Polygon) else poly, dtype=np.float64)
        d = np.roll(v, -1, axis=0) - v
        lengths = np.hypot(d[:, 0], d[:, 1])
        counts = np.maximum(1, np.ceil(lengths / spacing - 1e-9)).astype(np.int64)
        model = cls(v.copy(), d / lengths[:, None], lengths, counts, np.zeros(2))
        object.__setattr__(model, "centroid", model.points().mean(axis=0))
        return model

    def points(self) -> np.ndarray:
        """All boundary samples, each vertex once."""
        out = []
        for a, u, ln, n in zip(self.starts, self.directions, self.lengths, self.counts):
            k = np.arange(n)[:, None]
            out.append(a + k * (ln / n) * u)
        return np.concatenate(out)

    def nearest(self, pts) -> tuple[np.ndarray, np.ndarray]:
        """Nearest boundary sample and squared distance for each point."""
        return _nearest_on_edges(np.asarray(pts, dtype=np.float64), self.starts, self.directions,
                                 self.lengths, self.counts)


@dataclass(frozen=True)
class ICPAlignment:
    """Model pose in the cloud frame: cloud ~= R(rotation) model + translation."""

    rotation: float
    translation: np.ndarray
    residual: float
    history: np.ndarray = field(repr=False)
    iterations: int = 0

    @property
    def pose(self) -> Pose2D:
        return Pose2D(self.rotation, tuple(self.translation))


def initial_transforms(cloud, model: BoundaryModel, angles, init_translation: str = "centroid"):
    """Starting cloud-to-model transforms (theta, t) for each initial orientation.

    The cloud is rotated by ``-angle`` (the model is hypothesized at rotation
    ``angle``). ``centroid`` then moves the cloud centroid onto the model's
    boundary centroid; ``origin`` keeps the translation at zero, which suits
    clouds expressed in a frame centered on the object's nominal position;
    ``both`` uses each start twice.
    """
    angles = np.asarray(angles, dtype=np.float64)
    theta = -angles
    c, s = np.cos(theta), np.sin(theta)
    cc = np.asarray(cloud, dtype=np.float64).mean(axis=0)
    t_centroid = model.centroid - np.stack([c * cc[0] - s * cc[1], s * cc[0] + c * cc[1]], axis=1)
    t_origin = np.zeros_like(t_centroid)
    if init_translation == "centroid":
        return theta, t_centroid
    if init_translation == "origin":
        return theta, t_origin
    return np.concatenate([theta, theta]), np.concatenate([t_centroid, t_origin])


def _run(cloud, model: BoundaryModel, angles, max_iter, tol, residual="mean", init_translation="centroid"):
    cloud = np.asarray(cloud, dtype=np.float64)
    if cloud.ndim != 2 or cloud.shape[1] != 2 or len(cloud) == 0:
        raise DataError("ICP needs a non-empty (N, 2) point cloud")
    theta0, t0 = initial_transforms(cloud, model, angles, init_translation)
    return kernels.icp_batch(np.ascontiguousarray(cloud), model.starts, model.directions, model.lengths,
                             model.counts, theta0, t0, int(max_iter), float(tol), RESIDUALS[residual])


def icp_align(cloud, model: BoundaryModel | Polygon, init_angle: float = 0.0, max_iter: int = 100,
              tol: float = 1e-9, spacing: float = 0.001, residual: str = "mean",
              init_translation: str = "centroid") -> ICPAlignment:
    """Register ``cloud`` to ``model`` starting from rotation ``init_angle``.

    Correspondences are nearest boundary samples; each step is the closed-form
    least-squares rigid fit. The residual (mean correspondence distance by
    default) is recorded after every step; a step that would raise it is
    rejected and ends the run, so the history never increases. Iteration also
    stops once the improvement falls below ``tol`` or after ``max_iter`` steps.
    """
    if isinstance(model, Polygon):
        model = BoundaryModel.from_polygon(model, spacing)
    if init_translation == "both":
        raise ConfigurationError("icp_align runs a single start; use 'centroid' or 'origin'")
    resid, theta, tx, ty, iters, hist = _run(cloud, model, [init_angle], max_iter, tol, residual, init_translation)
    # the kernel solves model ~= R(theta) cloud + t; report its inverse
    c, s = math.cos(theta[0]), math.sin(theta[0])
    t = np.array([tx[0], ty[0]])
    inv_t = -np.array([c * t[0] + s * t[1], -s * t[0] + c * t[1]])
    h = hist[0]
    return ICPAlignment(float(-theta[0]) % (2 * math.pi), inv_t, float(resid[0]), h[~np.isnan(h)], int(iters[0]))


@dataclass(frozen=True)
class ICPResult:
    best_errors: np.ndarray
    matched: np.ndarray
    distribution: np.ndarray

    @property
    def prediction(self) -> Prediction:
        return Prediction.from_distribution(self.distribution)


def match_distribution(best_errors, threshold: float) -> tuple[np.ndarray, np.ndarray]:
    best_errors = np.asarray(best_errors, dtype=np.float64)
    matched = best_errors < threshold
    k = int(matched.sum())
    if k == 0:
        dist = np.full(len(best_errors), 1.0 / len(best_errors))
    else:
        dist = matched / k
    return matched, dist


class ICPDiscriminator:
    """ICP against every object model, with results cached per contact set."""

    def __init__(self, objects, config: ICPConfig = ICPConfig(), grid: GridSpec = GridSpec(),
                 confidence_threshold: float = 0.98):
        if not objects:
            raise ConfigurationError("ICP discriminator needs at least one object")
        self.config = config
        self.grid = grid
        self.confidence_threshold = confidence_threshold
        self.models = [m if isinstance(m, BoundaryModel) else BoundaryModel.from_polygon(m, config.spacing)
                       for m in objects]
        self.num_classes = len(self.models)
        self._cache: OrderedDict[bytes, ICPResult] = OrderedDict()
        self.cache_size = 256

    def best_errors(self, cloud) -> np.ndarray:
        angles = self.config.init_angles
        cfg = self.config
        return np.array([_run(cloud, m, angles, cfg.max_iter, cfg.tol, cfg.residual, cfg.init_translation)[0].min()
                         for m in self.models])

    def evaluate_cloud(self, cloud) -> ICPResult:
        cloud = np.asarray(cloud, dtype=np.float64).reshape(-1, 2)
        if len(cloud) == 0:
            n = self.num_classes
            return ICPResult(np.full(n, np.inf), np.zeros(n, dtype=bool), np.full(n, 1.0 / n))
        errs = self.best_errors(cloud)
        matched, dist = match_distribution(errs, self.config.match_threshold)
        return ICPResult(errs, matched, dist)

    def evaluate_grid(self, grid) -> ICPResult:
        cells = _cells_of(grid)
        key = np.packbits(cells == CONTACT).tobytes()
        hit = self._cache.get(key)
        if hit is None:
            hit = self.evaluate_cloud(grid_to_pointcloud(cells, self.grid.cell_size, self.grid.origin))
            self._cache[key] = hit
            if len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return hit

    def predict_grid(self, grid) -> Prediction:
        return self.evaluate_grid(grid).prediction

    def predict(self, image) -> Prediction:
        return self.predict_grid(image_to_codes(np.asarray(image)))

    def predict_proba(self, images) -> np.ndarray:
        return np.stack([self.evaluate_grid(image_to_codes(im)).distribution for im in np.asarray(images)])


def icp_discriminate(grid, objects, config: ICPConfig = ICPConfig(), grid_spec: GridSpec = GridSpec()) -> Prediction:
    return ICPDiscriminator(objects, config, grid_spec).predict_grid(grid)
