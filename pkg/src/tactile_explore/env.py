"""Tactile grid-world: a point finger probing a fixed polygon with binary contact.

The finger moves one cell per action. A reported collision leaves the finger
where it was; a reported collision-free reading moves it onto the target cell.
Sensor failures flip the reading before it is acted on.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .errors import ConfigurationError, StateError
from .geometry import GridSpec, Polygon, Pose2D, TruthGrid, rasterize_truth


class Action(IntEnum):
    UP = 0
    RIGHT = 1
    DOWN = 2
    LEFT = 3


# (dx, dy) per action; up is +y, right is +x
DISPLACEMENTS = ((0, 1), (1, 0), (0, -1), (-1, 0))
NUM_MOVES = 4


class ContactSignal(IntEnum):
    COLLISION = 0
    FREE = 1


ORIENTATION_MODES = ("continuous", "discrete")
START_POLICIES = ("boundary", "random_free")


@dataclass(frozen=True)
class EnvConfig:
    workspace_size: float = 0.30
    cell_size: float = 0.005
    sensor_failure_rate: float = 0.0
    translation_noise: float = 0.01
    max_actions: int = 2000
    orientation_mode: str = "continuous"
    num_orientations: int = 8
    start_policy: str = "boundary"

    def __post_init__(self):
        GridSpec(self.workspace_size, self.cell_size)  # validates divisibility
        if not 0.0 <= self.sensor_failure_rate <= 1.0:
            raise ConfigurationError(f"sensor_failure_rate must be in [0, 1], got {self.sensor_failure_rate}")
        if self.translation_noise < 0:
            raise ConfigurationError("translation_noise must be non-negative")
        if int(self.max_actions) != self.max_actions or self.max_actions < 1:
            raise ConfigurationError(f"max_actions must be an integer >= 1, got {self.max_actions}")
        if self.orientation_mode not in ORIENTATION_MODES:
            raise ConfigurationError(f"orientation_mode must be one of {ORIENTATION_MODES}")
        if self.num_orientations < 1:
            raise ConfigurationError("num_orientations must be >= 1")
        if self.start_policy not in START_POLICIES:
            raise ConfigurationError(f"start_policy must be one of {START_POLICIES}")

    @property
    def grid(self) -> GridSpec:
        return GridSpec(self.workspace_size, self.cell_size)


@dataclass
class EpisodeState:
    config: EnvConfig
    object_id: int
    pose: Pose2D
    truth: TruthGrid
    finger: tuple[int, int]
    rng: np.random.Generator = field(repr=False)
    steps: int = 0
    done: bool = False


@dataclass(frozen=True)
class StepResult:
    signal: ContactSignal
    finger: tuple[int, int]
    timed_out: bool
    # probed cell, or None when the action pointed out of the workspace
    target: tuple[int, int] | None


def apply_sensor_noise(true_signal: int, rate: float, rng: np.random.Generator) -> ContactSignal:
    """Flip a binary reading with probability ``rate``."""
    if rate <= 0.0:
        return ContactSignal(true_signal)
    if rate >= 1.0 or rng.random() < rate:
        return ContactSignal(1 - int(true_signal))
    return ContactSignal(true_signal)


def sample_pose(config: EnvConfig, rng: np.random.Generator) -> Pose2D:
    if config.orientation_mode == "continuous":
        rot = rng.random() * 2.0 * math.pi
    else:
        rot = int(rng.integers(config.num_orientations)) * 2.0 * math.pi / config.num_orientations
    t = config.translation_noise
    if t > 0:
        tx, ty = rng.uniform(-t, t, size=2)
    else:
        tx = ty = 0.0
    return Pose2D(rot, (float(tx), float(ty)))


def boundary_cells(n: int) -> np.ndarray:
    """Cells of the outer ring of an n x n grid, in a fixed order."""
    cells = [(i, 0) for i in range(n)]
    cells += [(n - 1, j) for j in range(1, n)]
    cells += [(i, n - 1) for i in range(n - 2, -1, -1)]
    cells += [(0, j) for j in range(n - 2, 0, -1)]
    return np.array(cells, dtype=np.int64)


def _pick_start(config: EnvConfig, truth: TruthGrid, rng: np.random.Generator) -> tuple[int, int]:
    occ = truth.occupied
    n = occ.shape[0]
    if config.start_policy == "boundary":
        ring = boundary_cells(n)
        free = ring[~occ[ring[:, 0], ring[:, 1]]]
    else:
        free = np.argwhere(~occ)
    if len(free) == 0:
        raise ConfigurationError(f"start policy {config.start_policy!r} found no collision-free cell")
    ix, iy = free[int(rng.integers(len(free)))]
    return (int(ix), int(iy))


def reset(config: EnvConfig, objects: list[Polygon], object_id: int, seed) -> EpisodeState:
    """Start an episode on ``objects[object_id]`` with a random pose and start cell."""
    if not 0 <= object_id < len(objects):
        raise LookupError(f"unknown object id {object_id} (have {len(objects)} objects)")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    pose = sample_pose(config, rng)
    truth = rasterize_truth(objects[object_id], pose, config.grid)
    finger = _pick_start(config, truth, rng)
    return EpisodeState(config=config, object_id=object_id, pose=pose, truth=truth, finger=finger, rng=rng)


def step(state: EpisodeState, action: int) -> StepResult:
    """Advance ``state`` by one move. Mutates ``state``."""
    cfg = state.config
    if state.done:
        raise StateError("step called on a finished episode")
    if state.steps >= cfg.max_actions:
        raise StateError("action budget exhausted")
    dx, dy = DISPLACEMENTS[int(action)]
    fx, fy = state.finger
    tx, ty = fx + dx, fy + dy
    n = state.truth.occupied.shape[0]
    if 0 <= tx < n and 0 <= ty < n:
        true_signal = ContactSignal.COLLISION if state.truth.occupied[tx, ty] else ContactSignal.FREE
        signal = apply_sensor_noise(true_signal, cfg.sensor_failure_rate, state.rng)
        if signal == ContactSignal.FREE:
            state.finger = (tx, ty)
        target = (tx, ty)
    else:
        # the workspace edge is not an object: no contact, no motion
        signal = ContactSignal.FREE
        target = None
    state.steps += 1
    timed_out = state.steps >= cfg.max_actions
    if timed_out:
        state.done = True
    return StepResult(signal=signal, finger=state.finger, timed_out=timed_out, target=target)


class TactileEnv:
    """Object-oriented wrapper around :func:`reset` / :func:`step`."""

    def __init__(self, config: EnvConfig, objects: list[Polygon]):
        self.config = config
        self.objects = list(objects)
        self.state: EpisodeState | None = None

    @property
    def num_objects(self) -> int:
        return len(self.objects)

    def reset(self, object_id: int, seed) -> EpisodeState:
        self.state = reset(self.config, self.objects, object_id, seed)
        return self.state

    def step(self, action: int) -> StepResult:
        if self.state is None:
            raise StateError("reset must be called before step")
        return step(self.state, action)
