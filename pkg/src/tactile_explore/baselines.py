"""Non-learned exploration policies.

Every policy hands out a fresh per-episode controller from
``new_episode(rng)``; the controller's ``act(grid, last_signal)`` returns the
next action index.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .encoder import CONTACT, UNEXPLORED, OccupancyGrid
from .env import DISPLACEMENTS, NUM_MOVES, Action, ContactSignal
from .nn import entropy


def _target(finger, action):
    dx, dy = DISPLACEMENTS[action]
    return finger[0] + dx, finger[1] + dy


def unexplored_neighbors(grid: OccupancyGrid, finger) -> list[int]:
    """Actions whose target cell is in bounds and still unexplored, in action order."""
    out = []
    for a in range(NUM_MOVES):
        tx, ty = _target(finger, a)
        if grid.in_bounds(tx, ty) and grid.cells[tx, ty] == UNEXPLORED:
            out.append(a)
    return out


def random_walk_action(rng: np.random.Generator) -> int:
    return int(rng.integers(NUM_MOVES))


def not_go_back_action(grid: OccupancyGrid, finger, rng: np.random.Generator) -> int:
    """Uniform over moves into unexplored cells; uniform over all moves when boxed in."""
    cands = unexplored_neighbors(grid, finger)
    if not cands:
        return random_walk_action(rng)
    return cands[int(rng.integers(len(cands)))]


ProbaFn = Callable[[np.ndarray], np.ndarray]


def info_gain_scores(grid: OccupancyGrid, finger, predict_proba: ProbaFn) -> dict[int, float]:
    """Expected entropy reduction per candidate move, with contact and free outcomes equally likely.

    ``predict_proba`` maps a stack of discriminator-view images to class
    distributions. All hypothetical grids are scored in one batch.
    """
    cands = unexplored_neighbors(grid, finger)
    if not cands:
        return {}
    base = grid.view_for_discriminator()
    images = [base]
    for a in cands:
        tx, ty = _target(finger, a)
        contact = base.copy()
        contact[tx, ty] = 1.0
        free = base.copy()
        free[tx, ty] = 0.0
        images += [contact, free]
    probs = predict_proba(np.stack(images))
    h = entropy(probs, axis=1)
    return {a: float(h[0] - (0.5 * h[1 + 2 * i] + 0.5 * h[2 + 2 * i])) for i, a in enumerate(cands)}


def info_gain_action(grid: OccupancyGrid, finger, predict_proba: ProbaFn, rng: np.random.Generator,
                     return_scores: bool = False):
    scores = info_gain_scores(grid, finger, predict_proba)
    if not scores:
        action = random_walk_action(rng)
    else:
        best = max(scores.values())
        ties = [a for a, s in scores.items() if s == best]
        action = ties[int(rng.integers(len(ties)))] if len(ties) > 1 else ties[0]
    return (action, scores) if return_scores else action


def turn_left(h: int) -> int:
    return (h + 3) % 4


def turn_right(h: int) -> int:
    return (h + 1) % 4


def reverse(h: int) -> int:
    return (h + 2) % 4


class EdgeFollower:
    """Per-episode state of the contour-following heuristic.

    Before the first contact the finger walks to the workspace's middle row and
    sweeps along it toward the center, wrapping row by row at the walls. After
    the first contact it follows the contour keeping the object on its left:
    from each cell it tries left, straight, right, then back relative to its
    heading, skipping moves already blocked from that cell.
    """

    def __init__(self, grid_shape):
        self.n = grid_shape[0]
        self.center = self.n // 2
        self.phase = "approach"
        self.heading: int | None = None
        self.blocked: set[int] = set()
        self.sweep_dir: int | None = None
        self._row_step = False
        self.last_action: int | None = None
        self.last_cell = None
        self.first_contact = None

    # outcome bookkeeping ---------------------------------------------------

    def _observe(self, finger, last_signal) -> None:
        if self.last_action is None:
            return
        a = self.last_action
        moved = tuple(finger) != tuple(self.last_cell)
        if moved:
            if self.phase == "follow":
                self.heading = a
                self.blocked = set()
            return
        if last_signal == ContactSignal.COLLISION and self.phase == "approach":
            self.phase = "follow"
            self.heading = turn_right(a)
            self.blocked = {a}
            self.first_contact = (tuple(finger), self.heading)
        elif self.phase == "follow":
            self.blocked.add(a)
        elif self.phase == "approach" and a == self.sweep_dir:
            # swept into the workspace wall: change row and reverse
            self.sweep_dir = reverse(a)
            self._row_step = True

    # action choice ---------------------------------------------------------

    def _approach(self, finger) -> int:
        x, y = finger
        if self.sweep_dir is None:
            if y != self.center:
                return int(Action.UP if y < self.center else Action.DOWN)
            self.sweep_dir = int(Action.RIGHT if x <= self.center else Action.LEFT)
        if self._row_step:
            self._row_step = False
            return int(Action.UP if y < self.n - 1 else Action.DOWN)
        return self.sweep_dir

    def _follow(self) -> int:
        h = self.heading
        for a in (turn_left(h), h, turn_right(h), reverse(h)):
            if a not in self.blocked:
                return a
        # boxed in from this cell: retry, but never the attempt that just failed
        self.blocked = set()
        order = (turn_left(h), h, turn_right(h), reverse(h))
        return next(a for a in order if a != self.last_action)

    def act(self, grid: OccupancyGrid, last_signal=None, finger=None) -> int:
        finger = grid.finger if finger is None else tuple(finger)
        self._observe(finger, last_signal)
        a = self._approach(finger) if self.phase == "approach" else self._follow()
        self.last_action = a
        self.last_cell = finger
        return a


def edge_follower_action(state: EdgeFollower, grid: OccupancyGrid, finger, last_signal) -> int:
    return state.act(grid, last_signal, finger)


# policy objects -------------------------------------------------------------


class _Controller:
    def __init__(self, fn):
        self._fn = fn

    def act(self, grid: OccupancyGrid, last_signal=None) -> int:
        return self._fn(grid, last_signal)


class RandomWalkPolicy:
    name = "random_walk"

    def new_episode(self, rng):
        return _Controller(lambda grid, sig: random_walk_action(rng))


class NotGoBackPolicy:
    name = "not_go_back"

    def new_episode(self, rng):
        return _Controller(lambda grid, sig: not_go_back_action(grid, grid.finger, rng))


class InfoGainPolicy:
    name = "info_gain"

    def __init__(self, discriminator):
        self.discriminator = discriminator

    def new_episode(self, rng):
        proba = self.discriminator.predict_proba
        return _Controller(lambda grid, sig: info_gain_action(grid, grid.finger, proba, rng))


class EdgeFollowerPolicy:
    name = "edge_follower"

    def __init__(self, grid_shape):
        self.grid_shape = tuple(grid_shape)

    def new_episode(self, rng):
        return EdgeFollower(self.grid_shape)


def contact_cells(grid: OccupancyGrid) -> set[tuple[int, int]]:
    return {(int(i), int(j)) for i, j in np.argwhere(grid.cells == CONTACT)}
