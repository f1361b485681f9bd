"""Seeded evaluation trials, metric aggregation, sweeps and CSV output."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import multiprocessing as mp
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .discriminator import Prediction, should_terminate
from .encoder import OccupancyGrid
from .env import NUM_MOVES, EnvConfig, reset, step
from .errors import InvalidParameterError
from .explorer import ActorCritic, act

CSV_FORMAT_VERSION = 1
TRIAL_COLUMNS = ("trial", "object_id", "rotation_rad", "tx_m", "ty_m", "seed", "actions", "explored",
                 "predicted", "correct", "termination")
METRIC_COLUMNS = ("method", "noise_rate", "threshold", "trials", "success_rate", "actions_mean", "actions_std",
                  "explored_mean", "explored_std", "ear_mean", "ear_std")


# policies backed by a learned actor ---------------------------------------------


class _PPOController:
    def __init__(self, policy: ActorCritic, rng, greedy):
        self.policy, self.rng, self.greedy = policy, rng, greedy

    def act(self, grid: OccupancyGrid, last_signal=None) -> int:
        return act(self.policy, grid.view_for_explorer(self.policy.dtype), self.rng, self.greedy)[0]

    def timeout_prediction(self, grid: OccupancyGrid) -> int:
        """For a 14-way head: the most probable prediction action, as an object id."""
        logits, _, _ = self.policy.forward(grid.view_for_explorer(self.policy.dtype)[None])
        return int(np.argmax(logits[0, NUM_MOVES:]))


class PPOPolicy:
    """Adapter giving a trained actor-critic the per-episode controller interface."""

    name = "ppo"

    def __init__(self, policy: ActorCritic, greedy: bool = False, name: str | None = None):
        self.policy = policy
        self.greedy = greedy
        if name:
            self.name = name

    @property
    def predicts(self) -> bool:
        return self.policy.num_actions > NUM_MOVES

    def new_episode(self, rng):
        return _PPOController(self.policy, rng, self.greedy)


# trials -------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    object_id: int
    rotation_rad: float
    tx_m: float
    ty_m: float
    seed: int
    actions: int
    explored: int
    predicted: int
    correct: bool
    termination: str

    def __post_init__(self):
        if self.correct != (self.predicted == self.object_id):
            raise ValueError("correct flag disagrees with the prediction")

    @property
    def ear(self) -> float:
        return self.explored / self.actions if self.actions else float("nan")


def trial_seed(master_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([int(master_seed), int(index)]).generate_state(1)[0])


def trial_schedule(master_seed: int, n_trials: int, num_objects: int) -> list[tuple[int, int, int]]:
    """(trial index, object id, seed) triples: objects round-robin, seeds from (master seed, index)."""
    if n_trials < 1:
        raise InvalidParameterError("n_trials must be >= 1")
    return [(i, i % num_objects, trial_seed(master_seed, i)) for i in range(n_trials)]


def _threshold_of(discriminator, threshold):
    if threshold is not None:
        return threshold
    t = getattr(discriminator, "confidence_threshold", None)
    if t is None:
        cfg = getattr(discriminator, "config", None)
        t = getattr(cfg, "confidence_threshold", 0.98)
    return t


def run_trial(policy, discriminator, env_config: EnvConfig, objects, object_id: int, seed: int,
              trial: int = 0, threshold: float | None = None, return_grid: bool = False):
    """One episode: act, step, update the grid, ask the discriminator, stop when confident or out of actions.

    The discriminator is consulted before the first action as well, so a
    discriminator that is already confident ends the trial with zero actions.
    ``discriminator`` may be None for a policy that predicts through its own
    actions (a 14-way head). With ``return_grid`` the final occupancy grid is
    returned alongside the record.
    """
    env_ss, pol_ss = np.random.SeedSequence(seed).spawn(2)
    state = reset(env_config, objects, object_id, np.random.default_rng(env_ss))
    grid = OccupancyGrid(env_config.grid.shape, state.finger)
    ctrl = policy.new_episode(np.random.default_rng(pol_ss))
    thr = _threshold_of(discriminator, threshold)
    last_signal = None
    predicted = None
    termination = "timeout"
    pred: Prediction | None = discriminator.predict_grid(grid) if discriminator is not None else None
    while True:
        if pred is not None and should_terminate(pred, thr):
            termination = "confidence"
            predicted = pred.label
            break
        if state.done:
            break
        a = int(ctrl.act(grid, last_signal))
        if a >= NUM_MOVES:
            termination = "prediction"
            predicted = a - NUM_MOVES
            break
        res = step(state, a)
        if res.target is not None:
            grid.update(res.target, res.signal)
        grid.move_finger(res.finger)
        last_signal = res.signal
        if discriminator is not None:
            pred = discriminator.predict_grid(grid)
    if predicted is None:
        predicted = pred.label if pred is not None else ctrl.timeout_prediction(grid)
    rec = TrialRecord(trial=trial, object_id=object_id, rotation_rad=state.pose.rotation,
                      tx_m=state.pose.translation[0], ty_m=state.pose.translation[1], seed=int(seed),
                      actions=state.steps, explored=grid.explored_count, predicted=int(predicted),
                      correct=int(predicted) == object_id, termination=termination)
    return (rec, grid) if return_grid else rec


# aggregation --------------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    """Aggregates over trials; standard deviations are population (ddof=0)."""

    trials: int
    success_rate: float
    actions_mean: float
    actions_std: float
    explored_mean: float
    explored_std: float
    ear_mean: float
    ear_std: float


def aggregate(records) -> Metrics:
    records = list(records)
    if not records:
        raise InvalidParameterError("cannot aggregate zero trials")
    acts = np.array([r.actions for r in records], dtype=np.float64)
    expl = np.array([r.explored for r in records], dtype=np.float64)
    ear = np.array([r.ear for r in records if r.actions > 0], dtype=np.float64)
    succ = float(np.mean([r.correct for r in records]))
    ear_mean = float(ear.mean()) if ear.size else float("nan")
    ear_std = float(ear.std()) if ear.size else float("nan")
    return Metrics(len(records), succ, float(acts.mean()), float(acts.std()), float(expl.mean()),
                   float(expl.std()), ear_mean, ear_std)


# evaluation ---------------------------------------------------------------------

_WORKER_ARGS = None


def _worker_trial(item):
    policy, disc, env_config, objects, threshold = _WORKER_ARGS
    i, obj, seed = item
    return run_trial(policy, disc, env_config, objects, obj, seed, trial=i, threshold=threshold)


def run_trials(policy, discriminator, env_config: EnvConfig, objects, n_trials: int, seed: int,
               threshold: float | None = None, workers: int = 1) -> list[TrialRecord]:
    """Run the deterministic trial schedule, optionally across forked worker processes."""
    global _WORKER_ARGS
    schedule = trial_schedule(seed, n_trials, len(objects))
    if workers <= 1 or "fork" not in mp.get_all_start_methods():
        return [run_trial(policy, discriminator, env_config, objects, obj, s, trial=i, threshold=threshold)
                for i, obj, s in schedule]
    _WORKER_ARGS = (policy, discriminator, env_config, objects, threshold)
    try:
        with mp.get_context("fork").Pool(workers) as pool:
            return pool.map(_worker_trial, schedule, chunksize=max(1, n_trials // (4 * workers)))
    finally:
        _WORKER_ARGS = None


def evaluate(policy, discriminator, env_config: EnvConfig, objects, n_trials: int, seed: int,
             threshold: float | None = None, workers: int = 1) -> tuple[Metrics, list[TrialRecord]]:
    records = run_trials(policy, discriminator, env_config, objects, n_trials, seed, threshold, workers)
    return aggregate(records), records


def noise_sweep(policy, discriminator, env_config: EnvConfig, objects, rates, n_trials: int, seed: int,
                threshold: float | None = None, workers: int = 1) -> list[tuple[float, Metrics]]:
    """Evaluate a frozen policy/discriminator pair at each sensor failure rate, reusing the same seeds."""
    out = []
    for rate in rates:
        if not 0.0 <= rate <= 1.0:
            raise InvalidParameterError(f"noise rate {rate} outside [0, 1]")
        cfg = dataclasses.replace(env_config, sensor_failure_rate=float(rate))
        m, _ = evaluate(policy, discriminator, cfg, objects, n_trials, seed, threshold, workers)
        out.append((float(rate), m))
    return out


def threshold_sweep(thresholds, train_fn, eval_fn) -> list[tuple[float, Metrics]]:
    """For each threshold, co-train with ``train_fn(threshold)`` and score with ``eval_fn(trained, threshold)``."""
    out = []
    for t in thresholds:
        if not 0.0 < t <= 1.0:
            raise InvalidParameterError(f"threshold {t} outside (0, 1]")
        trained = train_fn(t)
        out.append((float(t), eval_fn(trained, t)))
    return out


# CSV ----------------------------------------------------------------------------


def config_hash(config) -> str:
    """SHA-256 of the canonical JSON form of a (nested) config mapping or dataclass."""
    if dataclasses.is_dataclass(config):
        config = dataclasses.asdict(config)
    blob = json.dumps(config, sort_keys=True, default=str, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


class CSVWriter:
    """Append-only CSV whose every row goes out in a single ``write`` on an O_APPEND descriptor."""

    def __init__(self, path, columns, config_digest: str, extra: str = ""):
        self.path = Path(path)
        self.columns = tuple(columns)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        header = f"# format_version={CSV_FORMAT_VERSION} config_sha256={config_digest} std=population{extra}\n"
        header += ",".join(self.columns) + "\n"
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(header)
        os.replace(tmp, self.path)
        self._fd = os.open(self.path, os.O_WRONLY | os.O_APPEND)

    def write_row(self, values) -> None:
        if isinstance(values, dict):
            values = [values[c] for c in self.columns]
        if len(values) != len(self.columns):
            raise ValueError(f"expected {len(self.columns)} values, got {len(values)}")
        os.write(self._fd, (",".join(_fmt(v) for v in values) + "\n").encode())

    def close(self) -> None:
        if self._fd is not None:
            os.fsync(self._fd)
            os.close(self._fd)
            self._fd = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def trial_row(r: TrialRecord) -> list:
    return [getattr(r, c) for c in TRIAL_COLUMNS]


def metrics_row(method: str, noise_rate: float, threshold: float, m: Metrics) -> list:
    return [method, float(noise_rate), float(threshold), m.trials, m.success_rate, m.actions_mean, m.actions_std,
            m.explored_mean, m.explored_std, m.ear_mean, m.ear_std]


def write_trials_csv(path, records, config_digest: str) -> None:
    with CSVWriter(path, TRIAL_COLUMNS, config_digest) as w:
        for r in records:
            w.write_row(trial_row(r))


def write_metrics_csv(path, rows, config_digest: str) -> None:
    with CSVWriter(path, METRIC_COLUMNS, config_digest) as w:
        for row in rows:
            w.write_row(row)


def read_csv(path) -> tuple[str, list[dict]]:
    """Return (header comment, rows as dicts of strings)."""
    lines = Path(path).read_text().splitlines()
    comment = lines[0] if lines and lines[0].startswith("#") else ""
    body = lines[1:] if comment else lines
    cols = body[0].split(",")
    return comment, [dict(zip(cols, ln.split(","))) for ln in body[1:] if ln]


def records_from_csv(path) -> list[TrialRecord]:
    _, rows = read_csv(path)
    out = []
    for r in rows:
        out.append(TrialRecord(trial=int(r["trial"]), object_id=int(r["object_id"]),
                               rotation_rad=float(r["rotation_rad"]), tx_m=float(r["tx_m"]), ty_m=float(r["ty_m"]),
                               seed=int(r["seed"]), actions=int(r["actions"]), explored=int(r["explored"]),
                               predicted=int(r["predicted"]), correct=r["correct"] == "1",
                               termination=r["termination"]))
    return out
