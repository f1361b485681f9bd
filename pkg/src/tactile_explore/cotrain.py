"""Alternating discriminator epochs and explorer steps over a shared labeled buffer.

Modes:

``tandem``
    PPO explorer rewarded by the CNN discriminator's confident termination.
``random_walk`` / ``not_go_back`` / ``info_gain`` / ``edge_follower``
    A fixed heuristic explorer feeds the buffer; only the CNN discriminator learns.
``all_in_one``
    A single 14-action PPO policy that moves or predicts; no discriminator.
``ppo_icp``
    PPO explorer rewarded by the ICP discriminator, which does not learn.
"""
from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import EdgeFollowerPolicy, InfoGainPolicy, NotGoBackPolicy, RandomWalkPolicy
from .discriminator import Discriminator, DiscriminatorConfig
from .encoder import MARKER_VALUE, STATE_VALUES, OccupancyGrid
from .env import NUM_MOVES, EnvConfig, reset, step
from .errors import ConfigurationError, DataError, NumericError
from .explorer import Explorer, PPOConfig, RolloutBatch, act_batch, compute_gae, terminal_reward
from .icp import ICPConfig, ICPDiscriminator
from .nn import save_checkpoint

HEURISTIC_MODES = ("random_walk", "not_go_back", "info_gain", "edge_follower")
MODES = ("tandem", "all_in_one", "ppo_icp") + HEURISTIC_MODES
LOG_COLUMNS = ("iteration", "total_steps", "success_rate_100", "mean_actions_100", "disc_loss", "buffer_size",
               "mean_reward_100", "policy_entropy")


class DataBuffer:
    """Fixed-capacity ring of (discriminator-view grid, label) pairs stored as uint8 state codes.

    Logical index 0 is the oldest retained sample.
    """

    def __init__(self, capacity: int, grid_shape):
        if capacity < 1:
            raise ConfigurationError("buffer capacity must be >= 1")
        self.capacity = int(capacity)
        self.grid_shape = tuple(grid_shape)
        self._codes = np.zeros((self.capacity,) + self.grid_shape, dtype=np.uint8)
        self._labels = np.zeros(self.capacity, dtype=np.int64)
        self.insertions = 0

    def __len__(self) -> int:
        return min(self.insertions, self.capacity)

    def _physical(self, idx):
        start = self.insertions % self.capacity if self.insertions > self.capacity else 0
        return (start + np.asarray(idx)) % self.capacity

    def push_codes(self, codes, label: int) -> None:
        if label < 0:
            raise ValueError("labels must be non-negative")
        slot = self.insertions % self.capacity
        self._codes[slot] = codes
        self._labels[slot] = label
        self.insertions += 1

    def push(self, image, label: int) -> None:
        from .encoder import image_to_codes
        self.push_codes(image_to_codes(image), label)

    def codes(self, idx) -> np.ndarray:
        return self._codes[self._physical(idx)]

    def labels(self, idx=None) -> np.ndarray:
        if idx is None:
            idx = np.arange(len(self))
        return self._labels[self._physical(idx)]

    def batch(self, idx, dtype=np.float32):
        p = self._physical(idx)
        return STATE_VALUES.astype(dtype)[self._codes[p]], self._labels[p]

    def summary(self) -> dict:
        lab = self.labels()
        counts = np.bincount(lab) if len(lab) else np.zeros(0, dtype=np.int64)
        return {"capacity": self.capacity, "size": len(self), "insertions": self.insertions,
                "label_counts": counts.tolist()}


def push(buffer: DataBuffer, image, label: int) -> DataBuffer:
    buffer.push(image, label)
    return buffer


@dataclass(frozen=True)
class CotrainConfig:
    max_steps: int = 300_000
    disc_epochs: int = 15
    explorer_steps: int = 200_000
    buffer_capacity: int = 1_000_000
    initial_episodes: int = 100
    sensor_failure_rate: float = 0.005
    confidence_threshold: float = 0.98
    mode: str = "tandem"

    def __post_init__(self):
        if self.max_steps < 0 or self.disc_epochs < 0 or self.explorer_steps < 0 or self.initial_episodes < 0:
            raise ConfigurationError("step, epoch and episode counts must be non-negative")
        if self.buffer_capacity < 1:
            raise ConfigurationError("buffer_capacity must be >= 1")
        if not 0.0 < self.confidence_threshold <= 1.0:
            raise ConfigurationError("confidence_threshold must be in (0, 1]")
        if not 0.0 <= self.sensor_failure_rate <= 1.0:
            raise ConfigurationError("sensor_failure_rate must be in [0, 1]")
        if self.mode == "ppo":
            object.__setattr__(self, "mode", "tandem")
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")

    @property
    def learns_discriminator(self) -> bool:
        return self.mode in ("tandem",) + HEURISTIC_MODES

    @property
    def learns_explorer(self) -> bool:
        return self.mode in ("tandem", "all_in_one", "ppo_icp")


@dataclass
class EpisodeOutcome:
    object_id: int
    length: int
    predicted: int
    terminated: bool
    reward: float

    @property
    def correct(self) -> bool:
        return self.predicted == self.object_id


@dataclass
class CotrainResult:
    discriminator: object
    explorer: Explorer | None
    log: list[dict]
    buffer: DataBuffer | None
    episodes: list[EpisodeOutcome] = field(repr=False, default_factory=list)


class _Slot:
    __slots__ = ("state", "grid", "object_id", "ctrl", "last_signal")


class CoTrainer:
    """Single-writer training loop state: environments, buffer, networks and statistics."""

    def __init__(self, config: CotrainConfig, env_config: EnvConfig, objects, seed: int = 0,
                 disc_config: DiscriminatorConfig = DiscriminatorConfig(), ppo_config: PPOConfig = PPOConfig(),
                 icp_config: ICPConfig = ICPConfig(), log_path=None, checkpoint_dir=None):
        self.config = config
        self.env_config = dataclasses.replace(env_config, sensor_failure_rate=config.sensor_failure_rate)
        self.objects = list(objects)
        self.num_objects = len(self.objects)
        self.grid_shape = self.env_config.grid.shape
        self.ppo_config = ppo_config
        self.threshold = config.confidence_threshold
        ss = np.random.SeedSequence(seed)
        s_disc, s_expl, s_train, s_act, s_env = ss.spawn(5)
        self.train_rng = np.random.default_rng(s_train)
        self.act_rng = np.random.default_rng(s_act)
        self.env_rng = np.random.default_rng(s_env)
        self.mode = config.mode
        self.disc = None
        if config.learns_discriminator:
            disc_config = dataclasses.replace(disc_config, confidence_threshold=self.threshold)
            self.disc = Discriminator(self.grid_shape, self.num_objects, disc_config, seed=np.random.default_rng(s_disc))
        elif self.mode == "ppo_icp":
            self.disc = ICPDiscriminator(self.objects, icp_config, self.env_config.grid, self.threshold)
        self.explorer = None
        if config.learns_explorer:
            n_act = NUM_MOVES + self.num_objects if self.mode == "all_in_one" else NUM_MOVES
            self.explorer = Explorer(self.grid_shape, n_act, ppo_config, seed=np.random.default_rng(s_expl))
        self.heuristic = {
            "random_walk": lambda: RandomWalkPolicy(),
            "not_go_back": lambda: NotGoBackPolicy(),
            "info_gain": lambda: InfoGainPolicy(self.disc),
            "edge_follower": lambda: EdgeFollowerPolicy(self.grid_shape),
        }.get(self.mode, lambda: None)()
        self.buffer = DataBuffer(config.buffer_capacity, self.grid_shape) if config.learns_discriminator else None
        self.reward_mode = {"all_in_one": "all_in_one", "ppo_icp": "ppo_icp"}.get(self.mode, "standard")
        self.num_envs = ppo_config.num_envs
        self.recent: deque[EpisodeOutcome] = deque(maxlen=100)
        self.episodes: list[EpisodeOutcome] = []
        self.total_steps = 0
        self.iteration = 0
        self.log: list[dict] = []
        self.log_path = Path(log_path) if log_path else None
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir else None
        self._last_entropy = float("nan")
        self.slots: list[_Slot] = []

    # episodes -----------------------------------------------------------------

    def _new_slot(self) -> _Slot:
        sl = _Slot()
        sl.object_id = int(self.env_rng.integers(self.num_objects))
        child = np.random.default_rng(self.env_rng.integers(2**63))
        sl.state = reset(self.env_config, self.objects, sl.object_id, child)
        sl.grid = OccupancyGrid(self.grid_shape, sl.state.finger)
        sl.ctrl = self.heuristic.new_episode(np.random.default_rng(self.env_rng.integers(2**63))) \
            if self.heuristic is not None else None
        sl.last_signal = None
        return sl

    def _explorer_images(self, slots) -> np.ndarray:
        img = STATE_VALUES.astype(np.float32)[np.stack([s.grid.cells for s in slots])]
        for k, s in enumerate(slots):
            img[(k,) + s.grid.finger] = MARKER_VALUE
        return img

    def _predictions(self, slots, idx):
        """(label, confidence) for the listed slots under the current discriminator."""
        if not idx:
            return {}
        if isinstance(self.disc, Discriminator):
            imgs = STATE_VALUES.astype(np.float32)[np.stack([slots[k].grid.cells for k in idx])]
            probs = self.disc.predict_proba(imgs, check=False)
            return {k: (int(np.argmax(p)), float(np.max(p))) for k, p in zip(idx, probs)}
        out = {}
        for k in idx:
            pred = self.disc.predict_grid(slots[k].grid)
            out[k] = (pred.label, pred.confidence)
        return out

    def _run_steps(self, num_steps: int, learn: bool, push: bool, max_episodes: int | None = None) -> int:
        """Advance all environments in lockstep; return the number of actions taken.

        With ``learn`` the explorer is updated by PPO after each rollout of
        ``horizon`` actions. With ``max_episodes`` collection stops once that
        many episodes have finished and no new episodes are started.
        """
        K = self.num_envs
        use_ppo = self.explorer is not None
        if max_episodes is not None:
            K = min(K, max_episodes)
        slots = [self._new_slot() for _ in range(K)] if not self.slots or max_episodes is not None else self.slots
        started = len(slots)
        finished = 0
        active = [True] * len(slots)
        taken = 0
        T = max(1, self.ppo_config.horizon // self.num_envs)
        while (max_episodes is None and taken < num_steps) or (max_episodes is not None and any(active)):
            rollout = [] if (learn and use_ppo) else None
            for _ in range(T):
                if max_episodes is None and taken >= num_steps:
                    break
                if max_episodes is not None and not any(active):
                    break
                live = [k for k in range(len(slots)) if active[k]]
                if use_ppo:
                    obs_img = self._explorer_images([slots[k] for k in live])
                    actions, logp, values = act_batch(self.explorer.policy, obs_img, self.act_rng)
                else:
                    actions = np.array([slots[k].ctrl.act(slots[k].grid, slots[k].last_signal) for k in live])
                predicted = {}
                stepped = []
                for j, k in enumerate(live):
                    sl = slots[k]
                    a = int(actions[j])
                    if a >= NUM_MOVES:
                        predicted[k] = a - NUM_MOVES
                        continue
                    res = step(sl.state, a)
                    if res.target is not None:
                        sl.grid.update(res.target, res.signal)
                    sl.grid.move_finger(res.finger)
                    sl.last_signal = res.signal
                    if push and self.buffer is not None:
                        self.buffer.push_codes(sl.grid.cells, sl.object_id)
                    stepped.append(k)
                taken += len(live)
                preds = self._predictions(slots, stepped) if self.disc is not None else {}
                rewards = np.zeros(len(live))
                dones = np.zeros(len(live), dtype=bool)
                for j, k in enumerate(live):
                    sl = slots[k]
                    if k in predicted:
                        terminated, label = True, predicted[k]
                    else:
                        label, conf = preds.get(k, (None, 0.0))
                        terminated = self.disc is not None and conf > self.threshold
                        if not terminated and not sl.state.done:
                            continue
                        if label is None:  # all-in-one timeout: best prediction action
                            label = self._aio_timeout_label(sl)
                    correct = label == sl.object_id
                    r = terminal_reward(terminated, correct, self.reward_mode)
                    rewards[j], dones[j] = r, True
                    out = EpisodeOutcome(sl.object_id, sl.state.steps + (1 if k in predicted else 0),
                                         int(label), terminated, r)
                    self.recent.append(out)
                    self.episodes.append(out)
                    finished += 1
                    if max_episodes is None or started < max_episodes:
                        slots[k] = self._new_slot()
                        started += 1
                    else:
                        active[k] = False
                if rollout is not None:
                    rollout.append((live, obs_img, actions, logp, values, rewards, dones))
            if rollout:
                self._ppo_update(rollout, slots, active)
        if max_episodes is None:
            self.slots = slots
        return taken

    def _aio_timeout_label(self, sl) -> int:
        logits, _, _ = self.explorer.policy.forward(self._explorer_images([sl]))
        return int(np.argmax(logits[0, NUM_MOVES:]))

    def _ppo_update(self, rollout, slots, active):
        K = len(slots)
        T = len(rollout)
        # every step in a rollout covers the same live set when episodes restart in place
        live = rollout[0][0]
        if any(r[0] != live for r in rollout):
            raise RuntimeError("live environment set changed inside a rollout")
        obs = np.stack([r[1] for r in rollout])          # (T, L, n, n)
        acts = np.stack([r[2] for r in rollout])
        logp = np.stack([r[3] for r in rollout])
        vals = np.stack([r[4] for r in rollout])
        rews = np.stack([r[5] for r in rollout])
        dones = np.stack([r[6] for r in rollout])
        last_img = self._explorer_images([slots[k] for k in live])
        _, last_v, _ = self.explorer.policy.forward(last_img)
        adv = np.zeros_like(rews)
        ret = np.zeros_like(rews)
        for j in range(len(live)):
            adv[:, j], ret[:, j] = compute_gae(rews[:, j], vals[:, j], dones[:, j], self.ppo_config.gamma,
                                               self.ppo_config.lam, last_value=float(last_v[j]))
        n = T * len(live)
        batch = RolloutBatch(obs.reshape((n,) + obs.shape[2:]), acts.reshape(n), logp.reshape(n),
                             adv.reshape(n), ret.reshape(n), vals.reshape(n))
        stats = self.explorer.update(batch, self.train_rng)
        self._last_entropy = stats.entropy

    # phases -------------------------------------------------------------------

    def collect_initial_buffer(self) -> DataBuffer | None:
        """Run the configured number of episodes with the untrained explorer, pushing every post-step grid."""
        if self.config.initial_episodes > 0:
            self._run_steps(0, learn=False, push=True, max_episodes=self.config.initial_episodes)
            # initial collection is not part of the training statistics
            self.recent.clear()
            self.episodes.clear()
        return self.buffer

    def discriminator_phase(self) -> float:
        if not self.config.learns_discriminator:
            return float("nan")
        if self.buffer is None or len(self.buffer) == 0:
            raise DataError("the data buffer is empty; collect an initial buffer first")
        if self.config.disc_epochs == 0:
            return float("nan")
        stats = self.disc.train_epochs(self.buffer, epochs=self.config.disc_epochs, rng=self.train_rng)
        loss = stats.epoch_losses[-1]
        if not np.isfinite(loss):
            raise NumericError(f"non-finite discriminator loss {loss}")
        return float(loss)

    def explorer_phase(self) -> int:
        budget = min(self.config.explorer_steps, self.config.max_steps - self.total_steps)
        if budget <= 0:
            return 0
        taken = self._run_steps(budget, learn=self.explorer is not None, push=self.buffer is not None)
        self.total_steps += taken
        return taken

    def iterate(self) -> dict:
        loss = self.discriminator_phase()
        self.explorer_phase()
        self.iteration += 1
        rec = list(self.recent)
        row = {
            "iteration": self.iteration,
            "total_steps": self.total_steps,
            "success_rate_100": float(np.mean([e.correct for e in rec])) if rec else float("nan"),
            "mean_actions_100": float(np.mean([e.length for e in rec])) if rec else float("nan"),
            "disc_loss": loss,
            "buffer_size": len(self.buffer) if self.buffer is not None else 0,
            "mean_reward_100": float(np.mean([e.reward for e in rec])) if rec else float("nan"),
            "policy_entropy": self._last_entropy,
        }
        self.log.append(row)
        self._append_log(row)
        self.save_checkpoint()
        return row

    def run(self) -> CotrainResult:
        self.collect_initial_buffer()
        try:
            while True:
                self.iterate()
                if self.total_steps >= self.config.max_steps or self.config.explorer_steps == 0:
                    break
        except NumericError:
            self.save_checkpoint(tag="failure")
            raise
        return CotrainResult(self.disc, self.explorer, self.log, self.buffer, self.episodes)

    # output -------------------------------------------------------------------

    def _append_log(self, row: dict) -> None:
        if self.log_path is None:
            return
        self.log_path.parent.mkdir(parents=True, exist_ok=True)
        new = not self.log_path.exists() or self.iteration == 1
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=LOG_COLUMNS, lineterminator="\n")
        if new:
            w.writeheader()
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
        mode = os.O_WRONLY | os.O_CREAT | (os.O_TRUNC if new else os.O_APPEND)
        fd = os.open(self.log_path, mode, 0o644)
        try:
            os.write(fd, buf.getvalue().encode())
        finally:
            os.close(fd)

    def save_checkpoint(self, tag: str | None = None) -> None:
        if self.checkpoint_dir is None:
            return
        d = self.checkpoint_dir / (tag or f"iter_{self.iteration:04d}")
        d.mkdir(parents=True, exist_ok=True)
        meta = {
            "iteration": self.iteration,
            "total_steps": self.total_steps,
            "mode": self.mode,
            "config": dataclasses.asdict(self.config),
            "buffer": self.buffer.summary() if self.buffer is not None else None,
            "rng": {name: _rng_state(g) for name, g in
                    (("train", self.train_rng), ("act", self.act_rng), ("env", self.env_rng))},
        }
        if isinstance(self.disc, Discriminator):
            save_checkpoint(d / "discriminator.npz", {"discriminator": self.disc.net}, meta)
        if self.explorer is not None:
            self.explorer.policy.save(d / "explorer.npz", meta)
        (d / "state.json").write_text(json.dumps(meta, indent=2, sort_keys=True))


def _rng_state(g: np.random.Generator) -> dict:
    st = g.bit_generator.state
    return json.loads(json.dumps(st, default=int))


def collect_initial_buffer(trainer: CoTrainer) -> DataBuffer | None:
    return trainer.collect_initial_buffer()


def cotrain_loop(config: CotrainConfig, env_config: EnvConfig, objects, seed: int = 0, **kwargs) -> CotrainResult:
    """Collect the initial buffer, then alternate discriminator and explorer phases until the step budget is spent."""
    return CoTrainer(config, env_config, objects, seed=seed, **kwargs).run()
