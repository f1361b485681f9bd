"""PPO actor-critic over explorer-view grids: action sampling, rewards, GAE and the clipped update."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .discriminator import INPUT_SHIFT, torso_specs
from .encoder import MARKER_VALUE
from .env import NUM_MOVES
from .errors import ConfigurationError, InputContractError, NumericError, ShapeError
from .nn import Adam, Network, dense, log_softmax, save_checkpoint

REWARD_MODES = ("standard", "all_in_one", "ppo_icp")


@dataclass(frozen=True)
class PPOConfig:
    steps_per_iteration: int = 200_000
    horizon: int = 2048
    num_envs: int = 16
    epochs: int = 4
    minibatch_size: int = 256
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    learning_rate: float = 3e-4
    max_grad_norm: float | None = 0.5

    def __post_init__(self):
        if not 0.0 < self.clip < 1.0:
            raise ConfigurationError("clip must be in (0, 1)")
        if not (0.0 <= self.gamma <= 1.0 and 0.0 <= self.lam <= 1.0):
            raise ConfigurationError("gamma and lam must be in [0, 1]")
        if self.horizon % self.num_envs:
            raise ConfigurationError("horizon must be a multiple of num_envs")
        if self.epochs < 0 or self.minibatch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and minibatch_size >= 1")


@dataclass
class PolicyOutput:
    distribution: np.ndarray
    value: float


class ActorCritic:
    """Shared convolutional torso with separate linear actor and critic heads."""

    def __init__(self, grid_shape, num_actions: int = NUM_MOVES, seed=0, dtype=np.float32, hidden: int = 128):
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.grid_shape = tuple(grid_shape)
        self.num_actions = num_actions
        # no dropout: the sampling policy must equal the policy being updated
        self.torso = Network(torso_specs(0.0, hidden), self.grid_shape, seed=rng, dtype=dtype)
        self.actor = Network([dense(num_actions, in_features=hidden, gain=0.01)], (hidden,), seed=rng, dtype=dtype)
        self.critic = Network([dense(1, in_features=hidden, gain=1.0)], (hidden,), seed=rng, dtype=dtype)

    @property
    def networks(self):
        return [self.torso, self.actor, self.critic]

    @property
    def dtype(self):
        return self.torso.dtype

    def forward(self, images, train=False):
        x = np.asarray(images, dtype=self.dtype) - self.dtype.type(INPUT_SHIFT)
        h, ct = self.torso.forward(x, train=train)
        logits, ca = self.actor.forward(h, train=train)
        values, cc = self.critic.forward(h, train=train)
        return logits.astype(np.float64), values[:, 0].astype(np.float64), (ct, ca, cc)

    def backward(self, caches, dlogits, dvalues):
        ct, ca, cc = caches
        dh = self.actor.backward(ca, dlogits, need_input_grad=True)
        dh = dh + self.critic.backward(cc, np.asarray(dvalues)[:, None], need_input_grad=True)
        self.torso.backward(ct, dh)

    def policy(self, image) -> PolicyOutput:
        logits, values, _ = self.forward(np.asarray(image)[None])
        return PolicyOutput(np.exp(log_softmax(logits[0])), float(values[0]))

    def save(self, path, meta=None):
        save_checkpoint(path, {"torso": self.torso, "actor": self.actor, "critic": self.critic}, meta)

    @classmethod
    def from_networks(cls, nets: dict) -> "ActorCritic":
        obj = cls.__new__(cls)
        obj.torso, obj.actor, obj.critic = nets["torso"], nets["actor"], nets["critic"]
        obj.grid_shape = obj.torso.input_shape[:2]
        obj.num_actions = obj.actor.output_shape[0]
        return obj


def _check_explorer_view(images) -> None:
    flat = np.asarray(images).reshape(len(images), -1)
    if not np.all(np.any(flat == MARKER_VALUE, axis=1)):
        raise InputContractError("explorer input is missing the finger marker")


def sample_categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[0])[:, None] * cdf[:, -1:]
    return np.minimum((cdf <= u).sum(axis=-1), probs.shape[-1] - 1)


def act_batch(policy: ActorCritic, images, rng: np.random.Generator, greedy: bool = False):
    """Sample one action per image; returns (actions, log_probs, values)."""
    _check_explorer_view(images)
    logits, values, _ = policy.forward(images)
    logp = log_softmax(logits)
    if greedy:
        actions = np.argmax(logp, axis=1)
    else:
        actions = sample_categorical(np.exp(logp), rng)
    return actions, logp[np.arange(len(actions)), actions], values


def act(policy: ActorCritic, image, rng: np.random.Generator, greedy: bool = False):
    a, lp, v = act_batch(policy, np.asarray(image)[None], rng, greedy)
    return int(a[0]), float(lp[0]), float(v[0])


def terminal_reward(terminated: bool, correct: bool, mode: str = "standard") -> float:
    """Reward credited to the final transition of an episode.

    ``terminated`` means the episode ended by discriminator confidence (standard
    and ICP modes) or by a prediction action (all-in-one mode); timeouts pass False.
    """
    if mode not in REWARD_MODES:
        raise ValueError(f"unknown reward mode {mode!r}")
    if mode == "all_in_one":
        return 1.0 if (terminated and correct) else 0.0
    return 1.0 if terminated else 0.0


def assign_rewards(num_transitions: int, terminated_by_confidence: bool, correct: bool,
                   mode: str = "standard") -> np.ndarray:
    rewards = np.zeros(num_transitions)
    if num_transitions:
        rewards[-1] = terminal_reward(terminated_by_confidence, correct, mode)
    return rewards


def compute_gae(rewards, values, dones, gamma: float, lam: float, last_value: float = 0.0):
    """Generalized advantage estimates and returns for one environment's trajectory.

    ``dones[t]`` marks that the episode ended after step ``t``; ``last_value``
    bootstraps the step after the final one.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape) or rewards.ndim != 1:
        raise ShapeError(f"mismatched GAE inputs {rewards.shape}, {values.shape}, {dones.shape}")
    adv = kernels.gae(rewards, values, dones, float(last_value), float(gamma), float(lam))
    return adv, adv + values


def clipped_surrogate(ratio, advantage, eps):
    """Per-sample min(r A, clip(r, 1-eps, 1+eps) A) and its derivative in r."""
    ratio = np.asarray(ratio, dtype=np.float64)
    advantage = np.asarray(advantage, dtype=np.float64)
    unclipped = ratio * advantage
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * advantage
    obj = np.minimum(unclipped, clipped)
    grad = np.where(unclipped <= clipped, advantage, 0.0)
    return obj, grad


@dataclass
class RolloutBatch:
    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    values: np.ndarray = field(default=None)

    def __len__(self):
        return len(self.actions)


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    approx_kl: float
    clip_fraction: float
    first_ratio_max_dev: float


def normalize_advantages(adv, eps=1e-8):
    adv = np.asarray(adv, dtype=np.float64)
    return (adv - adv.mean()) / (adv.std() + eps)


def ppo_update(policy: ActorCritic, optimizer: Adam, batch: RolloutBatch, config: PPOConfig,
               rng: np.random.Generator, normalize: bool = True) -> UpdateStats:
    """Clipped-surrogate PPO epochs over one rollout batch."""
    adv_all = np.asarray(batch.advantages, dtype=np.float64)
    if not np.all(np.isfinite(adv_all)):
        raise NumericError("non-finite advantages")
    if normalize and len(adv_all) > 1:
        adv_all = normalize_advantages(adv_all)
    n = len(batch)
    mb = config.minibatch_size
    pl, vl, ent, kl, cf = [], [], [], [], []
    first_dev = None
    for _ in range(config.epochs):
        order = rng.permutation(n)
        for start in range(0, n, mb):
            idx = order[start:start + mb]
            m = len(idx)
            logits, values, caches = policy.forward(batch.observations[idx], train=True)
            logp_all = log_softmax(logits)
            probs = np.exp(logp_all)
            a = batch.actions[idx]
            logp = logp_all[np.arange(m), a]
            ratio = np.exp(logp - batch.log_probs[idx])
            if first_dev is None:
                first_dev = float(np.max(np.abs(ratio - 1.0)))
            A = adv_all[idx]
            obj, dobj_dratio = clipped_surrogate(ratio, A, config.clip)
            H = -(probs * logp_all).sum(axis=1)
            R = batch.returns[idx]
            # loss = -mean(obj) + c_v mean((V-R)^2) - c_e mean(H)
            dlogp = -(dobj_dratio * ratio) / m
            dlogits = -probs * dlogp[:, None]
            dlogits[np.arange(m), a] += dlogp
            dH = -probs * (logp_all + H[:, None])
            dlogits -= config.entropy_coef * dH / m
            dvalues = config.value_coef * 2.0 * (values - R) / m
            policy.backward(caches, dlogits, dvalues)
            optimizer.step()
            pl.append(float(-obj.mean()))
            vl.append(float(((values - R) ** 2).mean()))
            ent.append(float(H.mean()))
            kl.append(float((batch.log_probs[idx] - logp).mean()))
            cf.append(float((np.abs(ratio - 1.0) > config.clip).mean()))
    if not pl:
        return UpdateStats(0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    return UpdateStats(float(np.mean(pl)), float(np.mean(vl)), float(np.mean(ent)),
                       float(np.mean(kl)), float(np.mean(cf)), first_dev)


class Explorer:
    """A trainable PPO policy plus its optimizer."""

    def __init__(self, grid_shape, num_actions: int = NUM_MOVES, config: PPOConfig = PPOConfig(),
                 seed=0, dtype=np.float32):
        self.config = config
        self.policy = ActorCritic(grid_shape, num_actions, seed=seed, dtype=dtype)
        self.optimizer = Adam(self.policy.networks, lr=config.learning_rate, max_grad_norm=config.max_grad_norm)

    def act_batch(self, images, rng, greedy=False):
        return act_batch(self.policy, images, rng, greedy)

    def update(self, batch: RolloutBatch, rng) -> UpdateStats:
        return ppo_update(self.policy, self.optimizer, batch, self.config, rng)
