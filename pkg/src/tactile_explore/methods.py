"""Assemble (exploration policy, discriminator) pairs by method name."""
from __future__ import annotations

from pathlib import Path

from .baselines import EdgeFollowerPolicy, InfoGainPolicy, NotGoBackPolicy, RandomWalkPolicy
from .discriminator import Discriminator, DiscriminatorConfig
from .errors import ConfigurationError
from .explorer import ActorCritic
from .harness import PPOPolicy
from .icp import ICPConfig, ICPDiscriminator
from .nn import load_checkpoint

DISCRIMINATOR_FILE = "discriminator.npz"
EXPLORER_FILE = "explorer.npz"


def load_discriminator(path, config: DiscriminatorConfig = DiscriminatorConfig()) -> Discriminator:
    nets, _ = load_checkpoint(path)
    if "discriminator" not in nets:
        raise ConfigurationError(f"{path} holds no discriminator network")
    net = nets["discriminator"]
    return Discriminator(net.input_shape[:2], net.output_shape[0], config, network=net)


def load_explorer(path) -> ActorCritic:
    nets, _ = load_checkpoint(path)
    if not {"torso", "actor", "critic"} <= set(nets):
        raise ConfigurationError(f"{path} holds no actor-critic networks")
    return ActorCritic.from_networks(nets)


def _need(checkpoint, name: str) -> Path:
    if not checkpoint:
        raise ConfigurationError("this method needs a trained checkpoint directory (evaluate.checkpoint)")
    p = Path(checkpoint) / name
    if not p.exists():
        raise ConfigurationError(f"missing {p}")
    return p


def build_method(name: str, objects, grid_spec, checkpoint: str | Path | None = None,
                 disc_config: DiscriminatorConfig = DiscriminatorConfig(), icp_config: ICPConfig = ICPConfig(),
                 greedy: bool = False):
    """Return (policy, discriminator); the discriminator is None for the 14-action policy."""
    threshold = disc_config.confidence_threshold
    if name == "edge_icp":
        return EdgeFollowerPolicy(grid_spec.shape), ICPDiscriminator(objects, icp_config, grid_spec, threshold)
    if name == "ppo_icp":
        policy = PPOPolicy(load_explorer(_need(checkpoint, EXPLORER_FILE)), greedy, name)
        return policy, ICPDiscriminator(objects, icp_config, grid_spec, threshold)
    if name == "all_in_one":
        return PPOPolicy(load_explorer(_need(checkpoint, EXPLORER_FILE)), greedy, name), None
    disc = load_discriminator(_need(checkpoint, DISCRIMINATOR_FILE), disc_config)
    if disc.num_classes != len(objects):
        raise ConfigurationError(f"discriminator has {disc.num_classes} classes but {len(objects)} objects are loaded")
    if name == "ppo":
        return PPOPolicy(load_explorer(_need(checkpoint, EXPLORER_FILE)), greedy, name), disc
    if name == "random_walk":
        return RandomWalkPolicy(), disc
    if name == "not_go_back":
        return NotGoBackPolicy(), disc
    if name == "info_gain":
        return InfoGainPolicy(disc), disc
    if name == "edge_follower":
        return EdgeFollowerPolicy(grid_spec.shape), disc
    raise ConfigurationError(f"unknown method {name!r}")
