"""Sequential network container, forward caches and checkpoint files."""
from __future__ import annotations

import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, ShapeError, StaleCacheError
from .layers import LayerSpec, make_layer

CHECKPOINT_FORMAT_VERSION = 1


@dataclass
class ForwardCache:
    layer_caches: list
    version: int
    train: bool
    owner: int


class Network:
    """An ordered stack of layers over per-sample input shape ``input_shape``.

    Inputs of shape (B, H, W) are treated as single-channel images.
    """

    def __init__(self, specs, input_shape, seed=0, dtype=np.float64):
        self.specs = [s if isinstance(s, LayerSpec) else LayerSpec.from_dict(s) for s in specs]
        self.input_shape = tuple(input_shape)
        if len(self.input_shape) == 2:
            self.input_shape = self.input_shape + (1,)
        self.dtype = np.dtype(dtype)
        self.rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        self.layers = [make_layer(s) for s in self.specs]
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.build(shape, self.rng, self.dtype)
        self.output_shape = shape
        self.version = 0

    # parameters ------------------------------------------------------------

    def parameters(self):
        """List of (name, param, grad) in a fixed order."""
        out = []
        for i, layer in enumerate(self.layers):
            for k in sorted(layer.params):
                out.append((f"{i}.{layer.kind}.{k}", layer.params[k], layer.grads[k]))
        return out

    def num_parameters(self) -> int:
        return sum(p.size for _, p, _ in self.parameters())

    def zero_grad(self) -> None:
        for _, _, g in self.parameters():
            g.fill(0)

    def mark_updated(self) -> None:
        """Invalidate outstanding forward caches after an in-place parameter change."""
        self.version += 1

    def get_flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for _, p, _ in self.parameters()])

    def set_flat(self, flat) -> None:
        i = 0
        for _, p, _ in self.parameters():
            p[...] = flat[i:i + p.size].reshape(p.shape)
            i += p.size
        self.mark_updated()

    def copy_from(self, other: "Network") -> None:
        for (_, p, _), (_, q, _) in zip(self.parameters(), other.parameters()):
            p[...] = q
        self.mark_updated()

    # forward / backward ---------------------------------------------------

    def _prepare(self, x):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim == len(self.input_shape) and self.input_shape[-1] == 1:
            x = x[..., None]
        if x.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {x.shape[1:]} does not match network input {self.input_shape}")
        return x

    def forward(self, x, train=False, rng=None):
        """Return (output, cache). ``train=False`` disables dropout and uses no randomness."""
        x = self._prepare(x)
        rng = self.rng if rng is None else rng
        caches = []
        for layer in self.layers:
            x, c = layer.forward(x, train, rng)
            caches.append(c)
        return x, ForwardCache(caches, self.version, train, id(self))

    def predict(self, x):
        return self.forward(x, train=False)[0]

    def backward(self, cache: ForwardCache, dout, need_input_grad=False):
        """Accumulate parameter gradients of sum(dout * output); return the input gradient if asked."""
        if cache.owner != id(self) or cache.version != self.version:
            raise StaleCacheError("forward cache does not belong to the current parameters")
        dy = np.asarray(dout, dtype=self.dtype)
        n = len(self.layers)
        for i in range(n - 1, -1, -1):
            need = need_input_grad or i > 0
            dy = self.layers[i].backward(cache.layer_caches[i], dy, need_dx=need)
        return dy

    # serialization --------------------------------------------------------

    def describe(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "dtype": self.dtype.str,
            "layers": [s.to_dict() for s in self.specs],
        }

    @classmethod
    def from_description(cls, desc: dict) -> "Network":
        return cls([LayerSpec.from_dict(d) for d in desc["layers"]], tuple(desc["input_shape"]),
                   seed=0, dtype=np.dtype(desc["dtype"]))


def save_checkpoint(path, networks: dict[str, Network], meta: dict | None = None) -> None:
    """Write named networks (layer specs plus exact parameter arrays) to one ``.npz`` file."""
    header = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "networks": {name: net.describe() for name, net in networks.items()},
        "meta": meta or {},
    }
    arrays = {"__header__": np.frombuffer(json.dumps(header).encode(), dtype=np.uint8)}
    for name, net in networks.items():
        for pname, p, _ in net.parameters():
            arrays[f"{name}/{pname}"] = p
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path) -> tuple[dict[str, Network], dict]:
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read checkpoint {path}: {exc}") from exc
    with data:
        header = json.loads(bytes(data["__header__"]).decode())
        if header.get("format_version") != CHECKPOINT_FORMAT_VERSION:
            raise ConfigurationError(f"unsupported checkpoint format {header.get('format_version')!r}")
        nets = {}
        for name, desc in header["networks"].items():
            net = Network.from_description(desc)
            for pname, p, _ in net.parameters():
                p[...] = data[f"{name}/{pname}"]
            net.mark_updated()
            nets[name] = net
    return nets, header["meta"]
