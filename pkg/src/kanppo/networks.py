"""KAN and MLP layers with hand-written backprop, actor-critic assembly,
parameter counting, edge pruning and checkpoint I/O."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .nn_core import ParamStore, make_rng
from .spline import KnotGrid, basis_derivatives, basis_values

ARCHS = ("mlp-a2c2", "mlp-a1c2", "kan-actor", "full-kan")

CHECKPOINT_FORMAT = "kanppo-checkpoint"
CHECKPOINT_VERSION = 1


class StaleCacheError(RuntimeError):
    pass


@dataclass
class LayerCache:
    layer: object
    version: int
    x: np.ndarray
    aux: np.ndarray  # KAN: basis values; MLP: activation output


class KanLayer:
    """``y_j = sum_i phi_{j,i}(x_i)`` with every edge a pure B-spline.

    Coefficients have shape ``[n_out, n_in, g + k]``; there is no bias and no
    residual base branch.
    """

    kind = "kan"

    def __init__(self, name: str, n_in: int, n_out: int, grid: KnotGrid):
        if n_in < 1 or n_out < 1:
            raise ValueError("layer dimensions must be positive")
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.grid = grid
        self.keep = np.ones((n_out, n_in), dtype=bool)
        self.store: ParamStore | None = None

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_out, self.n_in, self.grid.n_basis)

    def n_params(self) -> int:
        return self.n_in * self.n_out * self.grid.n_basis

    def n_active_params(self) -> int:
        return int(self.keep.sum()) * self.grid.n_basis

    def allocate(self, store: ParamStore) -> None:
        store.allocate(f"{self.name}.coeffs", self.shape)

    def bind(self, store: ParamStore) -> None:
        self.store = store
        self.coeffs = store.view(f"{self.name}.coeffs")
        self.dcoeffs = store.grad_view(f"{self.name}.coeffs")

    def init(self, rng: np.random.Generator) -> None:
        std = 0.1 / np.sqrt(self.grid.n_basis)
        self.coeffs[...] = rng.normal(0.0, std, size=self.shape)

    def effective_coeffs(self) -> np.ndarray:
        if self.keep.all():
            return self.coeffs
        return self.coeffs * self.keep[..., None]

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, LayerCache]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"{self.name}: expected {self.n_in} inputs, got {x.shape[-1]}")
        basis = basis_values(self.grid, x)  # [B, n_in, nb]
        flat = basis.reshape(basis.shape[:-2] + (-1,))
        y = flat @ self.effective_coeffs().reshape(self.n_out, -1).T
        return y, LayerCache(self, self.store.version, x, basis)

    def backward(self, cache: LayerCache, dy: np.ndarray, need_dx: bool = True):
        """Accumulate ``dL/dc`` into the store and return ``dL/dx`` (or None)."""
        self._check(cache)
        x, basis = cache.x, cache.aux
        dy = dy.reshape(-1, self.n_out)
        flat = basis.reshape(dy.shape[0], -1)
        dc = (dy.T @ flat).reshape(self.shape)
        if not self.keep.all():
            dc *= self.keep[..., None]
        self.dcoeffs += dc
        if not need_dx:
            return None
        dbasis = basis_derivatives(self.grid, x).reshape(dy.shape[0], self.n_in, -1)
        # dphi_{j,i}/dx_i summed against upstream grads
        w = np.einsum("bj,jim->bim", dy, self.effective_coeffs())
        return np.einsum("bim,bim->bi", w, dbasis).reshape(x.shape)

    def edge_outputs(self, x: np.ndarray) -> np.ndarray:
        """Per-edge values ``phi_{j,i}(x_i)``, shape ``[B, n_out, n_in]``."""
        basis = basis_values(self.grid, np.atleast_2d(x))
        return np.einsum("bim,jim->bji", basis, self.effective_coeffs())

    def _check(self, cache: LayerCache | None) -> None:
        if cache is None or cache.layer is not self:
            raise StaleCacheError(f"{self.name}: missing cache from a matching forward call")
        if cache.version != self.store.version:
            raise StaleCacheError(f"{self.name}: parameters changed since the forward call")


_ACTIVATIONS = ("tanh", "relu", "identity")


class MlpLayer:
    kind = "mlp"

    def __init__(self, name: str, n_in: int, n_out: int, activation: str = "tanh"):
        if n_in < 1 or n_out < 1:
            raise ValueError("layer dimensions must be positive")
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.name = name
        self.n_in, self.n_out = n_in, n_out
        self.activation = activation
        self.store: ParamStore | None = None

    def n_params(self) -> int:
        return self.n_in * self.n_out + self.n_out

    n_active_params = n_params

    def allocate(self, store: ParamStore) -> None:
        store.allocate(f"{self.name}.W", (self.n_out, self.n_in))
        store.allocate(f"{self.name}.b", (self.n_out,))

    def bind(self, store: ParamStore) -> None:
        self.store = store
        self.W = store.view(f"{self.name}.W")
        self.b = store.view(f"{self.name}.b")
        self.dW = store.grad_view(f"{self.name}.W")
        self.db = store.grad_view(f"{self.name}.b")

    def init(self, rng: np.random.Generator, gain: float = np.sqrt(2.0)) -> None:
        rows, cols = self.n_out, self.n_in
        a = rng.normal(size=(max(rows, cols), min(rows, cols)))
        q, r = np.linalg.qr(a)
        q *= np.sign(np.diag(r))
        if rows < cols:
            q = q.T
        self.W[...] = gain * q[:rows, :cols]
        self.b[...] = 0.0

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, LayerCache]:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_in:
            raise ValueError(f"{self.name}: expected {self.n_in} inputs, got {x.shape[-1]}")
        z = x @ self.W.T + self.b
        if self.activation == "tanh":
            y = np.tanh(z)
        elif self.activation == "relu":
            y = np.maximum(z, 0.0)
        else:
            y = z
        return y, LayerCache(self, self.store.version, x, y)

    def backward(self, cache: LayerCache, dy: np.ndarray, need_dx: bool = True):
        if cache is None or cache.layer is not self:
            raise StaleCacheError(f"{self.name}: missing cache from a matching forward call")
        if cache.version != self.store.version:
            raise StaleCacheError(f"{self.name}: parameters changed since the forward call")
        y = cache.aux
        if self.activation == "tanh":
            dz = dy * (1.0 - y * y)
        elif self.activation == "relu":
            dz = dy * (y > 0.0)
        else:
            dz = dy
        x2 = cache.x.reshape(-1, self.n_in)
        dz2 = dz.reshape(-1, self.n_out)
        self.dW += dz2.T @ x2
        self.db += dz2.sum(axis=0)
        if not need_dx:
            return None
        return (dz2 @ self.W).reshape(cache.x.shape)


class Stack:
    """A feed-forward chain of layers with an optional fixed input scale."""

    def __init__(self, layers: list, input_scale: float = 1.0):
        self.layers = layers
        self.input_scale = input_scale

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, list[LayerCache]]:
        caches = []
        h = np.asarray(x, dtype=np.float64) * self.input_scale
        for layer in self.layers:
            h, c = layer.forward(h)
            caches.append(c)
        return h, caches

    def backward(self, caches: list[LayerCache], dy: np.ndarray) -> None:
        for i in range(len(self.layers) - 1, -1, -1):
            dy = self.layers[i].backward(caches[i], dy, need_dx=i > 0)

    def n_params(self) -> int:
        return sum(layer.n_params() for layer in self.layers)

    def n_active_params(self) -> int:
        return sum(layer.n_active_params() for layer in self.layers)

    def kan_layers(self) -> list[KanLayer]:
        return [layer for layer in self.layers if isinstance(layer, KanLayer)]


@dataclass(frozen=True)
class NetworkSpec:
    arch: str = "kan-actor"
    k: int = 2
    g: int = 3
    hidden_width: int = 64
    activation: str = "tanh"
    # KAN stacks see normalized observations divided by the normalizer clip
    kan_input_scale: float = 0.2

    def __post_init__(self):
        if self.arch not in ARCHS:
            raise ValueError(f"unknown architecture {self.arch!r}; choose from {ARCHS}")

    @property
    def actor_kind(self) -> str:
        return "kan" if self.arch in ("kan-actor", "full-kan") else "mlp"

    @property
    def critic_kind(self) -> str:
        return "kan" if self.arch == "full-kan" else "mlp"

    @property
    def actor_hidden(self) -> int:
        return 1 if self.arch == "mlp-a1c2" else 2


def count_params(spec: NetworkSpec, obs_dim: int, act_dim: int) -> tuple[int, int]:
    """Closed-form (actor, critic) parameter counts, excluding log_std."""
    nb = spec.g + spec.k
    w = spec.hidden_width

    def mlp(n_in: int, n_out: int, hidden: int) -> int:
        dims = [n_in] + [w] * hidden + [n_out]
        return sum(a * b + b for a, b in zip(dims[:-1], dims[1:]))

    if spec.actor_kind == "kan":
        actor = obs_dim * act_dim * nb
    else:
        actor = mlp(obs_dim, act_dim, spec.actor_hidden)
    critic = obs_dim * nb if spec.critic_kind == "kan" else mlp(obs_dim, 1, 2)
    return actor, critic


class ActorCritic:
    """Actor mean network, critic value network and a free log-std vector."""

    def __init__(self, spec: NetworkSpec, obs_dim: int, act_dim: int,
                 action_low=None, action_high=None):
        if obs_dim < 1 or act_dim < 1:
            raise ValueError("obs_dim and act_dim must be >= 1")
        self.spec = spec
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.action_low = np.full(act_dim, -np.inf) if action_low is None else np.asarray(action_low, float)
        self.action_high = np.full(act_dim, np.inf) if action_high is None else np.asarray(action_high, float)
        grid = KnotGrid(spec.k, spec.g)
        self.actor = self._make_stack("actor", spec.actor_kind, obs_dim, act_dim, spec.actor_hidden, grid)
        self.critic = self._make_stack("critic", spec.critic_kind, obs_dim, 1, 2, grid)

        self.params = ParamStore()
        for layer in self.actor.layers + self.critic.layers:
            layer.allocate(self.params)
        self.params.allocate("log_std", (act_dim,))
        self.params.finalize()
        for layer in self.actor.layers + self.critic.layers:
            layer.bind(self.params)
        self.log_std = self.params.view("log_std")
        self.dlog_std = self.params.grad_view("log_std")

    def _make_stack(self, prefix, kind, n_in, n_out, hidden, grid) -> Stack:
        if kind == "kan":
            return Stack([KanLayer(f"{prefix}.0", n_in, n_out, grid)], self.spec.kan_input_scale)
        w = self.spec.hidden_width
        dims = [n_in] + [w] * hidden + [n_out]
        layers = [
            MlpLayer(f"{prefix}.{i}", a, b, self.spec.activation if i < hidden else "identity")
            for i, (a, b) in enumerate(zip(dims[:-1], dims[1:]))
        ]
        return Stack(layers)

    def init(self, rng: np.random.Generator) -> None:
        for stack in (self.actor, self.critic):
            last = len(stack.layers) - 1
            for i, layer in enumerate(stack.layers):
                if isinstance(layer, KanLayer):
                    layer.init(rng)
                else:
                    layer.init(rng, gain=0.01 if i == last else np.sqrt(2.0))
        self.log_std[...] = 0.0

    def mean(self, obs) -> np.ndarray:
        return self.actor.forward(obs)[0]

    def value(self, obs) -> np.ndarray:
        return self.critic.forward(obs)[0][..., 0]

    def param_counts(self) -> tuple[int, int]:
        return self.actor.n_params(), self.critic.n_params()

    def active_param_counts(self) -> tuple[int, int]:
        return self.actor.n_active_params(), self.critic.n_active_params()

    def kan_layers(self) -> list[KanLayer]:
        return self.actor.kan_layers() + self.critic.kan_layers()

    def clamp_action(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.action_low, self.action_high)


def build_network(spec: NetworkSpec, obs_dim: int, act_dim: int, seed: int = 0,
                  action_low=None, action_high=None) -> ActorCritic:
    net = ActorCritic(spec, obs_dim, act_dim, action_low, action_high)
    net.init(make_rng(seed))
    return net


@dataclass
class PruneMask:
    keep: dict[str, np.ndarray]
    importance: dict[str, np.ndarray]
    threshold: float
    params_before: tuple[int, int] = (0, 0)
    params_after: tuple[int, int] = (0, 0)

    @property
    def edges_total(self) -> int:
        return sum(k.size for k in self.keep.values())

    @property
    def edges_pruned(self) -> int:
        return sum(int((~k).sum()) for k in self.keep.values())


def edge_importance(net: ActorCritic, probe_states) -> dict[str, np.ndarray]:
    """Mean absolute edge output ``|phi_{j,i}(x_i)|`` over a probe batch."""
    probe = np.atleast_2d(np.asarray(probe_states, dtype=np.float64))
    if probe.shape[0] == 0:
        raise ValueError("probe batch is empty")
    out = {}
    for stack in (net.actor, net.critic):
        _, caches = stack.forward(probe)
        for layer, cache in zip(stack.layers, caches):
            if isinstance(layer, KanLayer):
                out[layer.name] = np.abs(layer.edge_outputs(cache.x)).mean(axis=0)
    return out


def prune(net: ActorCritic, probe_states, threshold: float) -> PruneMask:
    """Mask every KAN edge whose mean |phi| over the probe batch is below
    ``threshold``. Masks compose with earlier pruning."""
    if threshold < 0:
        raise ValueError("threshold must be >= 0")
    before = net.active_param_counts()
    importance = edge_importance(net, probe_states)
    keep = {}
    for layer in net.kan_layers():
        layer.keep = layer.keep & ~(importance[layer.name] < threshold)
        keep[layer.name] = layer.keep.copy()
    return PruneMask(keep, importance, threshold, before, net.active_param_counts())


def _atomic_write_text(path: Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_checkpoint(path, net: ActorCritic, extra: dict | None = None) -> None:
    """Write a JSON checkpoint; float64 values round-trip exactly via repr."""
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "spec": asdict(net.spec),
        "obs_dim": net.obs_dim,
        "act_dim": net.act_dim,
        "action_low": net.action_low.tolist(),
        "action_high": net.action_high.tolist(),
        "params": net.params.values.tolist(),
        "masks": {layer.name: layer.keep.astype(int).tolist() for layer in net.kan_layers()},
        "extra": extra or {},
    }
    _atomic_write_text(Path(path), json.dumps(doc))


def load_checkpoint(path) -> tuple[ActorCritic, dict]:
    with open(path) as f:
        doc = json.load(f)
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    spec = NetworkSpec(**doc["spec"])
    net = ActorCritic(spec, doc["obs_dim"], doc["act_dim"], doc["action_low"], doc["action_high"])
    values = np.asarray(doc["params"], dtype=np.float64)
    if values.shape != net.params.values.shape:
        raise ValueError(f"{path}: parameter vector has wrong length")
    net.params.values[...] = values
    for layer in net.kan_layers():
        layer.keep = np.asarray(doc["masks"][layer.name], dtype=bool)
    return net, doc["extra"]
