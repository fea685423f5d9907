"""Small parameterized building blocks: MLPs and the Adam optimizer."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigurationError, ContractError

_ACTIVATIONS = ("relu", "none")


class Mlp:
    """A stack of affine layers with per-layer activation tags.

    ``dims`` lists the layer widths, e.g. ``[3, 32, 64]`` builds two layers.
    ``acts`` carries one tag per layer out of {"relu", "none"}; the default
    uses relu everywhere except the final layer.
    """

    def __init__(self, dims, acts=None, rng: np.random.Generator | None = None):
        dims = [int(d) for d in dims]
        if len(dims) < 2:
            raise ConfigurationError(f"an MLP needs at least one layer, got dims {dims}")
        if any(d < 1 for d in dims):
            raise ConfigurationError(f"non-positive layer width in {dims}")
        n_layers = len(dims) - 1
        if acts is None:
            acts = ["relu"] * (n_layers - 1) + ["none"]
        acts = list(acts)
        if len(acts) != n_layers:
            raise ConfigurationError(
                f"{len(acts)} activation tags for {n_layers} layers"
            )
        for a in acts:
            if a not in _ACTIVATIONS:
                raise ConfigurationError(f"unknown activation tag {a!r}")
        if rng is None:
            rng = np.random.default_rng(0)
        self.dims = dims
        self.acts = acts
        self.weights: list[Tensor] = []
        self.biases: list[Tensor] = []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            scale = np.sqrt(2.0 / fan_in)
            w = rng.normal(0.0, scale, size=(fan_in, fan_out))
            self.weights.append(Tensor(w, requires_grad=True))
            self.biases.append(Tensor(np.zeros(fan_out), requires_grad=True))

    @property
    def in_dim(self) -> int:
        return self.dims[0]

    @property
    def out_dim(self) -> int:
        return self.dims[-1]

    def __call__(self, x: Tensor) -> Tensor:
        return self.forward(x)

    def forward(self, x: Tensor) -> Tensor:
        if x.data.ndim != 2 or x.data.shape[1] != self.in_dim:
            raise ConfigurationError(
                f"MLP expects [n, {self.in_dim}] inputs, got {x.data.shape}"
            )
        h = x
        for w, b, act in zip(self.weights, self.biases, self.acts):
            h = ad.add(ad.matmul(h, w), b)
            if act == "relu":
                h = ad.relu(h)
        return h

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"{prefix}.w{i}"] = w
            out[f"{prefix}.b{i}"] = b
        return out


def mlp_forward(params: Mlp, x: Tensor) -> Tensor:
    """Functional alias for :meth:`Mlp.forward`."""
    return params.forward(x)


class Adam:
    """Adam over a named parameter dict, with exact state round-tripping."""

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = dict(params)
        self.lr = float(lr)
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = float(eps)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in self.params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in self.params.items()}

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        for name, p in self.params.items():
            if p.grad is None:
                raise ContractError(f"adam step with no gradient for {name!r}")
        self.t += 1
        b1, b2 = self.betas
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for name, p in self.params.items():
            g = p.grad
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)

    def state_dict(self) -> dict:
        return {
            "t": self.t,
            "lr": self.lr,
            "betas": list(self.betas),
            "eps": self.eps,
            "m": {k: v.reshape(-1).tolist() for k, v in self.m.items()},
            "v": {k: v.reshape(-1).tolist() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        self.t = int(state["t"])
        self.lr = float(state["lr"])
        self.betas = (float(state["betas"][0]), float(state["betas"][1]))
        self.eps = float(state["eps"])
        for k in self.params:
            if k not in state["m"] or k not in state["v"]:
                raise ContractError(f"optimizer state missing moments for {k!r}")
            self.m[k] = np.asarray(state["m"][k], dtype=np.float64).reshape(
                self.params[k].data.shape
            )
            self.v[k] = np.asarray(state["v"][k], dtype=np.float64).reshape(
                self.params[k].data.shape
            )


def adam_step(params: dict[str, Tensor], state: Adam) -> None:
    """Apply one Adam update through an existing optimizer state."""
    if set(params) != set(state.params):
        raise ContractError("parameter names do not match the optimizer state")
    state.step()
