"""Message-passing layers and layer stacks.

Two layer types operate on a directed graph with node features h, edge
features e and two world-space coordinate channels x per node:

* ``fan``: feature-wise attention. Each edge builds a candidate message
  from the target's features, gates it with a per-head softmax over feature
  positions, and nodes aggregate their outgoing edges with max pooling.
  Coordinates pass through untouched.
* ``egcl``: distance-gated convolution. Edge features update from endpoint
  features and squared channel distances, coordinates move along difference
  vectors scaled by a learned scalar, and node features update residually
  from summed edge messages. Built only from distances and differences, so
  h is invariant and x equivariant under rigid motion.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import (
    Tensor,
    concat,
    gather_rows,
    mul,
    reduce_sum,
    reshape,
    segment_max,
    segment_sum,
    softmax_heads,
)
from .errors import ConfigurationError
from .nn import Mlp


@dataclass(frozen=True)
class StackConfig:
    """Layer kinds in order, plus whether node features from every layer are
    concatenated for the classifier (jump connections)."""

    layers: tuple[str, ...]
    concat_skip: bool = False

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        for i, kind in enumerate(self.layers):
            if kind not in ("fan", "egcl"):
                raise ConfigurationError(f"layer {i}: unknown kind {kind!r}")
        if not self.layers:
            raise ConfigurationError("a layer stack needs at least one layer")


PRESETS = {
    "sgfn": StackConfig(("fan", "fan")),
    "esgnn1": StackConfig(("fan", "egcl")),
    "esgnn2": StackConfig(("fan", "fan", "egcl", "egcl")),
    "esgnn1x": StackConfig(("fan", "egcl"), concat_skip=True),
    "esgnn2x": StackConfig(("fan", "fan", "egcl", "egcl"), concat_skip=True),
}


def preset_config(name: str) -> StackConfig:
    if name not in PRESETS:
        raise ConfigurationError(
            f"unknown preset {name!r}; choose from {sorted(PRESETS)}"
        )
    return PRESETS[name]


class FanGcl:
    """Feature-wise attention layer over directed edges."""

    def __init__(self, rng, d_h: int, d_e: int, heads: int, hidden: int):
        if d_h % heads != 0:
            raise ConfigurationError(f"node width {d_h} not divisible by {heads} heads")
        self.heads = heads
        self.mlp_t = Mlp([d_e + d_h, hidden, d_h], ["relu", "none"], rng)
        self.mlp_att = Mlp([2 * d_h, hidden, d_h], ["relu", "none"], rng)
        self.g_v = Mlp([2 * d_h, hidden, d_h], ["relu", "none"], rng)
        self.g_e = Mlp([2 * d_h + d_e, hidden, d_e], ["relu", "none"], rng)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        out.update(self.mlp_t.parameters(f"{prefix}.t"))
        out.update(self.mlp_att.parameters(f"{prefix}.att"))
        out.update(self.g_v.parameters(f"{prefix}.v"))
        out.update(self.g_e.parameters(f"{prefix}.e"))
        return out

    def forward(self, h: Tensor, e: Tensor, x: Tensor, edges: np.ndarray):
        src, dst = edges[:, 0], edges[:, 1]
        h_i = gather_rows(h, src)
        h_j = gather_rows(h, dst)
        t = self.mlp_t.forward(concat([e, h_j], axis=1))
        alpha = softmax_heads(self.mlp_att.forward(concat([h_i, t], axis=1)), self.heads)
        agg = segment_max(mul(alpha, t), src, h.shape[0])
        h_out = self.g_v.forward(concat([h, agg], axis=1))
        e_out = self.g_e.forward(concat([h_i, e, h_j], axis=1))
        return h_out, e_out, x


class Egcl:
    """Distance-gated layer that also refines the coordinate channels."""

    def __init__(self, rng, d_h: int, d_e: int, hidden: int, coord_hidden: int,
                 coord_norm: bool = False, debug_coordinate_leak: bool = False):
        self.coord_norm = coord_norm
        self.debug_coordinate_leak = debug_coordinate_leak
        self.g_e = Mlp([2 * d_h + 2 + d_e, hidden, d_e], ["relu", "none"], rng)
        self.phi_coord = Mlp([d_e, coord_hidden, 1], ["relu", "none"], rng)
        # Zero last layer: the coordinate flow starts as the identity, so
        # world-scale coordinates cannot blow up activations at init.
        self.phi_coord.weights[-1].data[:] = 0.0
        self.g_v = Mlp([d_h + d_e, hidden, d_h], ["relu", "none"], rng)
        # constant embedding used only by the deliberate-leak debug mode
        self._leak = np.eye(3, d_h)

    def parameters(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        out.update(self.g_e.parameters(f"{prefix}.e"))
        out.update(self.phi_coord.parameters(f"{prefix}.coord"))
        out.update(self.g_v.parameters(f"{prefix}.v"))
        return out

    def forward(self, h: Tensor, e: Tensor, x: Tensor, edges: np.ndarray):
        n = h.shape[0]
        src, dst = edges[:, 0], edges[:, 1]
        x_i = gather_rows(x, src)
        x_j = gather_rows(x, dst)
        diff = x_i - x_j                                # [m, 2, 3]
        dist2 = reduce_sum(mul(diff, diff), axis=2)     # [m, 2]
        h_i = gather_rows(h, src)
        h_j = gather_rows(h, dst)
        e_out = self.g_e.forward(concat([h_i, h_j, dist2, e], axis=1))

        coef = self.phi_coord.forward(e_out)            # [m, 1]
        m = edges.shape[0]
        moves = mul(diff, reshape(coef, (m, 1, 1)))
        shift = segment_sum(moves, src, n)              # [n, 2, 3]
        if self.coord_norm:
            deg = np.bincount(src, minlength=n).astype(np.float64)
            shift = mul(shift, 1.0 / np.maximum(deg, 1.0).reshape(n, 1, 1))
        x_out = x + shift

        msg = segment_sum(e_out, src, n)
        h_out = h + self.g_v.forward(concat([h, msg], axis=1))
        if self.debug_coordinate_leak:
            # deliberately inject raw world coordinates into node features
            flat = reshape(x_out, (n, 6))
            pad = Tensor(np.zeros((n, h.shape[1] - 6)))
            h_out = h_out + concat([flat, pad], axis=1)
        return h_out, e_out, x_out


class LayerStack:
    """Ordered sequence of layers sharing widths; builds from a StackConfig."""

    def __init__(self, rng, config: StackConfig, d_h: int = 64, d_e: int = 64,
                 heads: int = 4, hidden: int = 64, coord_hidden: int = 32,
                 coord_norm: bool = False, debug_coordinate_leak: bool = False):
        self.config = config
        self.d_h = d_h
        self.layers = []
        for kind in config.layers:
            if kind == "fan":
                self.layers.append(FanGcl(rng, d_h, d_e, heads, hidden))
            else:
                self.layers.append(
                    Egcl(rng, d_h, d_e, hidden, coord_hidden,
                         coord_norm=coord_norm,
                         debug_coordinate_leak=debug_coordinate_leak)
                )

    @property
    def node_out_dim(self) -> int:
        if self.config.concat_skip:
            return self.d_h * len(self.layers)
        return self.d_h

    def parameters(self, prefix: str = "stack") -> dict[str, Tensor]:
        out = {}
        for i, layer in enumerate(self.layers):
            out.update(layer.parameters(f"{prefix}.layer{i}"))
        return out

    def forward(self, h: Tensor, e: Tensor, x: Tensor, edges: np.ndarray):
        """Run all layers; returns (node features, edge features, coords)."""
        collected = []
        for layer in self.layers:
            h, e, x = layer.forward(h, e, x, edges)
            collected.append(h)
        if self.config.concat_skip:
            h = concat(collected, axis=1)
        return h, e, x
