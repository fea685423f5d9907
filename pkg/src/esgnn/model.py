"""End-to-end model: encoder, input projections, layer stack, heads."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .autodiff import Tensor, concat
from .encoder import PointEncoder
from .errors import ConfigurationError
from .graphbuild import (
    EDGE_GEO_DIM,
    NODE_NUMERIC_DIM,
    FeatureGraph,
    build_feature_graph,
    check_mode,
)
from .gnn import LayerStack, preset_config
from .heads import ClassifierHeads, GroundTruth, joint_loss, map_ground_truth
from .nn import Mlp
from .scene import DEFAULT_LABELS, LabelSpace, Scene


@dataclass(frozen=True)
class ModelConfig:
    preset: str = "esgnn1"
    mode: str = "strict"
    d_p: int = 64            # point-encoder latent width
    d_h: int = 64            # node feature width
    d_e: int = 64            # edge feature width
    heads: int = 4
    hidden: int = 64
    coord_hidden: int = 32
    encoder_hidden: int = 32
    coord_norm: bool = False
    debug_coordinate_leak: bool = False
    lambda_pred: float = 1.0

    def __post_init__(self):
        preset_config(self.preset)
        check_mode(self.mode)

    def to_dict(self) -> dict:
        return {
            "preset": self.preset,
            "mode": self.mode,
            "d_p": self.d_p,
            "d_h": self.d_h,
            "d_e": self.d_e,
            "heads": self.heads,
            "hidden": self.hidden,
            "coord_hidden": self.coord_hidden,
            "encoder_hidden": self.encoder_hidden,
            "coord_norm": self.coord_norm,
            "debug_coordinate_leak": self.debug_coordinate_leak,
            "lambda_pred": self.lambda_pred,
        }

    @staticmethod
    def from_dict(doc: dict) -> "ModelConfig":
        return ModelConfig(**doc)


# Reduced widths used by finite-difference gradient verification; small
# enough that sweeping every parameter stays fast. The encoder hidden layer
# stays at 8: much narrower and whole points go dead (every relu off), and
# dead points tie exactly in the max pool, which differencing cannot probe.
GRADCHECK_DIMS = dict(
    d_p=8, d_h=8, d_e=8, heads=2, hidden=8, coord_hidden=4, encoder_hidden=8
)


def gradcheck_config(preset: str, mode: str) -> ModelConfig:
    return ModelConfig(preset=preset, mode=mode, **GRADCHECK_DIMS)


@dataclass
class PreparedScene:
    """Parameter-independent per-scene cache."""

    scene_id: str
    graph: FeatureGraph
    gt: GroundTruth


class Model:
    def __init__(self, config: ModelConfig, seed: int = 0,
                 labels: LabelSpace = DEFAULT_LABELS):
        self.config = config
        self.labels = labels
        self.seed = int(seed)
        rng = np.random.default_rng([self.seed, 7])
        c = config
        self.encoder = PointEncoder(rng, hidden=c.encoder_hidden, out_dim=c.d_p)
        self.node_proj = Mlp([c.d_p + NODE_NUMERIC_DIM, c.d_h], ["none"], rng)
        self.edge_proj = Mlp([EDGE_GEO_DIM, c.d_e], ["none"], rng)
        self.stack = LayerStack(
            rng, preset_config(c.preset), d_h=c.d_h, d_e=c.d_e, heads=c.heads,
            hidden=c.hidden, coord_hidden=c.coord_hidden, coord_norm=c.coord_norm,
            debug_coordinate_leak=c.debug_coordinate_leak,
        )
        self.heads = ClassifierHeads(
            rng,
            node_in=self.stack.node_out_dim,
            edge_in=c.d_e,
            hidden=c.hidden,
            n_node_classes=len(labels.node_classes),
            n_edge_classes=len(labels.edge_classes),
        )

    def parameters(self) -> dict[str, Tensor]:
        out = {}
        out.update(self.encoder.parameters("encoder"))
        out.update(self.node_proj.parameters("node_proj"))
        out.update(self.edge_proj.parameters("edge_proj"))
        out.update(self.stack.parameters("stack"))
        out.update(self.heads.parameters("heads"))
        return out

    def prepare(self, scene: Scene) -> PreparedScene:
        if len(scene.labels.node_classes) != len(self.labels.node_classes):
            raise ConfigurationError(
                f"scene {scene.id} has {len(scene.labels.node_classes)} node "
                f"classes but the model expects {len(self.labels.node_classes)}"
            )
        graph = build_feature_graph(scene, self.config.mode)
        return PreparedScene(scene.id, graph, map_ground_truth(scene, graph))

    def forward(self, prep: PreparedScene) -> tuple[Tensor, Tensor]:
        """Node and edge logits for one prepared scene."""
        g = prep.graph
        latent = self.encoder.pool(g.local_points, g.point_seg, g.n_nodes)
        h = self.node_proj.forward(concat([latent, Tensor(g.node_numeric)], axis=1))
        e = self.edge_proj.forward(Tensor(g.edge_geo))
        x = Tensor(g.coords)
        h, e, x = self.stack.forward(h, e, x, g.edges)
        node_logits = self.heads.classify_nodes(h)
        edge_logits = self.heads.classify_edges(e, x, g.edges)
        return node_logits, edge_logits

    def loss(self, prep: PreparedScene, node_weights=None, edge_weights=None) -> Tensor:
        node_logits, edge_logits = self.forward(prep)
        return joint_loss(
            node_logits, edge_logits, prep.gt,
            lambda_pred=self.config.lambda_pred,
            node_weights=node_weights, edge_weights=edge_weights,
        )

    def predict_proba(self, prep: PreparedScene) -> tuple[np.ndarray, np.ndarray]:
        """Class probabilities per node and per materialized edge."""
        from .metrics import softmax_np

        node_logits, edge_logits = self.forward(prep)
        return softmax_np(node_logits.data), softmax_np(edge_logits.data)


def small_variant(config: ModelConfig) -> ModelConfig:
    """The gradcheck-size version of an existing configuration."""
    return replace(config, **GRADCHECK_DIMS)
