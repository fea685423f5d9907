"""Classification heads, ground-truth target mapping and the joint loss.

Node logits come from the stack's final node features. Edge logits see the
final edge features plus a three-value coordinate summary (squared corner
distances and the center distance) so presets that refine coordinates can
feed that refinement into the predicate decision.

Ground truth maps onto the materialized graph: every directed neighbor edge
gets at least one target ("none" when no rule fired), and a pair carrying
several predicates contributes one supervised row per predicate. Ground
truth pairs the graph never materialized are returned separately so metrics
can count them as misses.
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
    softmax_cross_entropy,
    sqrt,
)
from .errors import ContractError
from .graphbuild import FeatureGraph
from .nn import Mlp
from .scene import Scene

COORD_EMBED_DIM = 3


def coordinate_embedding(x: Tensor, edges: np.ndarray) -> Tensor:
    """[m, 3] per-edge summary: d0^2, d1^2 and the center distance."""
    src, dst = edges[:, 0], edges[:, 1]
    diff = gather_rows(x, src) - gather_rows(x, dst)    # [m, 2, 3]
    dist2 = reduce_sum(mul(diff, diff), axis=2)         # [m, 2]
    center = mul(reduce_sum(diff, axis=1), 0.5)         # [m, 3]
    cnorm = sqrt(reduce_sum(mul(center, center), axis=1, keepdims=True))
    return concat([dist2, cnorm], axis=1)


class ClassifierHeads:
    def __init__(self, rng, node_in: int, edge_in: int, hidden: int,
                 n_node_classes: int, n_edge_classes: int):
        self.node_mlp = Mlp([node_in, hidden, n_node_classes], ["relu", "none"], rng)
        self.edge_mlp = Mlp(
            [edge_in + COORD_EMBED_DIM, hidden, n_edge_classes], ["relu", "none"], rng
        )

    def parameters(self, prefix: str = "heads") -> dict[str, Tensor]:
        out = {}
        out.update(self.node_mlp.parameters(f"{prefix}.node"))
        out.update(self.edge_mlp.parameters(f"{prefix}.edge"))
        return out

    def classify_nodes(self, h: Tensor) -> Tensor:
        return self.node_mlp.forward(h)

    def classify_edges(self, e: Tensor, x: Tensor, edges: np.ndarray) -> Tensor:
        if edges.size and int(edges.max()) >= x.shape[0]:
            raise ContractError("edge list references nodes beyond coordinate rows")
        return self.edge_mlp.forward(concat([e, coordinate_embedding(x, edges)], axis=1))


@dataclass(frozen=True)
class GroundTruth:
    node_targets: np.ndarray            # [n] class per node row
    edge_rows: np.ndarray               # [k] graph edge rows (with duplicates)
    edge_targets: np.ndarray            # [k] predicate class per row entry
    missing: tuple[tuple[int, int, int], ...]  # gt (src row, predicate, dst row)
    # pairs the graph did not materialize


def map_ground_truth(scene: Scene, graph: FeatureGraph) -> GroundTruth:
    node_targets = np.array([seg.gt_class for seg in scene.segments], dtype=np.int64)
    row_of = {seg_id: i for i, seg_id in enumerate(graph.seg_ids)}

    by_pair: dict[tuple[int, int], list[int]] = {}
    for src_id, pred, dst_id in scene.gt_edges:
        by_pair.setdefault((row_of[src_id], row_of[dst_id]), []).append(pred)

    edge_rows: list[int] = []
    edge_targets: list[int] = []
    seen: set[tuple[int, int]] = set()
    for r in range(graph.edges.shape[0]):
        i, j = int(graph.edges[r, 0]), int(graph.edges[r, 1])
        seen.add((i, j))
        for pred in sorted(by_pair.get((i, j), [0])):
            edge_rows.append(r)
            edge_targets.append(pred)

    missing = tuple(
        sorted(
            (i, pred, j)
            for (i, j), preds in by_pair.items()
            if (i, j) not in seen
            for pred in preds
        )
    )
    return GroundTruth(
        node_targets=node_targets,
        edge_rows=np.array(edge_rows, dtype=np.int64),
        edge_targets=np.array(edge_targets, dtype=np.int64),
        missing=missing,
    )


def joint_loss(
    node_logits: Tensor,
    edge_logits: Tensor,
    gt: GroundTruth,
    lambda_pred: float = 1.0,
    node_weights=None,
    edge_weights=None,
) -> Tensor:
    """Node cross entropy plus ``lambda_pred`` times the predicate term.

    Scenes whose graph has no edges simply drop the predicate term.
    """
    loss = softmax_cross_entropy(node_logits, gt.node_targets, node_weights)
    if gt.edge_rows.size:
        supervised = gather_rows(edge_logits, gt.edge_rows)
        loss = loss + mul(
            softmax_cross_entropy(supervised, gt.edge_targets, edge_weights),
            float(lambda_pred),
        )
    return loss
