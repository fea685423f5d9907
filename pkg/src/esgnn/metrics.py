"""Evaluation metrics: micro recall, recall at rank, triplet recall.

Rank ties always resolve toward the lower class index, and triplet ties
toward the lexicographically smaller (subject, predicate, object) triple,
so every metric is deterministic. Triplet recall ranks the ground-truth
triple of a pair against all class combinations for that pair; ground-truth
pairs the graph never materialized count as automatic misses.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graphbuild import FeatureGraph
from .heads import GroundTruth


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def rank_of_class(probs: np.ndarray, cls: int) -> int:
    """1-based rank of ``cls`` when classes are sorted by probability.

    Classes tied with the target rank ahead of it only when their index is
    lower.
    """
    pt = probs[cls]
    return int((probs > pt).sum() + (probs[:cls] == pt).sum() + 1)


def triplet_rank(
    subj_probs: np.ndarray,
    edge_probs: np.ndarray,
    obj_probs: np.ndarray,
    subj_cls: int,
    pred_cls: int,
    obj_cls: int,
) -> int:
    """Rank of the gt triple among all (class, predicate, class) combinations.

    Candidate predicates exclude class 0 ("none"); scores are the products
    of the three probabilities. Counting beats sorting for large candidate
    sets and ties break toward lexicographically smaller triples.
    """
    scores = (
        subj_probs[:, None, None] * edge_probs[None, 1:, None] * obj_probs[None, None, :]
    )
    target = subj_probs[subj_cls] * edge_probs[pred_cls] * obj_probs[obj_cls]
    greater = int((scores > target).sum())
    ahead = 0
    for a, b, c in np.argwhere(scores == target):
        if (int(a), int(b) + 1, int(c)) < (subj_cls, pred_cls, obj_cls):
            ahead += 1
    return greater + ahead + 1


@dataclass(frozen=True)
class MetricsReport:
    node_count: int
    edge_count: int
    node_recall: float | None
    edge_recall: float | None
    node_r_at: dict[int, float | None]
    edge_r_at: dict[int, float | None]
    triplet_count: int
    triplet_unmaterialized: int
    triplet_r_at: dict[int, float | None]

    def to_dict(self) -> dict:
        return {
            "node_count": self.node_count,
            "edge_count": self.edge_count,
            "node_recall": self.node_recall,
            "edge_recall": self.edge_recall,
            "node_r_at": {str(k): v for k, v in self.node_r_at.items()},
            "edge_r_at": {str(k): v for k, v in self.edge_r_at.items()},
            "triplet_count": self.triplet_count,
            "triplet_unmaterialized": self.triplet_unmaterialized,
            "triplet_r_at": {str(k): v for k, v in self.triplet_r_at.items()},
        }


class MetricsAccumulator:
    """Streams per-scene predictions into one corpus-level report."""

    def __init__(self, node_r=(1, 2, 3), edge_r=(1, 2, 3), triplet_r=(1, 3, 5)):
        self.node_r = tuple(node_r)
        self.edge_r = tuple(edge_r)
        self.triplet_r = tuple(triplet_r)
        self.node_total = 0
        self.node_correct = 0
        self.node_hits = {x: 0 for x in self.node_r}
        self.edge_total = 0
        self.edge_correct = 0
        self.edge_hits = {x: 0 for x in self.edge_r}
        self.triplet_total = 0
        self.triplet_unmaterialized = 0
        self.triplet_hits = {x: 0 for x in self.triplet_r}

    def update(
        self,
        graph: FeatureGraph,
        gt: GroundTruth,
        node_probs: np.ndarray,
        edge_probs: np.ndarray,
    ) -> None:
        node_pred = node_probs.argmax(axis=1)
        for i, target in enumerate(gt.node_targets):
            self.node_total += 1
            if node_pred[i] == target:
                self.node_correct += 1
            rank = rank_of_class(node_probs[i], int(target))
            for x in self.node_r:
                if rank <= x:
                    self.node_hits[x] += 1

        if gt.edge_rows.size:
            edge_pred = edge_probs.argmax(axis=1)
            for r, target in zip(gt.edge_rows, gt.edge_targets):
                self.edge_total += 1
                if edge_pred[r] == target:
                    self.edge_correct += 1
                rank = rank_of_class(edge_probs[r], int(target))
                for x in self.edge_r:
                    if rank <= x:
                        self.edge_hits[x] += 1

        for r, target in zip(gt.edge_rows, gt.edge_targets):
            if target == 0:
                continue
            i, j = int(graph.edges[r, 0]), int(graph.edges[r, 1])
            self.triplet_total += 1
            rank = triplet_rank(
                node_probs[i], edge_probs[r], node_probs[j],
                int(gt.node_targets[i]), int(target), int(gt.node_targets[j]),
            )
            for x in self.triplet_r:
                if rank <= x:
                    self.triplet_hits[x] += 1
        for _i, _pred, _j in gt.missing:
            self.triplet_total += 1
            self.triplet_unmaterialized += 1

    @staticmethod
    def _ratio(hits: int, total: int) -> float | None:
        return hits / total if total else None

    def report(self) -> MetricsReport:
        return MetricsReport(
            node_count=self.node_total,
            edge_count=self.edge_total,
            node_recall=self._ratio(self.node_correct, self.node_total),
            edge_recall=self._ratio(self.edge_correct, self.edge_total),
            node_r_at={x: self._ratio(h, self.node_total) for x, h in self.node_hits.items()},
            edge_r_at={x: self._ratio(h, self.edge_total) for x, h in self.edge_hits.items()},
            triplet_count=self.triplet_total,
            triplet_unmaterialized=self.triplet_unmaterialized,
            triplet_r_at={
                x: self._ratio(h, self.triplet_total) for x, h in self.triplet_hits.items()
            },
        )
