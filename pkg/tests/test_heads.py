"""Classifier heads, ground-truth mapping onto graphs, and the joint loss."""

import math

import numpy as np
import pytest

from esgnn.autodiff import Tensor
from esgnn.errors import ContractError
from esgnn.graphbuild import build_feature_graph
from esgnn.heads import (
    COORD_EMBED_DIM,
    ClassifierHeads,
    coordinate_embedding,
    joint_loss,
    map_ground_truth,
)
from esgnn.scene import DEFAULT_LABELS
from helpers import box_segment, make_scene, mlp_oracle, softmax_oracle

CLOSE = DEFAULT_LABELS.edge_index("close-by")
SAME = DEFAULT_LABELS.edge_index("same-class-as")
N_NODE = len(DEFAULT_LABELS.node_classes)
N_EDGE = len(DEFAULT_LABELS.edge_classes)


def test_coordinate_embedding_hand_values():
    x = np.zeros((2, 2, 3))
    x[0] = [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]]
    x[1] = [[2.0, 0.0, 0.0], [1.0, 3.0, 1.0]]
    edges = np.array([[0, 1]], dtype=np.int64)
    emb = coordinate_embedding(Tensor(x), edges).data
    assert emb.shape == (1, COORD_EMBED_DIM)
    # diffs are (-2,0,0) and (0,-2,0): squared lengths 4 and 4
    np.testing.assert_allclose(emb[0, :2], [4.0, 4.0], atol=1e-12)
    # center offset is the mean diff (-1,-1,0), norm sqrt(2)
    assert emb[0, 2] == pytest.approx(math.sqrt(2.0), abs=1e-12)


def test_coordinate_embedding_is_rigid_motion_invariant():
    from esgnn.geometry import random_rotation

    rng = np.random.default_rng(0)
    x = rng.normal(size=(4, 2, 3))
    edges = np.array([[0, 1], [2, 3], [3, 0]], dtype=np.int64)
    base = coordinate_embedding(Tensor(x), edges).data
    for _ in range(5):
        r = random_rotation(rng)
        moved = x @ r.T + rng.uniform(-5, 5, size=3)
        out = coordinate_embedding(Tensor(moved), edges).data
        np.testing.assert_allclose(out, base, atol=1e-9)


def two_box_graph():
    scene = make_scene(
        [
            box_segment(1, (0.0, 0.0, 0.5), (1, 1, 1), gt_class=3),
            box_segment(2, (1.3, 0.0, 0.5), (1, 1, 1), gt_class=4),
        ],
        [(1, CLOSE, 2), (2, CLOSE, 1)],
    )
    return scene, build_feature_graph(scene, "strict")


def test_zero_parameter_heads_yield_uniform_probabilities():
    heads = ClassifierHeads(np.random.default_rng(0), node_in=6, edge_in=4,
                            hidden=5, n_node_classes=N_NODE, n_edge_classes=N_EDGE)
    for p in heads.parameters().values():
        p.data[:] = 0.0
    h = Tensor(np.random.default_rng(1).normal(size=(3, 6)))
    logits = heads.classify_nodes(h).data
    assert np.all(logits == 0.0)

    e = Tensor(np.random.default_rng(2).normal(size=(2, 4)))
    x = Tensor(np.random.default_rng(3).normal(size=(3, 2, 3)))
    edges = np.array([[0, 1], [1, 2]], dtype=np.int64)
    elogits = heads.classify_edges(e, x, edges).data
    assert np.all(elogits == 0.0)


def test_heads_match_straight_line_recomputation():
    rng = np.random.default_rng(4)
    heads = ClassifierHeads(rng, node_in=6, edge_in=4, hidden=5,
                            n_node_classes=N_NODE, n_edge_classes=N_EDGE)
    h = rng.normal(size=(1, 6))
    np.testing.assert_allclose(
        heads.classify_nodes(Tensor(h)).data, mlp_oracle(heads.node_mlp, h),
        atol=1e-12,
    )

    e = rng.normal(size=(1, 4))
    x = rng.normal(size=(2, 2, 3))
    edges = np.array([[0, 1]], dtype=np.int64)
    emb = coordinate_embedding(Tensor(x), edges).data
    expected = mlp_oracle(heads.edge_mlp, np.concatenate([e, emb], axis=1))
    np.testing.assert_allclose(
        heads.classify_edges(Tensor(e), Tensor(x), edges).data, expected,
        atol=1e-12,
    )


def test_empty_node_batch_is_fine():
    heads = ClassifierHeads(np.random.default_rng(5), node_in=6, edge_in=4,
                            hidden=5, n_node_classes=N_NODE, n_edge_classes=N_EDGE)
    out = heads.classify_nodes(Tensor(np.zeros((0, 6))))
    assert out.data.shape == (0, N_NODE)


def test_classify_edges_checks_node_references():
    heads = ClassifierHeads(np.random.default_rng(6), node_in=6, edge_in=4,
                            hidden=5, n_node_classes=N_NODE, n_edge_classes=N_EDGE)
    with pytest.raises(ContractError):
        heads.classify_edges(
            Tensor(np.zeros((1, 4))),
            Tensor(np.zeros((2, 2, 3))),
            np.array([[0, 5]], dtype=np.int64),
        )


# --------------------------------------------------------- ground truth


def test_ground_truth_maps_classes_and_edges():
    scene, graph = two_box_graph()
    gt = map_ground_truth(scene, graph)
    assert gt.node_targets.tolist() == [3, 4]
    # both directed rows supervised with close-by, no padding rows
    assert gt.edge_rows.tolist() == [0, 1]
    assert gt.edge_targets.tolist() == [CLOSE, CLOSE]
    assert gt.missing == ()


def test_unlabeled_materialized_edges_get_none_target():
    scene = make_scene(
        [
            box_segment(1, (0.0, 0.0, 0.5), (1, 1, 1), gt_class=3),
            box_segment(2, (1.3, 0.0, 0.5), (1, 1, 1), gt_class=4),
        ],
        [],  # geometry makes edges, labels say nothing
    )
    graph = build_feature_graph(scene, "strict")
    gt = map_ground_truth(scene, graph)
    assert gt.edge_rows.tolist() == [0, 1]
    assert gt.edge_targets.tolist() == [0, 0]


def test_multi_predicate_pairs_duplicate_their_row():
    scene = make_scene(
        [
            box_segment(1, (0.0, 0.0, 0.5), (1, 1, 1), gt_class=3),
            box_segment(2, (1.3, 0.0, 0.5), (1, 1, 1), gt_class=3),
        ],
        [(1, CLOSE, 2), (1, SAME, 2), (2, CLOSE, 1), (2, SAME, 1)],
    )
    graph = build_feature_graph(scene, "strict")
    gt = map_ground_truth(scene, graph)
    assert gt.edge_rows.tolist() == [0, 0, 1, 1]
    # per-row predicate lists come out sorted
    assert gt.edge_targets.tolist() == sorted([CLOSE, SAME]) * 2


def test_gt_pairs_beyond_radius_are_reported_missing():
    scene = make_scene(
        [
            box_segment(1, (0.0, 0.0, 0.5), (1, 1, 1), gt_class=3),
            box_segment(2, (10.0, 0.0, 0.5), (1, 1, 1), gt_class=3),
        ],
        [(1, SAME, 2), (2, SAME, 1)],
    )
    graph = build_feature_graph(scene, "strict")
    gt = map_ground_truth(scene, graph)
    assert gt.edge_rows.size == 0
    assert gt.missing == ((0, SAME, 1), (1, SAME, 0))


# ------------------------------------------------------------ joint loss


def test_joint_loss_uniform_logits_is_sum_of_logs():
    scene, graph = two_box_graph()
    gt = map_ground_truth(scene, graph)
    node_logits = Tensor(np.zeros((2, N_NODE)))
    edge_logits = Tensor(np.zeros((2, N_EDGE)))
    loss = joint_loss(node_logits, edge_logits, gt)
    np.testing.assert_allclose(
        float(loss.data), math.log(N_NODE) + math.log(N_EDGE), atol=1e-12
    )


def test_joint_loss_saturated_correct_logits_vanishes():
    scene, graph = two_box_graph()
    gt = map_ground_truth(scene, graph)
    node_logits = np.full((2, N_NODE), -1000.0)
    for i, t in enumerate(gt.node_targets):
        node_logits[i, t] = 1000.0
    edge_logits = np.full((2, N_EDGE), -1000.0)
    for r, t in zip(gt.edge_rows, gt.edge_targets):
        edge_logits[r, t] = 1000.0
    loss = joint_loss(Tensor(node_logits), Tensor(edge_logits), gt)
    assert float(loss.data) < 1e-6


def test_joint_loss_lambda_scales_edge_term():
    scene, graph = two_box_graph()
    gt = map_ground_truth(scene, graph)
    rng = np.random.default_rng(8)
    nl = Tensor(rng.normal(size=(2, N_NODE)))
    el = Tensor(rng.normal(size=(2, N_EDGE)))
    base = float(joint_loss(nl, el, gt, lambda_pred=0.0).data)
    half = float(joint_loss(nl, el, gt, lambda_pred=0.5).data)
    full = float(joint_loss(nl, el, gt, lambda_pred=1.0).data)
    assert full - base == pytest.approx(2.0 * (half - base), rel=1e-12)


def test_joint_loss_weighted_matches_hand_formula():
    scene, graph = two_box_graph()
    gt = map_ground_truth(scene, graph)
    rng = np.random.default_rng(9)
    nl = rng.normal(size=(2, N_NODE))
    el = rng.normal(size=(2, N_EDGE))
    w = np.ones(N_EDGE)
    w[CLOSE] = 2.0

    loss = joint_loss(Tensor(nl), Tensor(el), gt, edge_weights=w)

    def ce(row, t, weight):
        return -weight * math.log(softmax_oracle(row)[t])

    node_term = sum(ce(nl[i], t, 1.0) for i, t in enumerate(gt.node_targets)) / 2
    num = sum(ce(el[r], t, w[t]) for r, t in zip(gt.edge_rows, gt.edge_targets))
    den = sum(w[t] for t in gt.edge_targets)
    np.testing.assert_allclose(float(loss.data), node_term + num / den, rtol=1e-12)


def test_joint_loss_without_edges_drops_predicate_term():
    scene = make_scene([box_segment(1, (0, 0, 0), (1, 1, 1), gt_class=3)])
    graph = build_feature_graph(scene, "strict")
    gt = map_ground_truth(scene, graph)
    loss = joint_loss(Tensor(np.zeros((1, N_NODE))), Tensor(np.zeros((0, N_EDGE))), gt)
    np.testing.assert_allclose(float(loss.data), math.log(N_NODE), atol=1e-12)
