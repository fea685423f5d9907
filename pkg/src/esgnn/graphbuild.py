"""Scene-to-graph assembly.

Converts a scene into the static arrays the model consumes: neighbor edges,
numeric node features, pairwise edge features, per-node coordinate channels
and the concatenated local point blocks for the encoder. Everything here is
parameter independent, so it is computed once per scene and cached.

Two modes control the geometry features:

* ``paper``: world-frame boxes and raw centroid offsets. Translation
  invariant only.
* ``strict``: each segment measured in its own PCA frame, offsets reduced
  to their norm. Invariant under rotation + translation end to end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .encoder import segment_local_points
from .errors import ConfigurationError
from .scene import Scene, compute_segment_properties

MODES = ("strict", "paper")
NEIGHBOR_RADIUS = 0.5

NODE_NUMERIC_DIM = 8   # std(3) + ln size(3) + ln volume + ln max length
EDGE_GEO_DIM = 11      # offset(3) + std diff(3) + size diff(3) + 2 log ratios


def check_mode(mode: str) -> str:
    if mode not in MODES:
        raise ConfigurationError(f"unknown mode {mode!r}; choose from {MODES}")
    return mode


@dataclass
class FeatureGraph:
    mode: str
    n_nodes: int
    seg_ids: tuple[int, ...]          # scene segment id per node row
    edges: np.ndarray                 # [m, 2] int64, lexicographically sorted
    node_numeric: np.ndarray          # [n, 8]
    edge_geo: np.ndarray              # [m, 11]
    coords: np.ndarray                # [n, 2, 3] box corners in world space
    local_points: np.ndarray          # [P, 3] encoder input blocks
    point_seg: np.ndarray             # [P] row index per point

    def edge_row(self, src: int, dst: int) -> int | None:
        """Row of directed edge (src, dst) given as node rows, or None."""
        m = self.edges.shape[0]
        lo = np.searchsorted(self.edges[:, 0], src, side="left")
        hi = np.searchsorted(self.edges[:, 0], src, side="right")
        for r in range(lo, hi):
            if self.edges[r, 1] == dst:
                return int(r)
        return None


def neighbor_pairs(scene: Scene, mode: str, radius: float = NEIGHBOR_RADIUS) -> list[tuple[int, int]]:
    """Unordered node-row pairs closer than ``radius``.

    strict uses the exact minimum point distance; paper uses the distance
    between world axis-aligned boxes, a cheaper lower bound.
    """
    n = len(scene.segments)
    pairs = []
    if mode == "strict":
        trees = [cKDTree(seg.points) for seg in scene.segments]
        for i in range(n):
            for j in range(i + 1, n):
                d = float(np.min(trees[j].query(scene.segments[i].points, k=1)[0]))
                if d < radius:
                    pairs.append((i, j))
    else:
        lo = [seg.points.min(axis=0) for seg in scene.segments]
        hi = [seg.points.max(axis=0) for seg in scene.segments]
        for i in range(n):
            for j in range(i + 1, n):
                gap = np.maximum(0.0, np.maximum(lo[i] - hi[j], lo[j] - hi[i]))
                if float(np.linalg.norm(gap)) < radius:
                    pairs.append((i, j))
    return pairs


def build_feature_graph(scene: Scene, mode: str, radius: float = NEIGHBOR_RADIUS) -> FeatureGraph:
    check_mode(mode)
    frame = "canonical" if mode == "strict" else "world"
    segs = scene.segments
    n = len(segs)
    props = [compute_segment_properties(seg, frame) for seg in segs]

    node_numeric = np.empty((n, NODE_NUMERIC_DIM))
    coords = np.empty((n, 2, 3))
    for i, p in enumerate(props):
        node_numeric[i] = np.concatenate(
            [p.std, np.log(p.bbox_size), [np.log(p.volume)], [np.log(p.max_length)]]
        )
        coords[i] = p.corners

    directed = []
    for i, j in neighbor_pairs(scene, mode, radius):
        directed.append((i, j))
        directed.append((j, i))
    directed.sort()
    edges = np.array(directed, dtype=np.int64).reshape(len(directed), 2)

    edge_geo = np.empty((len(directed), EDGE_GEO_DIM))
    for r, (i, j) in enumerate(directed):
        pi, pj = props[i], props[j]
        offset = pi.centroid - pj.centroid
        if mode == "strict":
            offset = np.array([np.linalg.norm(offset), 0.0, 0.0])
        edge_geo[r] = np.concatenate(
            [
                offset,
                pi.std - pj.std,
                pi.bbox_size - pj.bbox_size,
                [np.log(pi.max_length) - np.log(pj.max_length)],
                [np.log(pi.volume) - np.log(pj.volume)],
            ]
        )

    blocks = [segment_local_points(seg.points, frame) for seg in segs]
    point_seg = np.concatenate(
        [np.full(b.shape[0], i, dtype=np.int64) for i, b in enumerate(blocks)]
    )
    return FeatureGraph(
        mode=mode,
        n_nodes=n,
        seg_ids=tuple(seg.id for seg in segs),
        edges=edges,
        node_numeric=node_numeric,
        edge_geo=edge_geo,
        coords=coords,
        local_points=np.concatenate(blocks, axis=0),
        point_seg=point_seg,
    )
