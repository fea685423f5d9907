"""Scene types, segment geometry and rule-based ground-truth predicates.

A scene is a set of labeled point-cloud segments plus directed ground-truth
edges (source id, predicate class index, target id). Predicates are derived
from geometry alone so they stay consistent under rigid motion of the whole
scene (yaw + translation for the gravity-dependent support rule).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.spatial import cKDTree
from shapely.geometry import MultiPoint

from .errors import (
    DomainError,
    SceneFormatError,
    SceneValidationError,
    SchemaVersionError,
)
from .geometry import Transform, canonical_basis, require_full_rank

SCENE_SCHEMA = "esgnn-scene/1"

DEFAULT_NODE_CLASSES = (
    "floor", "wall", "table", "chair", "shelf", "box", "lamp", "ball",
)
DEFAULT_EDGE_CLASSES = (
    "none", "supported-by", "close-by", "bigger-than", "same-class-as",
)

# Epsilon inflation applied to every bounding-box side so degenerate extents
# never produce zero sizes or volumes.
BBOX_EPS = 1e-6

# Points within this height band of a segment's extreme z count as its bottom
# or top face. Averaging over the band keeps face heights stable under the
# surface jitter the generator applies.
FACE_BAND = 0.02


@dataclass(frozen=True)
class LabelSpace:
    node_classes: tuple[str, ...] = DEFAULT_NODE_CLASSES
    edge_classes: tuple[str, ...] = DEFAULT_EDGE_CLASSES

    def __post_init__(self):
        object.__setattr__(self, "node_classes", tuple(self.node_classes))
        object.__setattr__(self, "edge_classes", tuple(self.edge_classes))
        if len(set(self.node_classes)) != len(self.node_classes):
            raise SceneValidationError("duplicate node class names")
        if len(set(self.edge_classes)) != len(self.edge_classes):
            raise SceneValidationError("duplicate edge class names")
        if not self.node_classes:
            raise SceneValidationError("empty node class list")
        if not self.edge_classes or self.edge_classes[0] != "none":
            raise SceneValidationError('edge class 0 must be "none"')

    def node_index(self, name: str) -> int:
        return self.node_classes.index(name)

    def edge_index(self, name: str) -> int:
        return self.edge_classes.index(name)


DEFAULT_LABELS = LabelSpace()


@dataclass(frozen=True)
class Segment:
    """One object instance: points, per-point colors, ground-truth class."""

    id: int
    points: np.ndarray
    colors: np.ndarray
    gt_class: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        cols = np.asarray(self.colors, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise SceneValidationError(f"segment {self.id}: points must be n x 3")
        if pts.shape[0] < 8:
            raise SceneValidationError(
                f"segment {self.id}: needs at least 8 points, got {pts.shape[0]}"
            )
        if cols.shape != pts.shape:
            raise SceneValidationError(f"segment {self.id}: colors must match points")
        if not np.isfinite(pts).all() or not np.isfinite(cols).all():
            raise SceneValidationError(f"segment {self.id}: non-finite values")
        if cols.min() < 0.0 or cols.max() > 1.0:
            raise SceneValidationError(f"segment {self.id}: colors outside [0, 1]")
        if self.gt_class < 0:
            raise SceneValidationError(f"segment {self.id}: negative class index")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", cols)


@dataclass(frozen=True)
class Scene:
    id: str
    segments: tuple[Segment, ...]
    gt_edges: tuple[tuple[int, int, int], ...]
    labels: LabelSpace = field(default_factory=LabelSpace)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        object.__setattr__(
            self, "gt_edges", tuple(tuple(int(v) for v in e) for e in self.gt_edges)
        )
        ids = [s.id for s in self.segments]
        if len(set(ids)) != len(ids):
            raise SceneValidationError(f"scene {self.id}: duplicate segment ids")
        known = set(ids)
        for seg in self.segments:
            if seg.gt_class >= len(self.labels.node_classes):
                raise SceneValidationError(
                    f"scene {self.id}: segment {seg.id} class {seg.gt_class} "
                    f"outside {len(self.labels.node_classes)} node classes"
                )
        for src, pred, dst in self.gt_edges:
            for end in (src, dst):
                if end not in known:
                    raise SceneValidationError(
                        f"scene {self.id}: edge references missing segment id {end}"
                    )
            if src == dst:
                raise SceneValidationError(f"scene {self.id}: self edge on {src}")
            if not (0 <= pred < len(self.labels.edge_classes)):
                raise SceneValidationError(
                    f"scene {self.id}: predicate index {pred} outside "
                    f"{len(self.labels.edge_classes)} edge classes"
                )

    def segment_by_id(self, seg_id: int) -> Segment:
        for seg in self.segments:
            if seg.id == seg_id:
                return seg
        raise KeyError(seg_id)


@dataclass(frozen=True)
class SegmentProperties:
    """Geometric summary of one segment in a chosen frame."""

    centroid: np.ndarray      # world-frame mean point
    std: np.ndarray           # per-axis standard deviation in the frame
    bbox_size: np.ndarray     # per-axis extent (epsilon inflated)
    max_length: float         # largest extent
    volume: float             # product of extents
    corners: np.ndarray       # 2 x 3 world points: frame (min,min,min), (max,max,max)
    frame: str                # "world" | "canonical"


def compute_segment_properties(segment: Segment, frame: str = "world") -> SegmentProperties:
    """Centroid, spread, box extents and the two world-space box corners.

    The canonical frame expresses points in the segment's PCA eigenbasis
    before measuring, so its values do not change when the segment rotates.
    """
    if frame not in ("world", "canonical"):
        raise DomainError(f"unknown frame {frame!r}")
    pts = segment.points
    centroid, basis, eigvals = canonical_basis(pts)
    require_full_rank(eigvals, context=f"segment {segment.id}")
    if frame == "world":
        basis = np.eye(3)
    local = (pts - centroid) @ basis
    lo = local.min(axis=0) - BBOX_EPS
    hi = local.max(axis=0) + BBOX_EPS
    size = hi - lo
    corners = np.stack([centroid + basis @ lo, centroid + basis @ hi])
    return SegmentProperties(
        centroid=centroid,
        std=local.std(axis=0),
        bbox_size=size,
        max_length=float(size.max()),
        volume=float(size.prod()),
        corners=corners,
        frame=frame,
    )


def apply_transform(scene: Scene, t: Transform) -> Scene:
    """Rigidly move every segment; classes, colors and gt edges are unchanged."""
    segments = tuple(
        replace(seg, points=t.apply(seg.points)) for seg in scene.segments
    )
    return replace(scene, segments=segments)


@dataclass(frozen=True)
class PredicateThresholds:
    support_gap: float = 0.02      # max |bottom_i - top_j| for support
    close_distance: float = 0.5    # min inter-cloud distance for close-by
    bigger_ratio: float = 2.0      # volume ratio strictly above => bigger-than


def _footprint(points: np.ndarray):
    return MultiPoint(points[:, :2]).convex_hull


def derive_gt_predicates(
    segments,
    labels: LabelSpace = DEFAULT_LABELS,
    thresholds: PredicateThresholds = PredicateThresholds(),
) -> tuple[tuple[int, int, int], ...]:
    """Rule-based directed predicates between every ordered segment pair.

    For an ordered pair (i, j):
      supported-by   bottom face of i within ``support_gap`` of the top face
                     of j and the horizontal footprints intersect,
      close-by       minimum inter-cloud distance below ``close_distance``
                     and neither segment supports the other,
      bigger-than    volume ratio strictly above ``bigger_ratio``,
      same-class-as  equal classes and no bigger-than in either direction.

    Face heights are band means around the extreme z values so surface
    jitter does not mask contact; volumes come from the canonical frame so
    the rules commute with yaw rotations and translations of the whole scene.
    """
    segments = list(segments)
    n = len(segments)
    sup = labels.edge_index("supported-by")
    close = labels.edge_index("close-by")
    bigger = labels.edge_index("bigger-than")
    same = labels.edge_index("same-class-as")

    volumes = []
    bottoms = []
    tops = []
    hulls = []
    trees = []
    for seg in segments:
        props = compute_segment_properties(seg, frame="canonical")
        volumes.append(props.volume)
        z = seg.points[:, 2]
        bottoms.append(float(z[z <= z.min() + FACE_BAND].mean()))
        tops.append(float(z[z >= z.max() - FACE_BAND].mean()))
        hulls.append(_footprint(seg.points))
        trees.append(cKDTree(seg.points))

    supported = np.zeros((n, n), dtype=bool)
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            if abs(bottoms[i] - tops[j]) <= thresholds.support_gap and hulls[i].intersects(hulls[j]):
                supported[i, j] = True

    edges: list[tuple[int, int, int]] = []
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            si, sj = segments[i], segments[j]
            if supported[i, j]:
                edges.append((si.id, sup, sj.id))
            if i < j:
                dmin = float(np.min(trees[j].query(si.points, k=1)[0]))
                if dmin < thresholds.close_distance and not supported[i, j] and not supported[j, i]:
                    edges.append((si.id, close, sj.id))
                    edges.append((sj.id, close, si.id))
            if volumes[i] > thresholds.bigger_ratio * volumes[j]:
                edges.append((si.id, bigger, sj.id))
            if (
                si.gt_class == sj.gt_class
                and volumes[i] <= thresholds.bigger_ratio * volumes[j]
                and volumes[j] <= thresholds.bigger_ratio * volumes[i]
            ):
                edges.append((si.id, same, sj.id))
    return tuple(sorted(edges))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "schema": SCENE_SCHEMA,
        "id": scene.id,
        "node_classes": list(scene.labels.node_classes),
        "edge_classes": list(scene.labels.edge_classes),
        "segments": [
            {
                "id": seg.id,
                "class": seg.gt_class,
                "points": seg.points.tolist(),
                "colors": seg.colors.tolist(),
            }
            for seg in scene.segments
        ],
        "gt_edges": [list(e) for e in scene.gt_edges],
    }


def scene_from_dict(doc: dict, origin: str = "<memory>") -> Scene:
    if not isinstance(doc, dict):
        raise SceneFormatError(f"{origin}: top level must be an object")
    schema = doc.get("schema")
    if schema != SCENE_SCHEMA:
        raise SchemaVersionError(
            f"{origin}: schema {schema!r} is not {SCENE_SCHEMA!r}"
        )
    required = ("id", "node_classes", "edge_classes", "segments", "gt_edges")
    for key in required:
        if key not in doc:
            raise SceneFormatError(f"{origin}: missing field {key!r}")
    labels = LabelSpace(tuple(doc["node_classes"]), tuple(doc["edge_classes"]))
    try:
        segments = tuple(
            Segment(
                id=int(s["id"]),
                points=np.asarray(s["points"], dtype=np.float64),
                colors=np.asarray(s["colors"], dtype=np.float64),
                gt_class=int(s["class"]),
            )
            for s in doc["segments"]
        )
        edges = tuple((int(e[0]), int(e[1]), int(e[2])) for e in doc["gt_edges"])
    except (KeyError, TypeError, ValueError) as exc:
        raise SceneFormatError(f"{origin}: malformed segment or edge entry: {exc}") from exc
    return Scene(id=str(doc["id"]), segments=segments, gt_edges=edges, labels=labels)


def save_scene(scene: Scene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh)


def load_scene(path) -> Scene:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(
            f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}"
        ) from exc
    return scene_from_dict(doc, origin=str(path))
