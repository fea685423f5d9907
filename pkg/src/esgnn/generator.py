"""Procedural indoor scenes: a floor slab, optional walls, furniture on the
floor, an optional stacked rider and one or two deliberately close pairs.

Every scene is built from three surface primitives (box, cylinder, sphere)
sampled with area-weighted point counts, jittered, and labeled by the rule
engine in :mod:`esgnn.scene`. All randomness flows through the single
``numpy.random.Generator`` passed in, so a scene is a pure function of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from shapely import affinity
from shapely.geometry import Polygon

from .scene import (
    DEFAULT_LABELS,
    LabelSpace,
    PredicateThresholds,
    Scene,
    Segment,
    derive_gt_predicates,
)

# Base colors per class; per-point noise is added on top.
CLASS_COLORS = {
    "floor": (0.50, 0.50, 0.50),
    "wall": (0.85, 0.85, 0.80),
    "table": (0.55, 0.35, 0.20),
    "chair": (0.70, 0.20, 0.20),
    "shelf": (0.30, 0.50, 0.70),
    "box": (0.80, 0.60, 0.30),
    "lamp": (0.90, 0.90, 0.50),
    "ball": (0.20, 0.70, 0.30),
}

# Classes eligible for free placement on the floor.
FLOOR_CLASSES = ("table", "chair", "shelf", "box", "lamp", "ball")

# Cross-class combinations whose size ranges overlap enough to force the
# close-pair volume ratio into the no-bigger-than band.
CLOSE_PAIR_CLASSES = (
    ("box", "ball"),
    ("box", "lamp"),
    ("lamp", "ball"),
    ("chair", "lamp"),
    ("chair", "shelf"),
    ("table", "shelf"),
)


@dataclass(frozen=True)
class GeneratorConfig:
    floor_side: tuple[float, float] = (7.0, 10.0)
    floor_thickness: tuple[float, float] = (0.08, 0.12)
    wall_count: tuple[int, int] = (0, 2)
    wall_length: tuple[float, float] = (2.0, 4.0)
    wall_thickness: tuple[float, float] = (0.04, 0.06)
    wall_height: tuple[float, float] = (2.2, 2.8)
    wall_inset: float = 0.2
    object_count: tuple[int, int] = (3, 7)
    object_inset: float = 1.6
    sibling_gap: float = 0.6
    close_pair_count: tuple[int, int] = (1, 2)
    close_gap: tuple[float, float] = (0.12, 0.33)
    close_same_class_prob: float = 0.25
    # Ratio band that keeps close pairs clear of the bigger-than rule.
    close_volume_ratio: tuple[float, float] = (0.6, 1.67)
    stack_prob: float = 0.65
    rider_inset: float = 0.08
    base_points: int = 256
    min_points: int = 128
    max_points: int = 1024
    jitter: float = 0.005
    color_noise: float = 0.05
    thresholds: PredicateThresholds = field(default_factory=PredicateThresholds)


def sample_box_surface(rng: np.random.Generator, size, n: int) -> np.ndarray:
    """n points on the surface of an origin-centered axis-aligned box."""
    w, d, h = size
    areas = np.array([d * h, d * h, w * h, w * h, w * d, w * d])
    face = rng.choice(6, size=n, p=areas / areas.sum())
    u = rng.uniform(-0.5, 0.5, size=n)
    v = rng.uniform(-0.5, 0.5, size=n)
    sign = np.where(face % 2 == 0, -0.5, 0.5)
    pts = np.empty((n, 3))
    on_x = face < 2
    on_y = (face >= 2) & (face < 4)
    on_z = face >= 4
    pts[on_x] = np.column_stack([sign[on_x] * w, u[on_x] * d, v[on_x] * h])
    pts[on_y] = np.column_stack([u[on_y] * w, sign[on_y] * d, v[on_y] * h])
    pts[on_z] = np.column_stack([u[on_z] * w, v[on_z] * d, sign[on_z] * h])
    return pts


def sample_cylinder_surface(rng: np.random.Generator, radius: float, height: float, n: int) -> np.ndarray:
    """n points on an origin-centered upright cylinder (lateral + caps)."""
    lateral = 2.0 * math.pi * radius * height
    cap = math.pi * radius * radius
    part = rng.choice(3, size=n, p=np.array([lateral, cap, cap]) / (lateral + 2 * cap))
    theta = rng.uniform(0.0, 2.0 * math.pi, size=n)
    pts = np.empty((n, 3))
    side = part == 0
    pts[side, 0] = radius * np.cos(theta[side])
    pts[side, 1] = radius * np.sin(theta[side])
    pts[side, 2] = rng.uniform(-0.5, 0.5, size=side.sum()) * height
    for which, zsign in ((part == 1, -0.5), (part == 2, 0.5)):
        m = which.sum()
        # sqrt keeps the radial density uniform over the disc
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, size=m))
        pts[which, 0] = r * np.cos(theta[which])
        pts[which, 1] = r * np.sin(theta[which])
        pts[which, 2] = zsign * height
    return pts


def sample_sphere_surface(rng: np.random.Generator, radius: float, n: int) -> np.ndarray:
    """n points uniform on an origin-centered sphere."""
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return radius * v


def _surface_area(kind: str, dims) -> float:
    if kind == "box":
        w, d, h = dims
        return 2.0 * (w * d + w * h + d * h)
    if kind == "cylinder":
        r, h = dims
        return 2.0 * math.pi * r * h + 2.0 * math.pi * r * r
    r = dims[0]
    return 4.0 * math.pi * r * r


def _obb_volume(kind: str, dims) -> float:
    if kind == "box":
        w, d, h = dims
        return w * d * h
    if kind == "cylinder":
        r, h = dims
        return (2.0 * r) ** 2 * h
    return (2.0 * dims[0]) ** 3


@dataclass
class _Obj:
    cls: str
    kind: str            # box | cylinder | sphere
    dims: tuple          # box: (w, d, h); cylinder: (r, h); sphere: (r,)
    yaw: float
    center: np.ndarray   # world center of the primitive


def _footprint(obj: _Obj) -> Polygon:
    if obj.kind == "box":
        w, d, _ = obj.dims
        c, s = math.cos(obj.yaw), math.sin(obj.yaw)
        rot = np.array([[c, -s], [s, c]])
        corners = np.array(
            [[-w / 2, -d / 2], [w / 2, -d / 2], [w / 2, d / 2], [-w / 2, d / 2]]
        ) @ rot.T
        return Polygon(corners + obj.center[:2])
    r = obj.dims[0]
    ang = np.linspace(0.0, 2.0 * math.pi, 17)[:-1]
    ring = np.column_stack([r * np.cos(ang), r * np.sin(ang)]) + obj.center[:2]
    return Polygon(ring)


def _circumradius(obj: _Obj) -> float:
    if obj.kind == "box":
        w, d, _ = obj.dims
        return math.hypot(w, d) / 2.0
    return obj.dims[0]


def _sample_dims(rng: np.random.Generator, cls: str):
    u = rng.uniform
    if cls == "table":
        return "box", (u(0.9, 1.4), u(0.7, 1.0), u(0.7, 0.8))
    if cls == "chair":
        s = u(0.42, 0.5)
        return "box", (s, s, u(0.85, 0.95))
    if cls == "shelf":
        return "box", (u(0.7, 1.1), u(0.28, 0.38), u(1.5, 2.0))
    if cls == "box":
        return "box", (u(0.25, 0.5), u(0.25, 0.5), u(0.25, 0.5))
    if cls == "lamp":
        return "cylinder", (u(0.1, 0.16), u(1.3, 1.7))
    if cls == "ball":
        return "sphere", (u(0.12, 0.22),)
    raise ValueError(f"unknown class {cls!r}")


def _rest_height(kind: str, dims) -> float:
    """Center z so the primitive's lowest point sits at z = 0."""
    if kind == "box":
        return dims[2] / 2.0
    if kind == "cylinder":
        return dims[1] / 2.0
    return dims[0]


def _sample_points(rng: np.random.Generator, obj: _Obj, cfg: GeneratorConfig) -> np.ndarray:
    area = _surface_area(obj.kind, obj.dims)
    n = int(np.clip(round(cfg.base_points * math.sqrt(area)), cfg.min_points, cfg.max_points))
    if obj.kind == "box":
        pts = sample_box_surface(rng, obj.dims, n)
    elif obj.kind == "cylinder":
        pts = sample_cylinder_surface(rng, obj.dims[0], obj.dims[1], n)
    else:
        pts = sample_sphere_surface(rng, obj.dims[0], n)
    c, s = math.cos(obj.yaw), math.sin(obj.yaw)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
    pts = pts @ rot.T + obj.center
    return pts + rng.normal(0.0, cfg.jitter, size=pts.shape)


def _colors(rng: np.random.Generator, cls: str, n: int, cfg: GeneratorConfig) -> np.ndarray:
    base = np.asarray(CLASS_COLORS[cls])
    return np.clip(base + rng.uniform(-cfg.color_noise, cfg.color_noise, size=(n, 3)), 0.0, 1.0)


def _fits_apart(candidate: _Obj, placed: list[_Obj], gap: float, skip=()) -> bool:
    rc = _circumradius(candidate)
    for other in placed:
        if other.cls in ("floor",) or other is None or id(other) in skip:
            continue
        if other.cls == "wall":
            continue
        d = math.hypot(*(candidate.center[:2] - other.center[:2]))
        if d < rc + _circumradius(other) + gap:
            return False
    return True


def _place_free(
    rng: np.random.Generator, obj: _Obj, placed: list[_Obj], half: np.ndarray, gap: float
) -> bool:
    rc = _circumradius(obj)
    span = half - rc
    if span.min() <= 0:
        return False
    for _ in range(200):
        xy = rng.uniform(-span, span)
        obj.center = np.array([xy[0], xy[1], obj.center[2]])
        if _fits_apart(obj, placed, gap):
            return True
    return False


def _place_partner(
    rng: np.random.Generator,
    anchor: _Obj,
    partner: _Obj,
    placed: list[_Obj],
    half: np.ndarray,
    cfg: GeneratorConfig,
) -> bool:
    """Place ``partner`` so its footprint gap to ``anchor`` hits a target.

    Initial guess uses circumradii, then a few corrections with the exact
    polygon distance converge onto the target gap.
    """
    hull_a = _footprint(anchor)
    target = rng.uniform(*cfg.close_gap)
    rc = _circumradius(partner)
    for _ in range(50):
        theta = rng.uniform(0.0, 2.0 * math.pi)
        d = np.array([math.cos(theta), math.sin(theta)])
        dist = _circumradius(anchor) + rc + target
        center = anchor.center[:2] + d * dist
        hull_b0 = _footprint(
            _Obj(partner.cls, partner.kind, partner.dims, partner.yaw, np.array([0.0, 0.0, 0.0]))
        )
        for _ in range(4):
            hull_b = affinity.translate(hull_b0, center[0], center[1])
            err = hull_a.distance(hull_b) - target
            if abs(err) < 0.005:
                break
            center = center - d * err
        if np.any(np.abs(center) + rc > half):
            continue
        partner.center = np.array([center[0], center[1], partner.center[2]])
        if _fits_apart(partner, placed, cfg.sibling_gap, skip={id(anchor)}):
            hull_b = _footprint(partner)
            gap = hull_a.distance(hull_b)
            if cfg.close_gap[0] * 0.5 < gap < cfg.close_gap[1] + 0.05:
                return True
    return False


def _close_pair_dims(rng: np.random.Generator, cfg: GeneratorConfig):
    """Two classes plus dims whose volume ratio avoids bigger-than."""
    lo, hi = cfg.close_volume_ratio
    if rng.uniform() < cfg.close_same_class_prob:
        cls_a = cls_b = FLOOR_CLASSES[rng.integers(len(FLOOR_CLASSES))]
    else:
        cls_a, cls_b = CLOSE_PAIR_CLASSES[rng.integers(len(CLOSE_PAIR_CLASSES))]
        if rng.uniform() < 0.5:
            cls_a, cls_b = cls_b, cls_a
    for _ in range(10):
        kind_a, dims_a = _sample_dims(rng, cls_a)
        va = _obb_volume(kind_a, dims_a)
        for _ in range(100):
            kind_b, dims_b = _sample_dims(rng, cls_b)
            ratio = _obb_volume(kind_b, dims_b) / va
            if lo <= ratio <= hi:
                return (cls_a, kind_a, dims_a), (cls_b, kind_b, dims_b)
    return (cls_a, kind_a, dims_a), (cls_b, kind_b, dims_b)


def _rider_spec(rng: np.random.Generator, host: _Obj, cfg: GeneratorConfig):
    w, d, _ = host.dims
    lim = min(w, d) / 2.0 - cfg.rider_inset
    if rng.uniform() < 0.5:
        smax = min(0.5, math.sqrt(2.0) * lim)
        sx = rng.uniform(0.25, smax)
        sy = rng.uniform(0.25, smax)
        return "box", "box", (sx, sy, rng.uniform(0.25, 0.5))
    return "ball", "sphere", (rng.uniform(0.12, min(0.22, lim)),)


def generate_scene(
    rng: np.random.Generator,
    scene_id: str = "scene",
    labels: LabelSpace = DEFAULT_LABELS,
    config: GeneratorConfig | None = None,
) -> Scene:
    """Build one labeled scene from the generator state."""
    cfg = config or GeneratorConfig()
    objs: list[_Obj] = []

    sx = rng.uniform(*cfg.floor_side)
    sy = rng.uniform(*cfg.floor_side)
    th = rng.uniform(*cfg.floor_thickness)
    objs.append(_Obj("floor", "box", (sx, sy, th), 0.0, np.array([0.0, 0.0, -th / 2])))

    n_walls = int(rng.integers(cfg.wall_count[0], cfg.wall_count[1] + 1))
    sides = [-1.0, 1.0]
    rng.shuffle(sides)
    for side in sides[:n_walls]:
        wt = rng.uniform(*cfg.wall_thickness)
        wl = rng.uniform(*cfg.wall_length)
        wh = rng.uniform(*cfg.wall_height)
        wx = side * (sx / 2.0 - cfg.wall_inset - wt / 2.0)
        ymax = sy / 2.0 - cfg.wall_inset - wl / 2.0
        wy = rng.uniform(-ymax, ymax)
        objs.append(_Obj("wall", "box", (wt, wl, wh), 0.0, np.array([wx, wy, wh / 2.0])))

    half = np.array([sx / 2.0 - cfg.object_inset, sy / 2.0 - cfg.object_inset])
    n_obj = int(rng.integers(cfg.object_count[0], cfg.object_count[1] + 1))
    want_stack = rng.uniform() < cfg.stack_prob
    want_pairs = int(rng.integers(cfg.close_pair_count[0], cfg.close_pair_count[1] + 1))
    n_pairs = min(want_pairs, (n_obj - (1 if want_stack else 0)) // 2)
    n_fill = n_obj - 2 * n_pairs - (1 if want_stack else 0)

    for _ in range(n_pairs):
        (cls_a, kind_a, dims_a), (cls_b, kind_b, dims_b) = _close_pair_dims(rng, cfg)
        a = _Obj(cls_a, kind_a, dims_a, rng.uniform(0.0, 2 * math.pi),
                 np.array([0.0, 0.0, _rest_height(kind_a, dims_a)]))
        if not _place_free(rng, a, objs, half, cfg.sibling_gap):
            continue
        objs.append(a)
        b = _Obj(cls_b, kind_b, dims_b, rng.uniform(0.0, 2 * math.pi),
                 np.array([0.0, 0.0, _rest_height(kind_b, dims_b)]))
        if _place_partner(rng, a, b, objs, half, cfg):
            objs.append(b)

    host: _Obj | None = None
    if want_stack:
        kind, dims = _sample_dims(rng, "table")
        host = _Obj("table", kind, dims, rng.uniform(0.0, 2 * math.pi),
                    np.array([0.0, 0.0, _rest_height(kind, dims)]))
        if _place_free(rng, host, objs, half, cfg.sibling_gap):
            objs.append(host)
        else:
            host = None

    for _ in range(n_fill):
        cls = FLOOR_CLASSES[rng.integers(len(FLOOR_CLASSES))]
        kind, dims = _sample_dims(rng, cls)
        obj = _Obj(cls, kind, dims, rng.uniform(0.0, 2 * math.pi),
                   np.array([0.0, 0.0, _rest_height(kind, dims)]))
        if _place_free(rng, obj, objs, half, cfg.sibling_gap):
            objs.append(obj)

    if host is not None:
        rcls, rkind, rdims = _rider_spec(rng, host, cfg)
        rider = _Obj(rcls, rkind, rdims, rng.uniform(0.0, 2 * math.pi), np.zeros(3))
        lim = np.array([host.dims[0] / 2.0, host.dims[1] / 2.0])
        span = lim - cfg.rider_inset - _circumradius(rider)
        span = np.maximum(span, 0.0)
        uv = rng.uniform(-span, span)
        c, s = math.cos(host.yaw), math.sin(host.yaw)
        offset = np.array([c * uv[0] - s * uv[1], s * uv[0] + c * uv[1]])
        rz = host.dims[2] + _rest_height(rkind, rdims)
        rider.center = np.array([host.center[0] + offset[0], host.center[1] + offset[1], rz])
        objs.append(rider)

    segments = []
    for i, obj in enumerate(objs):
        pts = _sample_points(rng, obj, cfg)
        segments.append(
            Segment(
                id=i,
                points=pts,
                colors=_colors(rng, obj.cls, pts.shape[0], cfg),
                gt_class=labels.node_index(obj.cls),
            )
        )
    edges = derive_gt_predicates(segments, labels, cfg.thresholds)
    return Scene(id=scene_id, segments=tuple(segments), gt_edges=edges, labels=labels)
