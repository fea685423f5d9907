"""Hand-built segments, scenes and independent oracle helpers shared by tests.

The oracle helpers deliberately avoid the library's vectorized code paths:
plain Python loops and math.* calls, so a test compares two different
computations rather than one computation with itself.
"""

import math

import numpy as np

from esgnn.scene import Scene, Segment


def box_points(center, size):
    """The 8 corners of an axis-aligned box."""
    c = np.asarray(center, dtype=np.float64)
    s = np.asarray(size, dtype=np.float64) / 2.0
    corners = []
    for dx in (-1, 1):
        for dy in (-1, 1):
            for dz in (-1, 1):
                corners.append(c + s * np.array([dx, dy, dz]))
    return np.array(corners)


def box_segment(seg_id, center, size, gt_class=5):
    pts = box_points(center, size)
    return Segment(id=seg_id, points=pts, colors=np.full_like(pts, 0.5),
                   gt_class=gt_class)


def cloud_segment(seg_id, rng, n=32, scale=(1.0, 0.6, 0.3), center=(0, 0, 0),
                  gt_class=5):
    """A full-rank anisotropic Gaussian cloud (distinct PCA spectrum a.s.)."""
    pts = rng.normal(size=(n, 3)) * np.asarray(scale) + np.asarray(center)
    return Segment(id=seg_id, points=pts, colors=np.full((n, 3), 0.5),
                   gt_class=gt_class)


def make_scene(segments, gt_edges=(), scene_id="test"):
    return Scene(id=scene_id, segments=tuple(segments), gt_edges=tuple(gt_edges))


def mlp_oracle(mlp, x):
    """Straight-line recomputation of an Mlp forward with scalar loops."""
    rows = [list(map(float, row)) for row in np.atleast_2d(x)]
    for w, b, act in zip(mlp.weights, mlp.biases, mlp.acts):
        wd, bd = w.data, b.data
        nxt = []
        for row in rows:
            out_row = []
            for j in range(wd.shape[1]):
                acc = float(bd[j])
                for i in range(wd.shape[0]):
                    acc += row[i] * float(wd[i, j])
                if act == "relu" and acc < 0.0:
                    acc = 0.0
                out_row.append(acc)
            nxt.append(out_row)
        rows = nxt
    return np.array(rows)


def softmax_oracle(values):
    """Plain-math softmax of a 1-D list (no max-shift trick)."""
    exps = [math.exp(float(v)) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


def cross_entropy_oracle(logit_rows, targets, weights=None):
    """Weighted mean of -log softmax[target], straight from the formula."""
    num, den = 0.0, 0.0
    for row, t in zip(logit_rows, targets):
        p = softmax_oracle(row)[int(t)]
        w = 1.0 if weights is None else float(weights[int(t)])
        num += -w * math.log(p)
        den += w
    return num / den


def rank_oracle(probs, cls):
    """Rank by sorting on (-prob, index); 1-based position of cls."""
    order = sorted(range(len(probs)), key=lambda i: (-float(probs[i]), i))
    return order.index(int(cls)) + 1


def triplet_rank_oracle(subj_probs, edge_probs, obj_probs, s, p, o):
    """Exhaustive enumeration of every candidate triple, sorted with the
    lexicographic tie-break. Predicate 0 is never a candidate."""
    cands = []
    for a in range(len(subj_probs)):
        for b in range(1, len(edge_probs)):
            for c in range(len(obj_probs)):
                score = float(subj_probs[a]) * float(edge_probs[b]) * float(obj_probs[c])
                cands.append((-score, (a, b, c)))
    cands.sort()
    return [key for _, key in cands].index((int(s), int(p), int(o))) + 1


def finite_diff_grad(f, x, eps=1e-5):
    """Central-difference gradient of scalar f at array x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + eps
        up = f(x)
        flat[k] = keep - eps
        down = f(x)
        flat[k] = keep
        gf[k] = (up - down) / (2.0 * eps)
    return g


def max_rel_err(a, b, guard=1e-6):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    return float((np.abs(a - b) / (np.abs(a) + np.abs(b) + guard)).max())
