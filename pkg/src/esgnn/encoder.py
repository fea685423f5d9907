"""Per-segment point-cloud encoder.

Each segment's points are expressed in a local frame (centered for the
world mode, centered and rotated into the PCA basis for the invariant
mode), pushed through a shared per-point MLP and max-pooled into one
latent vector per segment. All segments of a scene are encoded in a single
batched forward pass.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor, segment_max
from .geometry import canonical_basis, require_full_rank
from .nn import Mlp


def segment_local_points(points: np.ndarray, frame: str) -> np.ndarray:
    """Express a segment's points in its own frame.

    ``world`` only removes the centroid; ``canonical`` also rotates into the
    segment's PCA basis so the result is unchanged by rigid motion.
    """
    centroid, basis, eigvals = canonical_basis(points)
    centered = points - centroid
    if frame == "world":
        return centered
    require_full_rank(eigvals, context="point encoder")
    return centered @ basis


class PointEncoder:
    """Shared per-point MLP with max pooling over each segment."""

    def __init__(self, rng: np.random.Generator, hidden: int = 32, out_dim: int = 64):
        self.out_dim = out_dim
        self.mlp = Mlp([3, hidden, out_dim], ["relu", "none"], rng)

    def parameters(self, prefix: str = "encoder") -> dict[str, Tensor]:
        return self.mlp.parameters(prefix)

    def pool(self, local_points: np.ndarray, seg_ids: np.ndarray, n_segments: int) -> Tensor:
        """Encode concatenated per-segment point blocks into [n_segments, out]."""
        feats = self.mlp.forward(Tensor(local_points))
        return segment_max(feats, seg_ids, n_segments)

    def encode_segments(self, segments, frame: str) -> Tensor:
        blocks = [segment_local_points(seg.points, frame) for seg in segments]
        ids = np.concatenate(
            [np.full(b.shape[0], i, dtype=np.int64) for i, b in enumerate(blocks)]
        )
        return self.pool(np.concatenate(blocks, axis=0), ids, len(blocks))
