"""Rigid transforms and per-segment canonical (PCA) frames."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSegmentError

# Relative threshold below which the second covariance eigenvalue counts as
# zero, i.e. the points are collinear or coincident.
_RANK_EPS = 1e-12

# Normalized third-moment magnitude (per point) below which the skew sign is
# considered unreliable and the component-sign fallback applies.
_SKEW_EPS = 1e-6


@dataclass(frozen=True)
class Transform:
    """A proper rigid motion x -> R x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"bad transform shapes {r.shape}, {t.shape}")
        if np.abs(r.T @ r - np.eye(3)).max() > 1e-9:
            raise ValueError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-9:
            raise ValueError("rotation determinant is not +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def compose(self, inner: "Transform") -> "Transform":
        """self after inner: (self.compose(inner)).apply == self.apply(inner.apply(.))."""
        return Transform(
            self.rotation @ inner.rotation,
            self.rotation @ inner.translation + self.translation,
        )

    @property
    def is_rotating(self) -> bool:
        return bool(np.abs(self.rotation - np.eye(3)).max() > 1e-12)


def identity_transform() -> Transform:
    return Transform(np.eye(3), np.zeros(3))


def yaw_matrix(angle: float) -> np.ndarray:
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_quaternion(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (not necessarily unit) quaternion [w, x, y, z]."""
    q = np.asarray(q, dtype=np.float64)
    w, x, y, z = q / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniform random rotation via a normalized Gaussian quaternion."""
    return rotation_from_quaternion(rng.normal(size=4))


def canonical_basis(points: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Centroid, PCA eigenbasis and eigenvalues of a point set.

    Columns are ordered by descending eigenvalue. The sign of each axis is
    fixed by the third central moment of the point projections (positive
    skew points along +axis), which rotates with the data; point sets whose
    skew vanishes fall back to making the largest-magnitude component of the
    eigenvector positive. Degenerate covariance does not raise here; callers
    that need full rank must check the returned eigenvalues.
    """
    pts = np.asarray(points, dtype=np.float64)
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    cov = centered.T @ centered / pts.shape[0]
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    basis = eigvecs[:, order]
    proj = centered @ basis
    for k in range(3):
        col = proj[:, k]
        scale = np.sqrt(np.mean(col * col))
        if scale > 0.0:
            skew = np.sum((col / scale) ** 3)
            if abs(skew) > _SKEW_EPS * pts.shape[0]:
                if skew < 0.0:
                    basis[:, k] = -basis[:, k]
                continue
        # Symmetric (or flat) along this axis: orientation is data-independent,
        # so pick the sign from the eigenvector itself.
        comp = int(np.argmax(np.abs(basis[:, k])))
        if basis[comp, k] < 0.0:
            basis[:, k] = -basis[:, k]
    return centroid, basis, eigvals


def require_full_rank(eigvals: np.ndarray, context: str = "segment") -> None:
    """Reject covariance spectra of collinear or coincident point sets."""
    top = float(eigvals[0])
    if top <= 0.0 or float(eigvals[1]) <= _RANK_EPS * top:
        raise DegenerateSegmentError(
            f"{context}: points are collinear or coincident (eigenvalues {eigvals})"
        )
