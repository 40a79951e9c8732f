"""Shape algebra: Procrustes alignment, PCA shape models, constrained fitting.

Shapes are ordered 2-D landmark sets. Alignment removes translation,
rotation and scale; the aligned cloud is summarized by a linear model
``mean + modes @ b`` whose coefficients are clamped to keep synthesized
shapes close to the training distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateShapeError, InsufficientDataError, ShapeArityError

# Centroid sizes below this are treated as a point mass (unusable geometry).
_DEGENERATE_SIZE = 1e-12

# Relative eigenvalue floor: anything smaller is numerical noise, not a mode.
_EIGENVALUE_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class Shape:
    """Ordered landmark set, stored as an (n, 2) array of (x, y) pixels.

    Immutable once constructed; the flat vector form interleaves
    coordinates as (x1, y1, ..., xn, yn).
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise ShapeArityError(f"expected (n, 2) point array, got shape {pts.shape}")
        if pts.shape[0] < 3:
            raise ShapeArityError(f"need at least 3 landmarks, got {pts.shape[0]}")
        if not np.all(np.isfinite(pts)):
            raise DegenerateShapeError("shape contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_vector(cls, vec) -> "Shape":
        vec = np.asarray(vec, dtype=float)
        if vec.ndim != 1 or vec.size % 2:
            raise ShapeArityError(f"flat shape vector must have even length, got {vec.shape}")
        return cls(vec.reshape(-1, 2))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def as_vector(self) -> np.ndarray:
        return self.points.ravel()

    def centroid(self) -> np.ndarray:
        return self.points.mean(axis=0)

    def centroid_size(self) -> float:
        """Frobenius norm of the centered landmark cloud."""
        return float(np.linalg.norm(self.points - self.centroid()))

    def bounding_box(self) -> tuple[float, float, float, float]:
        """(min_x, min_y, max_x, max_y) of the landmarks."""
        lo = self.points.min(axis=0)
        hi = self.points.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])


@dataclass(frozen=True)
class SimilarityTransform:
    """Rigid scale/rotation/translation map p -> scale * R(rotation) p + translation."""

    scale: float
    rotation: float
    translation: np.ndarray

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError(f"similarity scale must be positive, got {self.scale}")
        t = np.array(self.translation, dtype=float).reshape(2)
        t.setflags(write=False)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "SimilarityTransform":
        return cls(1.0, 0.0, np.zeros(2))

    def rotation_matrix(self) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        return np.array([[c, -s], [s, c]])

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        return self.scale * pts @ self.rotation_matrix().T + self.translation

    def inverse(self) -> "SimilarityTransform":
        inv_scale = 1.0 / self.scale
        c, s = math.cos(-self.rotation), math.sin(-self.rotation)
        r_inv = np.array([[c, -s], [s, c]])
        return SimilarityTransform(inv_scale, -self.rotation, -inv_scale * r_inv @ self.translation)

    def compose(self, other: "SimilarityTransform") -> "SimilarityTransform":
        """Transform applying `other` first, then self."""
        return SimilarityTransform(
            self.scale * other.scale,
            self.rotation + other.rotation,
            self.apply(other.translation.reshape(1, 2)).reshape(2),
        )


@dataclass(frozen=True, eq=False)
class ShapeModel:
    """Linear shape model: mean plus orthonormal deformation modes.

    ``modes`` is (2n, t) with unit columns; ``eigenvalues`` the matching
    per-mode variances, sorted non-increasing and all positive.
    """

    mean_shape: Shape
    modes: np.ndarray
    eigenvalues: np.ndarray
    variance_fraction: float = 0.975
    clamp_alpha: float = 3.0

    def __post_init__(self):
        modes = np.array(self.modes, dtype=float)
        evals = np.array(self.eigenvalues, dtype=float)
        if modes.ndim != 2 or modes.shape[0] != 2 * self.mean_shape.n:
            raise ShapeArityError(f"modes must be (2n, t), got {modes.shape}")
        if evals.shape != (modes.shape[1],):
            raise ShapeArityError("one eigenvalue per mode required")
        if evals.size and (np.any(evals <= 0) or np.any(np.diff(evals) > 0)):
            raise ValueError("eigenvalues must be positive and non-increasing")
        modes.setflags(write=False)
        evals.setflags(write=False)
        object.__setattr__(self, "modes", modes)
        object.__setattr__(self, "eigenvalues", evals)

    @property
    def n(self) -> int:
        return self.mean_shape.n

    @property
    def num_modes(self) -> int:
        return self.modes.shape[1]

    def mode_limits(self) -> np.ndarray:
        """Per-mode clamp bound alpha * sqrt(lambda_i)."""
        return self.clamp_alpha * np.sqrt(self.eigenvalues)


class ParamFit(NamedTuple):
    transform: SimilarityTransform
    params: np.ndarray
    residual: float


def _as_complex(points: np.ndarray) -> np.ndarray:
    return points[:, 0] + 1j * points[:, 1]


def _from_complex(z: np.ndarray) -> np.ndarray:
    return np.column_stack([z.real, z.imag])


def _canonical_spin(mean_z: np.ndarray) -> complex:
    # Fix the frame's free rotation: spin the mean so its first landmark of
    # non-negligible radius sits on the +x axis. This makes the aligned frame
    # a function of the input geometry alone, not of any reference shape.
    radii = np.abs(mean_z)
    usable = np.flatnonzero(radii > 1e-9 * np.linalg.norm(mean_z))
    if usable.size == 0:
        raise DegenerateShapeError("mean shape collapsed to its centroid")
    anchor = mean_z[usable[0]]
    return complex(anchor.conjugate() / abs(anchor))


def procrustes_fit(source: np.ndarray, target: np.ndarray) -> SimilarityTransform:
    """Least-squares similarity mapping `source` points onto `target` points."""
    src = np.asarray(source, dtype=float)
    tgt = np.asarray(target, dtype=float)
    if src.shape != tgt.shape or src.ndim != 2 or src.shape[1] != 2:
        raise ShapeArityError(f"point sets must share an (n, 2) shape, got {src.shape} vs {tgt.shape}")
    src_c = src.mean(axis=0)
    tgt_c = tgt.mean(axis=0)
    a = _as_complex(src - src_c)
    b = _as_complex(tgt - tgt_c)
    denom = float(np.vdot(a, a).real)
    if denom < _DEGENERATE_SIZE:
        raise DegenerateShapeError("source shape collapsed to a point")
    sigma = np.vdot(a, b) / denom
    scale = abs(sigma)
    if scale < _DEGENERATE_SIZE:
        raise DegenerateShapeError("target shape collapsed to a point")
    rotation = float(np.angle(sigma))
    rot = np.array([[math.cos(rotation), -math.sin(rotation)],
                    [math.sin(rotation), math.cos(rotation)]])
    translation = tgt_c - scale * rot @ src_c
    return SimilarityTransform(float(scale), rotation, translation)


def gpa_align(
    shapes: Sequence[Shape], tolerance: float = 1e-10, max_rounds: int = 100
) -> tuple[list[Shape], Shape]:
    """Generalized Procrustes alignment of a shape set into a common frame.

    Each shape is translated to zero centroid, then iteratively rotated and
    scaled onto the evolving mean; the mean is re-normalized to unit centroid
    size (and a canonical spin) every round. Iteration stops when the mean
    moves less than `tolerance` or after `max_rounds`.

    Returns the aligned shapes and the converged mean, both in the common
    frame (zero centroid, mean at unit centroid size).
    """
    if not shapes:
        raise ShapeArityError("cannot align an empty shape list")
    n = shapes[0].n
    centered = []
    for s in shapes:
        if s.n != n:
            raise ShapeArityError(f"mixed landmark counts: {s.n} vs {n}")
        z = _as_complex(s.points)
        z = z - z.mean()
        size = np.linalg.norm(z)
        if size < _DEGENERATE_SIZE:
            raise DegenerateShapeError("shape collapsed to a point; cannot align")
        centered.append(z)

    mean = centered[0] / np.linalg.norm(centered[0])
    mean = mean * _canonical_spin(mean)
    for _ in range(max_rounds):
        aligned = [z * (np.vdot(z, mean) / np.vdot(z, z).real) for z in centered]
        new_mean = np.mean(aligned, axis=0)
        size = np.linalg.norm(new_mean)
        if size < _DEGENERATE_SIZE:
            raise DegenerateShapeError("mean shape collapsed during alignment")
        new_mean = new_mean / size
        new_mean = new_mean * _canonical_spin(new_mean)
        moved = np.linalg.norm(new_mean - mean)
        mean = new_mean
        if moved < tolerance:
            break
    aligned = [z * (np.vdot(z, mean) / np.vdot(z, z).real) for z in centered]
    return [Shape(_from_complex(z)) for z in aligned], Shape(_from_complex(mean))


def build_shape_model(
    aligned: Sequence[Shape],
    variance_fraction: float = 0.975,
    clamp_alpha: float = 3.0,
) -> ShapeModel:
    """PCA model of an aligned shape set.

    Modes come from the eigendecomposition of the sample covariance of the
    flattened shape vectors; the retained count is the smallest one whose
    cumulative eigenvalue sum reaches `variance_fraction` of the total.
    Near-zero eigenvalues (relative to the largest) are never retained.
    """
    if len(aligned) < 2:
        raise InsufficientDataError(f"need at least 2 aligned shapes, got {len(aligned)}")
    n = aligned[0].n
    if any(s.n != n for s in aligned):
        raise ShapeArityError("aligned shapes have mixed landmark counts")
    data = np.stack([s.as_vector() for s in aligned])
    mean_vec = data.mean(axis=0)
    dev = data - mean_vec
    cov = dev.T @ dev / (len(aligned) - 1)
    cov = (cov + cov.T) / 2

    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.clip(evals[order], 0.0, None)
    evecs = evecs[:, order]

    if evals.size == 0 or evals[0] <= 0:
        t = 0
    else:
        usable = int(np.sum(evals > _EIGENVALUE_FLOOR * evals[0]))
        total = float(evals.sum())
        target = variance_fraction * total
        csum = np.cumsum(evals)
        t = int(np.searchsorted(csum, target - 1e-12 * total) + 1)
        t = min(t, usable)
    return ShapeModel(
        mean_shape=Shape.from_vector(mean_vec),
        modes=evecs[:, :t],
        eigenvalues=evals[:t],
        variance_fraction=variance_fraction,
        clamp_alpha=clamp_alpha,
    )


def synthesize(model: ShapeModel, params: np.ndarray) -> Shape:
    """Shape generated by the model at coefficients `params` (model frame)."""
    b = np.asarray(params, dtype=float)
    if b.shape != (model.num_modes,):
        raise ShapeArityError(f"expected {model.num_modes} coefficients, got {b.shape}")
    return Shape.from_vector(model.mean_shape.as_vector() + model.modes @ b)


def clamp_params(model: ShapeModel, params: np.ndarray) -> np.ndarray:
    """Clip each coefficient to +/- alpha * sqrt(lambda_i)."""
    b = np.asarray(params, dtype=float)
    if b.shape != (model.num_modes,):
        raise ShapeArityError(f"expected {model.num_modes} coefficients, got {b.shape}")
    limits = model.mode_limits()
    return np.clip(b, -limits, limits)


def fit_params(
    model: ShapeModel,
    target: Shape,
    tolerance: float = 1e-6,
    max_iters: int = 50,
) -> ParamFit:
    """Pose and coefficients that best explain `target` under the model.

    Alternates a closed-form similarity fit (coefficients fixed) with a
    projection of the back-transformed target onto the modes (pose fixed),
    clamping after every projection. Stops when the largest coefficient
    change, relative to sqrt(lambda_i), falls below `tolerance`.

    Returns the transform, the clamped coefficients, and the residual sum of
    squared point distances between the posed model shape and the target.
    """
    if target.n != model.n:
        raise ShapeArityError(f"target has {target.n} landmarks, model expects {model.n}")
    if target.centroid_size() < _DEGENERATE_SIZE:
        raise DegenerateShapeError("target shape collapsed to a point")

    mean_vec = model.mean_shape.as_vector()
    scales = np.sqrt(model.eigenvalues) if model.num_modes else np.empty(0)
    b = np.zeros(model.num_modes)
    transform = SimilarityTransform.identity()
    for _ in range(max_iters):
        posed = Shape.from_vector(mean_vec + model.modes @ b)
        transform = procrustes_fit(posed.points, target.points)
        back = transform.inverse().apply(target.points)
        b_new = clamp_params(model, model.modes.T @ (back.ravel() - mean_vec))
        if model.num_modes == 0:
            b = b_new
            break
        step = float(np.max(np.abs(b_new - b) / scales))
        b = b_new
        if step < tolerance:
            break
    posed = Shape.from_vector(mean_vec + model.modes @ b)
    transform = procrustes_fit(posed.points, target.points)
    residual = float(np.sum((transform.apply(posed.points) - target.points) ** 2))
    return ParamFit(transform, b, residual)
