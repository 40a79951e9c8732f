"""Gray-level profile extraction, statistics, and candidate costs.

Two feature families share this module: 1-D normalized derivative profiles
sampled along contour normals, and 2-D normalized gradient-magnitude
windows. Both are scored against per-landmark training statistics with a
regularized Mahalanobis form, optionally weighted down on edge pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError, InsufficientDataError, ShapeArityError
from .imaging import GradientField, GrayImage, grid_window, sample_bilinear
from .scheme import LandmarkScheme, single_contour_scheme
from .shape_model import Shape

# Window sums below this count as flat; sum-normalization returns uniform.
_FLAT_SUM = 1e-12


@dataclass(frozen=True, eq=False)
class Profile:
    """Normalized feature vector for one candidate position."""

    values: np.ndarray
    kind: str = "one_d"

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ShapeArityError("profile contains non-finite values")
        if self.kind not in ("one_d", "two_d"):
            raise ShapeArityError(f"unknown profile kind {self.kind!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


@dataclass(frozen=True, eq=False)
class ProfileStats:
    """Per-landmark training mean, covariance, and regularized inverse."""

    mean: np.ndarray
    covariance: np.ndarray
    eps: float = 1e-3
    inverse: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).ravel()
        cov = np.array(self.covariance, dtype=float)
        d = mean.size
        if cov.shape != (d, d):
            raise DimensionMismatchError(f"covariance {cov.shape} does not match mean dim {d}")
        cov = (cov + cov.T) / 2
        inv = self.inverse
        if inv is None:
            ridge = self.eps * float(np.trace(cov)) / d
            if self.eps > 0:
                ridge = max(ridge, 1e-12)
            inv = np.linalg.inv(cov + ridge * np.eye(d))
        else:
            inv = np.array(inv, dtype=float)
            if inv.shape != (d, d):
                raise DimensionMismatchError("inverse dimension mismatch")
        for name, arr in (("mean", mean), ("covariance", cov), ("inverse", inv)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass(frozen=True, eq=False)
class ProfileModel:
    """Profile geometry plus per (level, landmark) statistics.

    stats[level][landmark] -> ProfileStats; sizes[level] is the profile
    length (1-D) or window side (2-D) used at that pyramid level.
    """

    kind: str
    sizes: tuple
    stats: tuple
    mode: str = "sum"
    q: float = 10.0
    eps: float = 1e-3

    def __post_init__(self):
        if self.kind not in ("one_d", "two_d"):
            raise ShapeArityError(f"unknown profile kind {self.kind!r}")
        if self.mode not in ("sum", "sigmoid"):
            raise ShapeArityError(f"unknown 2-D normalization {self.mode!r}")
        sizes = tuple(int(s) for s in self.sizes)
        if len(sizes) != len(self.stats):
            raise DimensionMismatchError("one size per level required")
        for s in sizes:
            if s < 3 or s % 2 == 0:
                raise ShapeArityError(f"profile sizes must be odd and >= 3, got {s}")
        stats = tuple(tuple(level) for level in self.stats)
        n = len(stats[0]) if stats else 0
        for level_stats, size in zip(stats, sizes):
            if len(level_stats) != n:
                raise DimensionMismatchError("every level must cover every landmark")
            want = size if self.kind == "one_d" else size * size
            for st in level_stats:
                if st.dim != want:
                    raise DimensionMismatchError(
                        f"stats dim {st.dim} does not match configured size {size}"
                    )
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "stats", stats)

    @property
    def levels(self) -> int:
        return len(self.sizes)

    @property
    def n_landmarks(self) -> int:
        return len(self.stats[0])


def landmark_normal(shape: Shape, index: int, scheme: LandmarkScheme = None) -> np.ndarray:
    """Unit normal at a landmark, pointing away from the shape centroid.

    The tangent is the chord joining the landmark's contour neighbors
    (endpoints of open contours use their single adjacent segment). A
    degenerate chord falls back to the centroid-to-landmark direction.
    """
    if scheme is None:
        scheme = single_contour_scheme(shape.n)
    if scheme.total != shape.n:
        raise ShapeArityError(f"scheme covers {scheme.total} landmarks, shape has {shape.n}")
    prev, nxt = scheme.neighbors(index)
    pts = shape.points
    a = pts[prev] if prev is not None else pts[index]
    b = pts[nxt] if nxt is not None else pts[index]
    chord = b - a
    normal = np.array([-chord[1], chord[0]])
    length = np.linalg.norm(normal)
    if length < 1e-12:
        normal = pts[index] - shape.centroid()
        length = np.linalg.norm(normal)
        if length < 1e-12:
            return np.array([1.0, 0.0])
    normal = normal / length
    outward = pts[index] - shape.centroid()
    if normal @ outward < 0:
        normal = -normal
    return normal


def landmark_normals(shape: Shape, scheme: LandmarkScheme = None) -> np.ndarray:
    """(n, 2) array of unit normals for every landmark."""
    return np.stack([landmark_normal(shape, i, scheme) for i in range(shape.n)])


def _normalize_derivatives(diffs: np.ndarray) -> np.ndarray:
    """Divide rows by their absolute sum; flat rows become zero rows."""
    norm = np.sum(np.abs(diffs), axis=-1, keepdims=True)
    safe = np.where(norm < _FLAT_SUM, 1.0, norm)
    out = diffs / safe
    out[np.broadcast_to(norm < _FLAT_SUM, out.shape)] = 0.0
    return out


def profiles_1d_batch(
    image: GrayImage, centers: np.ndarray, normals: np.ndarray, length: int
) -> np.ndarray:
    """(k, length) normalized derivative profiles at unit spacing.

    Samples length+1 points per row centered on each center, along the
    matching normal, then differences and abs-sum-normalizes.
    """
    if length < 3 or length % 2 == 0:
        raise ShapeArityError(f"profile length must be odd and >= 3, got {length}")
    centers = np.asarray(centers, dtype=float)
    normals = np.asarray(normals, dtype=float)
    offsets = np.arange(length + 1) - length / 2.0
    xs = centers[:, 0:1] + offsets[None, :] * normals[:, 0:1]
    ys = centers[:, 1:2] + offsets[None, :] * normals[:, 1:2]
    samples = sample_bilinear(image, xs, ys)
    return _normalize_derivatives(np.diff(samples, axis=1))


def extract_profile_1d(
    image: GrayImage, shape: Shape, index: int, length: int, scheme: LandmarkScheme = None
) -> Profile:
    """Normalized 1-D derivative profile along the landmark's normal."""
    normal = landmark_normal(shape, index, scheme)
    row = profiles_1d_batch(image, shape.points[index][None, :], normal[None, :], length)
    return Profile(row[0], "one_d")


def normalize_windows(flat: np.ndarray, mode: str, q: float = 10.0) -> np.ndarray:
    """Normalize flattened gradient windows (rows) by the configured rule.

    sigmoid: g / (|g| + q) elementwise. sum: g / sum(g), with flat windows
    mapped to the uniform vector so costs stay finite.
    """
    flat = np.asarray(flat, dtype=float)
    if mode == "sigmoid":
        if q <= 0:
            raise ShapeArityError(f"sigmoid normalization needs q > 0, got {q}")
        return flat / (np.abs(flat) + q)
    if mode == "sum":
        total = flat.sum(axis=-1, keepdims=True)
        dim = flat.shape[-1]
        safe = np.where(np.abs(total) < _FLAT_SUM, 1.0, total)
        out = flat / safe
        out[np.broadcast_to(np.abs(total) < _FLAT_SUM, out.shape)] = 1.0 / dim
        return out
    raise ShapeArityError(f"unknown 2-D normalization {mode!r}")


def windows_batch(values: np.ndarray, centers: np.ndarray, size: int) -> np.ndarray:
    """(k, size*size) row-major windows around rounded centers, border-clamped."""
    if size < 3 or size % 2 == 0:
        raise ShapeArityError(f"window size must be odd and >= 3, got {size}")
    h, w = values.shape
    centers = np.asarray(centers, dtype=float)
    half = size // 2
    offs = np.arange(-half, half + 1)
    cx = np.rint(centers[:, 0]).astype(int)
    cy = np.rint(centers[:, 1]).astype(int)
    xs = np.clip(cx[:, None] + offs[None, :], 0, w - 1)
    ys = np.clip(cy[:, None] + offs[None, :], 0, h - 1)
    wins = values[ys[:, :, None], xs[:, None, :]]
    return wins.reshape(len(centers), size * size)


def extract_profile_2d(
    gradient: GradientField, center, size: int, mode: str = "sum", q: float = 10.0
) -> Profile:
    """Normalized size x size gradient-magnitude window at a candidate point."""
    win = grid_window(gradient.magnitude, center, size).ravel()
    return Profile(normalize_windows(win[None, :], mode, q)[0], "two_d")


def stats_from_matrix(rows: np.ndarray, eps: float = 1e-3) -> ProfileStats:
    """ProfileStats from an (m, d) sample matrix (m >= 2)."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 profile samples, got {rows.shape}")
    mean = rows.mean(axis=0)
    dev = rows - mean
    cov = dev.T @ dev / (rows.shape[0] - 1)
    return ProfileStats(mean, cov, eps)


def train_profile_stats(samples, eps: float = 1e-3) -> ProfileStats:
    """Mean/covariance statistics of equally sized profiles."""
    if len(samples) < 2:
        raise InsufficientDataError(f"need at least 2 profile samples, got {len(samples)}")
    dims = {s.dim for s in samples}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed profile dimensions: {sorted(dims)}")
    return stats_from_matrix(np.stack([s.values for s in samples]), eps)


def mahalanobis_cost(stats: ProfileStats, g: Profile) -> float:
    """Quadratic form (g - mean)^T S^-1 (g - mean) with the regularized inverse."""
    if g.dim != stats.dim:
        raise DimensionMismatchError(f"profile dim {g.dim} vs stats dim {stats.dim}")
    delta = g.values - stats.mean
    return float(delta @ stats.inverse @ delta)


def mahalanobis_batch(stats: ProfileStats, rows: np.ndarray) -> np.ndarray:
    """Mahalanobis cost of every row of an (m, d) candidate matrix."""
    rows = np.asarray(rows, dtype=float)
    if rows.shape[-1] != stats.dim:
        raise DimensionMismatchError(f"profile dim {rows.shape[-1]} vs stats dim {stats.dim}")
    delta = rows - stats.mean
    return np.einsum("md,md->m", delta @ stats.inverse, delta)


def edge_weighted_cost(stats: ProfileStats, g: Profile, on_edge: bool, c: float = 2.0) -> float:
    """(c - I) * mahalanobis_cost with I = 1 on an edge pixel, 0 off it."""
    if not c > 1:
        raise ValueError(f"edge weight constant must exceed 1, got {c}")
    return (c - (1.0 if on_edge else 0.0)) * mahalanobis_cost(stats, g)
