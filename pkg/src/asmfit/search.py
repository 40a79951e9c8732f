"""Multi-resolution landmark search: candidate scoring, gating, fitting loop.

Fitting walks the pyramid coarse to fine. At each level every landmark
scans the integer grid within a Chebyshev radius of its current position,
scores candidates with the configured profile cost (optionally SVM-gated
and edge-weighted), and the whole shape is then pulled back onto the
constrained shape model. Levels hand off by doubling coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BoxError,
    DegenerateShapeError,
    DimensionMismatchError,
    InitializationError,
    ShapeArityError,
)
from .imaging import GrayImage, ImagePyramid, canny_edges, equalize_histogram, sobel_gradients, sample_bilinear
from .profiles import landmark_normals, mahalanobis_batch, normalize_windows, windows_batch
from .shape_model import Shape, ShapeModel, clamp_params, fit_params, synthesize
from .svm import decision_values


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the fitting loop.

    profile_lengths is indexed by pyramid level: entry 0 applies at full
    resolution, the last entry at the coarsest level. Defaults follow the
    coarse-to-fine shrinkage 15, 7, 3 with the 15-wide window at the
    coarsest level.
    """

    levels: int = 3
    profile_lengths: tuple = (3, 7, 15)
    search_radius: int = 3
    max_iters_per_level: int = 20
    convergence: float = 0.9
    q: float = 10.0
    c: float = 2.0
    canny_low: float = 50.0
    canny_high: float = 150.0
    svm_gate: bool = True
    profile_kind: str = "two_d"
    profile_norm: str = "sum"
    edge_weighted: bool = True

    def __post_init__(self):
        if self.levels < 1:
            raise ShapeArityError(f"need at least 1 level, got {self.levels}")
        lengths = tuple(int(v) for v in self.profile_lengths)
        if len(lengths) != self.levels:
            raise ShapeArityError(
                f"profile_lengths needs one entry per level, got {len(lengths)} for {self.levels}"
            )
        if any(v < 3 or v % 2 == 0 for v in lengths):
            raise ShapeArityError(f"profile lengths must be odd and >= 3, got {lengths}")
        object.__setattr__(self, "profile_lengths", lengths)
        if self.search_radius < 1:
            raise ShapeArityError(f"search_radius must be >= 1, got {self.search_radius}")
        if self.max_iters_per_level < 0:
            raise ShapeArityError("max_iters_per_level must be >= 0")
        if not 0 < self.convergence <= 1:
            raise ShapeArityError(f"convergence fraction must be in (0, 1], got {self.convergence}")
        if not self.c > 1:
            raise ShapeArityError(f"edge weight constant must exceed 1, got {self.c}")
        if self.profile_kind not in ("one_d", "two_d"):
            raise ShapeArityError(f"unknown profile kind {self.profile_kind!r}")
        if self.profile_norm not in ("sum", "sigmoid"):
            raise ShapeArityError(f"unknown profile normalization {self.profile_norm!r}")


@dataclass(frozen=True, eq=False)
class LevelContext:
    """Per-level cache: images, gradients, edges, statistics, classifiers."""

    raw: GrayImage
    equalized: GrayImage
    gradient: object
    edge_map: np.ndarray
    stats: tuple
    svms: tuple
    scalers: tuple
    scheme: object


@dataclass(frozen=True, eq=False)
class FitResult:
    """Fitted shape plus the loop's bookkeeping.

    The shape always satisfies the model constraint: it is T(mean + modes@b)
    for the last regularization's similarity T and clamped b. iterations and
    converged are indexed by pyramid level; landmark_costs holds the final
    search pass's per-landmark costs (None when search never ran).
    """

    shape: Shape
    iterations: tuple
    converged: tuple
    landmark_costs: np.ndarray


def init_shape_from_box(model: ShapeModel, box) -> Shape:
    """Mean shape scaled anisotropically (no rotation) to fill the box.

    box is (x, y, width, height) in level-0 pixels.
    """
    x, y, w, h = (float(v) for v in box)
    if not (w > 0 and h > 0):
        raise BoxError(f"box needs positive width and height, got {w}x{h}")
    x0, y0, x1, y1 = model.mean_shape.bounding_box()
    if x1 - x0 < 1e-12 or y1 - y0 < 1e-12:
        raise DegenerateShapeError("mean shape has no extent to place in a box")
    pts = model.mean_shape.points
    sx = w / (x1 - x0)
    sy = h / (y1 - y0)
    out = (pts - (x0, y0)) * (sx, sy) + (x, y)
    return Shape(out)


def _candidate_grid(points: np.ndarray, radius: int):
    """Integer candidate centers within Chebyshev `radius` of each point.

    Returns (cx, cy, valid, cheb), each (k, m) with m = (2*radius+1)^2 and
    candidates enumerated row-major (dy outer, dx inner). valid masks out
    pad entries beyond the radius (the grid per axis holds 2r or 2r+1
    integers depending on the fractional part of the position).
    """
    r = radius
    offs = np.arange(2 * r + 1)
    x0 = np.ceil(points[:, 0] - r)
    y0 = np.ceil(points[:, 1] - r)
    gx = x0[:, None] + offs[None, :]
    gy = y0[:, None] + offs[None, :]
    ok_x = gx <= np.floor(points[:, 0] + r)[:, None]
    ok_y = gy <= np.floor(points[:, 1] + r)[:, None]
    k = len(points)
    m = (2 * r + 1) ** 2
    cx = np.broadcast_to(gx[:, None, :], (k, 2 * r + 1, 2 * r + 1)).reshape(k, m)
    cy = np.broadcast_to(gy[:, :, None], (k, 2 * r + 1, 2 * r + 1)).reshape(k, m)
    valid = (ok_y[:, :, None] & ok_x[:, None, :]).reshape(k, m)
    cheb = np.maximum(np.abs(cx - points[:, 0:1]), np.abs(cy - points[:, 1:2]))
    return cx, cy, valid, cheb


def _candidate_features(ctx: LevelContext, shape: Shape, config: FitConfig,
                        size: int, cx: np.ndarray, cy: np.ndarray) -> np.ndarray:
    """(k, m, d) normalized feature rows for every candidate of every landmark."""
    k, m = cx.shape
    if config.profile_kind == "two_d":
        centers = np.stack([cx.ravel(), cy.ravel()], axis=1)
        rows = windows_batch(ctx.gradient.magnitude, centers, size)
        rows = normalize_windows(rows, config.profile_norm, config.q)
        return rows.reshape(k, m, size * size)
    normals = landmark_normals(shape, ctx.scheme)
    offs = np.arange(size + 1) - size / 2.0
    sx = cx[:, :, None] + offs[None, None, :] * normals[:, 0, None, None]
    sy = cy[:, :, None] + offs[None, None, :] * normals[:, 1, None, None]
    samples = sample_bilinear(ctx.raw, sx, sy)
    diffs = np.diff(samples, axis=2)
    norm = np.sum(np.abs(diffs), axis=2, keepdims=True)
    flat = norm < 1e-12
    out = diffs / np.where(flat, 1.0, norm)
    out[np.broadcast_to(flat, out.shape)] = 0.0
    return out


def search_landmarks(ctx: LevelContext, shape: Shape, config: FitConfig, level: int):
    """One candidate-search pass; every landmark moves independently.

    Candidates within the Chebyshev search radius are scored by the
    profile cost (edge-weighted 2-D or plain 1-D Mahalanobis); when the
    SVM gate is on, only candidates the landmark's classifier accepts
    compete, falling back to all of them if none pass. Ties break toward
    the smaller displacement, then row-major candidate order.

    Returns (new Shape, per-landmark winning costs).
    """
    size = config.profile_lengths[level]
    pts = shape.points
    cx, cy, valid, cheb = _candidate_grid(pts, config.search_radius)
    k, m = cx.shape
    feats = _candidate_features(ctx, shape, config, size, cx, cy)

    if len(ctx.stats) != k:
        raise DimensionMismatchError(f"{len(ctx.stats)} stat entries for {k} landmarks")
    costs = np.empty((k, m))
    for j in range(k):
        costs[j] = mahalanobis_batch(ctx.stats[j], feats[j])

    if config.edge_weighted:
        h, w = ctx.edge_map.shape
        ex = np.clip(cx.astype(int), 0, w - 1)
        ey = np.clip(cy.astype(int), 0, h - 1)
        costs *= config.c - ctx.edge_map[ey, ex]

    allowed = valid.copy()
    if config.svm_gate and ctx.svms is not None:
        for j in range(k):
            scaled = ctx.scalers[j].transform(feats[j])
            accepted = decision_values(ctx.svms[j], scaled) >= 0
            gated = allowed[j] & accepted
            if gated.any():
                allowed[j] = gated

    new_pts = np.empty((k, 2))
    won = np.empty(k)
    enum_idx = np.arange(m)
    for j in range(k):
        cost_j = np.where(allowed[j], costs[j], np.inf)
        best = np.lexsort((enum_idx, cheb[j], cost_j))[0]
        new_pts[j] = cx[j, best], cy[j, best]
        won[j] = costs[j, best]
    return Shape(new_pts), won


def _regularize(model: ShapeModel, shape: Shape) -> Shape:
    """Pull a shape back onto the constrained model manifold."""
    pf = fit_params(model, shape)
    return Shape(pf.transform.apply(synthesize(model, clamp_params(model, pf.params)).points))


def build_level_context(bundle, level_image: GrayImage, level: int, config: FitConfig) -> LevelContext:
    """Compute and cache everything one level's search needs."""
    equalized = equalize_histogram(level_image)
    need_gradient = config.profile_kind == "two_d"
    gradient = sobel_gradients(equalized) if need_gradient else None
    if config.edge_weighted:
        edge_map = canny_edges(equalized, config.canny_low, config.canny_high)
    else:
        edge_map = np.zeros(level_image.pixels.shape, dtype=np.uint8)
    pm = bundle.asm_profiles if config.profile_kind == "two_d" else bundle.classic_profiles
    if pm.sizes[level] != config.profile_lengths[level]:
        raise DimensionMismatchError(
            f"level {level}: configured profile length {config.profile_lengths[level]} "
            f"does not match trained size {pm.sizes[level]}"
        )
    gate = config.svm_gate and config.profile_kind == "two_d"
    return LevelContext(
        raw=level_image,
        equalized=equalized,
        gradient=gradient,
        edge_map=edge_map,
        stats=pm.stats[level],
        svms=bundle.svms[level] if gate else None,
        scalers=bundle.scalers[level] if gate else None,
        scheme=bundle.scheme,
    )


def fit(pyramid: ImagePyramid, bundle, init: Shape, config: FitConfig = None) -> FitResult:
    """Coarse-to-fine constrained fit of the bundle's model to one image.

    The init shape (level-0 pixels) is scaled down to the coarsest level
    and regularized; each level then loops search + regularization until
    the configured fraction of landmarks moves under a pixel, and hands
    its shape up by doubling coordinates. Deterministic: no randomness.
    """
    if config is None:
        config = bundle.fit_defaults
    if len(pyramid.levels) != config.levels:
        raise DimensionMismatchError(
            f"pyramid has {len(pyramid.levels)} levels, config expects {config.levels}"
        )
    base = pyramid.levels[0]
    inside = (
        (init.points[:, 0] >= 0) & (init.points[:, 0] <= base.width - 1)
        & (init.points[:, 1] >= 0) & (init.points[:, 1] <= base.height - 1)
    )
    if not inside.any():
        raise InitializationError("every init landmark lies outside the image")

    model = bundle.shape_model
    top = config.levels - 1
    shape = Shape(init.points / 2.0**top)
    iterations = [0] * config.levels
    converged = [False] * config.levels
    costs = None
    for level in range(top, -1, -1):
        shape = _regularize(model, shape)
        if config.max_iters_per_level:
            ctx = build_level_context(bundle, pyramid.levels[level], level, config)
        for _ in range(config.max_iters_per_level):
            iterations[level] += 1
            searched, costs = search_landmarks(ctx, shape, config, level)
            updated = _regularize(model, searched)
            moved = np.linalg.norm(updated.points - shape.points, axis=1)
            shape = updated
            if np.mean(moved < 1.0) >= config.convergence:
                converged[level] = True
                break
        if level > 0:
            shape = Shape(shape.points * 2.0)
    return FitResult(shape, tuple(iterations), tuple(converged), costs)


def config_for_mode(bundle, mode: str) -> FitConfig:
    """Fit configuration for the two evaluation pipelines.

    classic: 1-D profiles on the raw level image, no gate, no edge
    weighting. asm_svm: 2-D gradient windows, SVM gate, edge-weighted
    costs. Both reuse the training-time defaults stored in the bundle.
    """
    base = bundle.fit_defaults
    if mode == "asm_svm":
        return base
    if mode == "classic":
        return FitConfig(
            levels=base.levels,
            profile_lengths=bundle.classic_profiles.sizes,
            search_radius=base.search_radius,
            max_iters_per_level=base.max_iters_per_level,
            convergence=base.convergence,
            q=base.q,
            c=base.c,
            canny_low=base.canny_low,
            canny_high=base.canny_high,
            svm_gate=False,
            profile_kind="one_d",
            profile_norm=base.profile_norm,
            edge_weighted=False,
        )
    raise ShapeArityError(f"unknown mode {mode!r}, expected classic or asm_svm")
