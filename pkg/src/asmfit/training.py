"""End-to-end model training: shape model, profile statistics, SVMs.

Consumes annotated samples, produces a ModelBundle holding both feature
pipelines (1-D derivative profiles for the classic baseline, 2-D gradient
windows plus per-landmark SVMs for the gated search).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset_io import ModelBundle
from .errors import InsufficientDataError
from .imaging import build_pyramid, equalize_histogram, sobel_gradients
from .profiles import (
    ProfileModel,
    landmark_normals,
    normalize_windows,
    profiles_1d_batch,
    stats_from_matrix,
    windows_batch,
)
from .scheme import LandmarkScheme
from .search import FitConfig
from .shape_model import Shape, build_shape_model, gpa_align
from .svm import (
    FeatureScaler,
    LandmarkTrainingSet,
    SvmTrainConfig,
    build_landmark_training_set,
    train_linear_svm,
)


@dataclass(frozen=True)
class TrainingSummary:
    retained_modes: int
    level_positives: tuple
    level_negatives: tuple
    skipped: int


def _seed_for(master: int, level: int, landmark: int, salt: int) -> int:
    return master * 1_000_003 + salt * 500_000 + level * 1_000 + landmark


def train_bundle(
    samples,
    scheme: LandmarkScheme,
    fit_config: FitConfig = None,
    svm_config: SvmTrainConfig = None,
    variance_fraction: float = 0.975,
    clamp_alpha: float = 3.0,
    classic_length: int = 15,
    negatives_per_positive: int = 4,
    offset_range=(2, 8),
    eps: float = 1e-3,
    seed: int = 0,
):
    """Train every model component from annotated samples.

    Returns (ModelBundle, TrainingSummary). Deterministic for a fixed seed:
    all randomness (negative-window placement, SVM batch order) is derived
    from it.
    """
    if len(samples) < 2:
        raise InsufficientDataError(f"need at least 2 training samples, got {len(samples)}")
    if fit_config is None:
        fit_config = FitConfig()
    if svm_config is None:
        svm_config = SvmTrainConfig()
    levels = fit_config.levels
    sizes = fit_config.profile_lengths

    aligned, _ = gpa_align([s.shape for s in samples])
    shape_model = build_shape_model(aligned, variance_fraction, clamp_alpha)

    # Per level: the raw image (classic 1-D sampling surface), the Sobel
    # magnitude of the equalized image (2-D window surface), and the
    # annotation scaled into level coordinates.
    level_raw = [[] for _ in range(levels)]
    level_mag = [[] for _ in range(levels)]
    level_pts = [[] for _ in range(levels)]
    for sample in samples:
        pyramid = build_pyramid(sample.image, levels)
        for lv in range(levels):
            raw = pyramid.levels[lv]
            grad = sobel_gradients(equalize_histogram(raw))
            level_raw[lv].append(raw)
            level_mag[lv].append(grad.magnitude)
            level_pts[lv].append(sample.shape.points / 2.0**lv)

    n = scheme.total
    classic_stats = []
    asm_stats = []
    svms = []
    scalers = []
    level_pos = []
    level_neg = []
    skipped_total = 0
    for lv in range(levels):
        one_d_rows = []
        windows = []
        for raw, pts in zip(level_raw[lv], level_pts[lv]):
            shape_lv = Shape(pts)
            normals = landmark_normals(shape_lv, scheme)
            one_d_rows.append(profiles_1d_batch(raw, pts, normals, classic_length))
        for mag, pts in zip(level_mag[lv], level_pts[lv]):
            wins = windows_batch(mag, pts, sizes[lv])
            windows.append(normalize_windows(wins, fit_config.profile_norm, fit_config.q))
        one_d_rows = np.stack(one_d_rows)  # (images, n, classic_length)
        windows = np.stack(windows)  # (images, n, size^2)
        classic_stats.append(tuple(stats_from_matrix(one_d_rows[:, j, :], eps) for j in range(n)))
        asm_stats.append(tuple(stats_from_matrix(windows[:, j, :], eps) for j in range(n)))

        dataset_lv = list(zip(level_mag[lv], level_pts[lv]))
        lv_svms = []
        lv_scalers = []
        pos = neg = 0
        for j in range(n):
            ts = build_landmark_training_set(
                dataset_lv, j, lv,
                negatives_per_positive=negatives_per_positive,
                offset_range=offset_range,
                seed=_seed_for(seed, lv, j, 0),
                size=sizes[lv],
                mode=fit_config.profile_norm,
                q=fit_config.q,
            )
            skipped_total += ts.skipped
            pos += int(np.sum(ts.labels == 1))
            neg += int(np.sum(ts.labels == -1))
            scaler = FeatureScaler.fit(ts.features)
            scaled = LandmarkTrainingSet(
                scaler.transform(ts.features), ts.labels, j, lv, ts.skipped
            )
            cfg = SvmTrainConfig(
                c_penalty=svm_config.c_penalty,
                epochs=svm_config.epochs,
                batch_size=svm_config.batch_size,
                seed=_seed_for(seed, lv, j, 1),
            )
            lv_svms.append(train_linear_svm(scaled, cfg))
            lv_scalers.append(scaler)
        svms.append(tuple(lv_svms))
        scalers.append(tuple(lv_scalers))
        level_pos.append(pos)
        level_neg.append(neg)

    bundle = ModelBundle(
        scheme=scheme,
        shape_model=shape_model,
        classic_profiles=ProfileModel(
            kind="one_d", sizes=(classic_length,) * levels, stats=tuple(classic_stats),
            mode=fit_config.profile_norm, q=fit_config.q, eps=eps,
        ),
        asm_profiles=ProfileModel(
            kind="two_d", sizes=sizes, stats=tuple(asm_stats),
            mode=fit_config.profile_norm, q=fit_config.q, eps=eps,
        ),
        svms=tuple(svms),
        scalers=tuple(scalers),
        fit_defaults=fit_config,
        train_meta={
            "seed": seed,
            "samples": len(samples),
            "c_penalty": svm_config.c_penalty,
            "epochs": svm_config.epochs,
            "batch_size": svm_config.batch_size,
            "negatives_per_positive": negatives_per_positive,
            "offset_min": int(offset_range[0]),
            "offset_max": int(offset_range[1]),
            "classic_length": classic_length,
            "variance_fraction": variance_fraction,
            "clamp_alpha": clamp_alpha,
            "eps": eps,
        },
    )
    summary = TrainingSummary(
        retained_modes=shape_model.num_modes,
        level_positives=tuple(level_pos),
        level_negatives=tuple(level_neg),
        skipped=skipped_total,
    )
    return bundle, summary
