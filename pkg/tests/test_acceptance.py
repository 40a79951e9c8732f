"""End-to-end acceptance checks, one per numbered criterion.

Run with `pytest -s tests/test_acceptance.py` to see the one-line
PASS/FAIL verdict each criterion prints (pytest also replays the captured
lines for any failing test). Tolerances are stated inline and frozen; the
synthetic benchmark threshold (criterion 8) was confirmed by an oracle run
before being pinned.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from asmfit.cli import main, truth_box
from asmfit.dataset_io import split_dataset
from asmfit.evaluation import evaluate
from asmfit.imaging import GrayImage, build_pyramid, canny_edges, sobel_gradients
from asmfit.profiles import (
    Profile,
    ProfileStats,
    edge_weighted_cost,
    mahalanobis_cost,
    normalize_windows,
    stats_from_matrix,
)
from asmfit.scheme import DEFAULT_SCHEME
from asmfit.search import config_for_mode, fit, init_shape_from_box
from asmfit.shape_model import (
    Shape,
    SimilarityTransform,
    build_shape_model,
    clamp_params,
    fit_params,
    gpa_align,
    synthesize,
)
from asmfit.svm import (
    LandmarkTrainingSet,
    SvmTrainConfig,
    decision_values,
    train_linear_svm,
)
from asmfit.synthetic import generate_face_dataset, write_dataset
from asmfit.training import train_bundle

from reference_canny import ramp_step_fixture, reference_canny


def _verdict(num, ok, detail):
    print(f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, f"criterion {num}: {detail}"


def _random_shapes(rng, count, n, spread=20.0, wobble=1.5):
    base = rng.uniform(-spread, spread, (n, 2))
    return [Shape(base + rng.normal(0.0, wobble, (n, 2))) for _ in range(count)]


def test_criterion_01_shape_model_oracle():
    # 20 random 5-point shape sets; full-variance PCA after GPA must
    # reconstruct every aligned shape to 1e-6 per coordinate, with an
    # orthonormal basis (1e-9). Runtime < 1 s.
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst_coord = 0.0
    worst_orth = 0.0
    for _ in range(20):
        aligned, _ = gpa_align(_random_shapes(rng, 8, 5))
        model = build_shape_model(aligned, variance_fraction=1.0)
        mean = model.mean_shape.as_vector()
        p = model.modes
        worst_orth = max(worst_orth, float(np.abs(p.T @ p - np.eye(model.num_modes)).max()))
        for s in aligned:
            b = p.T @ (s.as_vector() - mean)
            err = np.abs(mean + p @ b - s.as_vector()).max()
            worst_coord = max(worst_coord, float(err))
    elapsed = time.perf_counter() - t0
    ok = worst_coord <= 1e-6 and worst_orth <= 1e-9 and elapsed < 1.0
    _verdict(1, ok, f"coord err {worst_coord:.2e} <= 1e-6, "
                    f"orthogonality {worst_orth:.2e} <= 1e-9, {elapsed:.2f}s < 1s")


def test_criterion_02_fit_params_round_trip():
    # 100 random (T0, b0) with |b0_i| <= 2.5 sqrt(lambda_i); recovery
    # within 1e-3 elementwise, residual < 1e-6. Runtime < 5 s.
    rng = np.random.default_rng(102)
    aligned, _ = gpa_align(_random_shapes(rng, 10, 6))
    model = build_shape_model(aligned)
    t0 = time.perf_counter()
    worst_b = 0.0
    worst_res = 0.0
    for _ in range(100):
        b0 = rng.uniform(-1.0, 1.0, model.num_modes) * 2.5 * np.sqrt(model.eigenvalues)
        t = SimilarityTransform(rng.uniform(0.5, 2.0), rng.uniform(-np.pi, np.pi),
                                rng.normal(0.0, 50.0, 2))
        target = Shape(t.apply(synthesize(model, b0).points))
        res = fit_params(model, target)
        worst_b = max(worst_b, float(np.abs(res.params - b0).max()))
        worst_res = max(worst_res, res.residual)
    elapsed = time.perf_counter() - t0
    ok = worst_b <= 1e-3 and worst_res < 1e-6 and elapsed < 5.0
    _verdict(2, ok, f"param err {worst_b:.2e} <= 1e-3, "
                    f"residual {worst_res:.2e} < 1e-6, {elapsed:.2f}s < 5s")


def test_criterion_03_clamping():
    rng = np.random.default_rng(103)
    model = build_shape_model(_random_shapes(rng, 10, 6))
    limit = 3.0 * np.sqrt(model.eigenvalues)
    bounded = True
    idempotent = True
    for _ in range(200):
        b = rng.normal(0.0, 5.0, model.num_modes) * np.sqrt(model.eigenvalues)
        once = clamp_params(model, b)
        bounded &= bool(np.all(np.abs(once) <= limit))
        idempotent &= bool(np.array_equal(clamp_params(model, once), once))
    ok = bounded and idempotent
    _verdict(3, ok, f"|b_i| <= 3 sqrt(lambda_i) exact: {bounded}, "
                    f"bitwise idempotent: {idempotent}")


def test_criterion_04_convolution_fixtures():
    h = 17.0
    px = np.full((6, 8), 40.0)
    px[:, 4:] += h
    g = sobel_gradients(GrayImage(px))
    step_ok = (np.allclose(g.gx[:, 3:5], 4.0 * h) and not g.gx[:, :3].any()
               and not g.gx[:, 5:].any() and not g.gy.any())
    flat = sobel_gradients(GrayImage(np.full((6, 8), 90.0)))
    flat_ok = not flat.gx.any() and not flat.gy.any()
    fixture = ramp_step_fixture(16)
    got = canny_edges(GrayImage(fixture), 50.0, 150.0)
    want = reference_canny(fixture, 50.0, 150.0)
    canny_ok = bool(want.any()) and np.array_equal(got, want)
    ok = step_ok and flat_ok and canny_ok
    _verdict(4, ok, f"sobel step gx=4h: {step_ok}, constant zero: {flat_ok}, "
                    f"canny 16x16 == reference: {canny_ok}")


def test_criterion_05_cost_formulas():
    st = ProfileStats(np.zeros(2), np.diag([2.0, 0.5]), eps=0.0)
    hand = mahalanobis_cost(st, Profile(np.array([1.0, 1.0])))
    hand_ok = abs(hand - 2.5) <= 1e-9
    rng = np.random.default_rng(105)
    stats = stats_from_matrix(rng.normal(0.0, 1.0, (40, 9)))
    factors_ok = True
    for _ in range(1000):
        g = Profile(rng.normal(0.0, 1.0, 9))
        f1 = mahalanobis_cost(stats, g)
        factors_ok &= edge_weighted_cost(stats, g, True, c=2.0) == f1
        factors_ok &= edge_weighted_cost(stats, g, False, c=2.0) == 2.0 * f1
    ok = hand_ok and factors_ok
    _verdict(5, ok, f"diag(2,0.5) delta(1,1) -> {hand:.12f} (2.5 +/- 1e-9), "
                    f"on-edge=f1 and off-edge=2*f1 over 1000 profiles: {factors_ok}")


def test_criterion_06_normalizations():
    q = 10.0
    sig = normalize_windows(np.array([[q, 0.0]]), "sigmoid", q)
    sigmoid_ok = sig[0, 0] == 0.5 and sig[0, 1] == 0.0
    rng = np.random.default_rng(106)
    worst = 0.0
    for _ in range(1000):
        win = rng.uniform(0.1, 5.0, (1, 25))
        worst = max(worst, abs(float(normalize_windows(win, "sum").sum()) - 1.0))
    sum_ok = worst <= 1e-9
    ok = sigmoid_ok and sum_ok
    _verdict(6, ok, f"sigmoid maps q->0.5 and 0->0 exactly: {sigmoid_ok}, "
                    f"sum-normalized windows off unity by {worst:.2e} <= 1e-9")


def test_criterion_07_svm_margin():
    t0 = time.perf_counter()
    two = LandmarkTrainingSet(np.array([[0.0, 0.0], [2.0, 0.0]]),
                              np.array([-1.0, 1.0]), 0, 0)
    model = train_linear_svm(two, SvmTrainConfig(c_penalty=100.0, epochs=10000, seed=0))
    boundary = -model.bias / model.weights[0]
    norm = float(np.linalg.norm(model.weights))
    margin_ok = abs(boundary - 1.0) <= 0.05 and abs(norm - 1.0) <= 0.05

    acc_ok = True
    for seed in (0, 1, 2):
        rng = np.random.default_rng(seed)
        w = rng.normal(0.0, 1.0, 5)
        w /= np.linalg.norm(w)
        b = rng.normal(0.0, 0.5)
        rows = []
        while len(rows) < 100:
            x = rng.normal(0.0, 2.0, 5)
            if abs(x @ w + b) >= 0.5:
                rows.append(x)
        rows = np.array(rows)
        ts = LandmarkTrainingSet(rows, np.sign(rows @ w + b), 0, 0)
        svm = train_linear_svm(ts, SvmTrainConfig(c_penalty=10.0, epochs=300, seed=0))
        preds = np.where(decision_values(svm, ts.features) >= 0, 1.0, -1.0)
        acc_ok &= bool((preds == ts.labels).all())
    elapsed = time.perf_counter() - t0
    ok = margin_ok and acc_ok and elapsed < 2.0
    _verdict(7, ok, f"boundary {boundary:.4f} (1 +/- 0.05), |w| {norm:.4f} "
                    f"(1 +/- 5%), separable sets 100% train acc: {acc_ok}, "
                    f"{elapsed:.2f}s < 2s")


def test_criterion_08_synthetic_benchmark():
    # 40 synthetic 256x256 faces (noise sigma 5), 30 train / 10 test,
    # boxes inflated 10%: asm_svm E_ave <= 3.0 px (threshold confirmed by
    # oracle run: 0.69) and asm_svm <= classic. Runtime < 60 s.
    t0 = time.perf_counter()
    samples = generate_face_dataset(40, size=256, seed=7)
    train, test = split_dataset(samples, 30, seed=11)
    bundle, _ = train_bundle(train, DEFAULT_SCHEME)
    e_ave = {}
    for mode in ("asm_svm", "classic"):
        cfg = config_for_mode(bundle, mode)
        fitted = []
        for s in test:
            pyr = build_pyramid(s.image, cfg.levels)
            init = init_shape_from_box(bundle.shape_model, truth_box(s.shape, 0.10))
            fitted.append(fit(pyr, bundle, init, cfg).shape)
        e_ave[mode] = evaluate(fitted, [s.shape for s in test],
                               scheme=DEFAULT_SCHEME, method=mode).e_ave
    elapsed = time.perf_counter() - t0
    ok = e_ave["asm_svm"] <= 3.0 and e_ave["asm_svm"] <= e_ave["classic"] and elapsed < 60.0
    _verdict(8, ok, f"asm_svm E_ave {e_ave['asm_svm']:.4f} <= 3.0 px, "
                    f"classic {e_ave['classic']:.4f} (asm_svm <= classic: "
                    f"{e_ave['asm_svm'] <= e_ave['classic']}), {elapsed:.1f}s < 60s")


def test_criterion_09_determinism(tmp_path):
    images = tmp_path / "images"
    points = tmp_path / "points"
    images.mkdir()
    points.mkdir()
    samples = generate_face_dataset(6, size=96, seed=5)
    write_dataset(samples, images, points)
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"svm": {"epochs": 30}, "seed": 0}))
    bundles = []
    for name in ("a.asmb", "b.asmb"):
        out = tmp_path / name
        rc = main(["train", "--images", str(images), "--points", str(points),
                   "--config", str(config), "--out", str(out)])
        assert rc == 0
        bundles.append(out.read_bytes())
    train_ok = bundles[0] == bundles[1]

    box = ",".join(repr(v) for v in truth_box(samples[0].shape, 0.10))
    pts_files = []
    for name in ("a.pts", "b.pts"):
        out = tmp_path / name
        rc = main(["fit", "--model", str(tmp_path / "a.asmb"),
                   "--image", str(images / "face_000.pgm"),
                   "--box", box, "--out", str(out)])
        assert rc == 0
        pts_files.append(out.read_bytes())
    fit_ok = pts_files[0] == pts_files[1]
    ok = train_ok and fit_ok
    _verdict(9, ok, f"same-seed bundles byte-identical: {train_ok}, "
                    f"repeated fits byte-identical: {fit_ok}")


def test_criterion_10_local_dataset(tmp_path):
    # Optional: point ASMFIT_DTU_DIR at a directory with images/ (.pgm)
    # and points/ (.pts, scheme-consistent) to check the mode ordering on
    # real data; skipped when absent.
    root = os.environ.get("ASMFIT_DTU_DIR")
    if not root or not (Path(root) / "images").is_dir() or not (Path(root) / "points").is_dir():
        print("criterion 10: SKIP  optional dataset absent "
              "(set ASMFIT_DTU_DIR with images/ and points/)")
        pytest.skip("optional local dataset not provided")
    from asmfit.dataset_io import load_annotated, save_bundle

    samples = load_annotated(Path(root) / "images", Path(root) / "points", DEFAULT_SCHEME)
    train, test = split_dataset(samples, max(2, int(len(samples) * 0.7)), seed=0)
    test_images = tmp_path / "images"
    test_points = tmp_path / "points"
    test_images.mkdir()
    test_points.mkdir()
    write_dataset(test, test_images, test_points)
    bundle_path = tmp_path / "model.asmb"
    bundle, _ = train_bundle(train, DEFAULT_SCHEME)
    save_bundle(bundle, bundle_path)
    e_ave = {}
    for mode in ("classic", "asm_svm"):
        report = tmp_path / f"{mode}.txt"
        rc = main(["eval", "--model", str(bundle_path), "--images", str(test_images),
                   "--points", str(test_points), "--mode", mode,
                   "--report", str(report)])
        assert rc == 0
        line = next(l for l in report.read_text().splitlines() if l.startswith("E_ave:"))
        e_ave[mode] = float(line.split(":")[1])
    ok = e_ave["asm_svm"] < e_ave["classic"]
    _verdict(10, ok, f"asm_svm E_ave {e_ave['asm_svm']:.4f} < "
                     f"classic {e_ave['classic']:.4f}")
