"""Command-line surface: train, fit, eval."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .dataset_io import (
    load_annotated,
    load_bundle,
    load_image,
    save_bundle,
    save_ppm,
    write_points_file,
)
from .errors import AsmFitError, BoxError, DatasetError
from .evaluation import evaluate, format_report
from .imaging import GrayImage, build_pyramid
from .scheme import DEFAULT_SCHEME, LandmarkScheme
from .search import FitConfig, config_for_mode, fit, init_shape_from_box
from .svm import SvmTrainConfig
from .training import train_bundle

_CONFIG_KEYS = {
    "scheme", "levels", "profile_lengths", "classic_profile_length", "search_radius",
    "max_iters_per_level", "convergence", "q", "c", "canny_low", "canny_high",
    "variance_fraction", "clamp_alpha", "eps", "svm", "negatives_per_positive",
    "offset_range", "seed",
}
_SVM_KEYS = {"c_penalty", "epochs", "batch_size"}

MARKER_COLOR = (255, 0, 0)
GROUP_PALETTE = (
    (0, 200, 0), (0, 128, 255), (255, 200, 0), (200, 0, 200),
    (0, 220, 220), (255, 128, 0), (128, 128, 255), (0, 80, 160),
)


def load_train_settings(path):
    """Training settings from a JSON file merged over defaults."""
    raw = {}
    if path is not None:
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - _CONFIG_KEYS
        if unknown:
            raise DatasetError(f"unknown config keys: {sorted(unknown)}")
        svm_unknown = set(raw.get("svm", {})) - _SVM_KEYS
        if svm_unknown:
            raise DatasetError(f"unknown svm config keys: {sorted(svm_unknown)}")
    scheme = DEFAULT_SCHEME
    if "scheme" in raw:
        scheme = LandmarkScheme.from_jsonable(raw["scheme"])
    levels = int(raw.get("levels", 3))
    fit_config = FitConfig(
        levels=levels,
        profile_lengths=tuple(raw.get("profile_lengths", (3, 7, 15)[:levels])),
        search_radius=int(raw.get("search_radius", 3)),
        max_iters_per_level=int(raw.get("max_iters_per_level", 20)),
        convergence=float(raw.get("convergence", 0.9)),
        q=float(raw.get("q", 10.0)),
        c=float(raw.get("c", 2.0)),
        canny_low=float(raw.get("canny_low", 50.0)),
        canny_high=float(raw.get("canny_high", 150.0)),
    )
    svm_raw = raw.get("svm", {})
    svm_config = SvmTrainConfig(
        c_penalty=float(svm_raw.get("c_penalty", 1.0)),
        epochs=int(svm_raw.get("epochs", 200)),
        batch_size=int(svm_raw.get("batch_size", 32)),
    )
    return {
        "scheme": scheme,
        "fit_config": fit_config,
        "svm_config": svm_config,
        "variance_fraction": float(raw.get("variance_fraction", 0.975)),
        "clamp_alpha": float(raw.get("clamp_alpha", 3.0)),
        "classic_length": int(raw.get("classic_profile_length", 15)),
        "negatives_per_positive": int(raw.get("negatives_per_positive", 4)),
        "offset_range": tuple(raw.get("offset_range", (2, 8))),
        "eps": float(raw.get("eps", 1e-3)),
        "seed": int(raw.get("seed", 0)),
    }


def cmd_train(args) -> int:
    settings = load_train_settings(args.config)
    scheme = settings.pop("scheme")
    samples = load_annotated(args.images, args.points, scheme)
    bundle, summary = train_bundle(samples, scheme, **settings)
    save_bundle(bundle, args.out)
    print(f"modes: {summary.retained_modes}")
    for lv, (pos, neg) in enumerate(zip(summary.level_positives, summary.level_negatives)):
        print(f"level {lv}: {pos} positive, {neg} negative windows")
    if summary.skipped:
        print(f"skipped samples (landmark outside level image): {summary.skipped}")
    return 0


def _parse_box(text):
    parts = text.split(",")
    if len(parts) != 4:
        raise BoxError(f"box must be x,y,w,h, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise BoxError(f"non-numeric box component in {text!r}") from None


def _check_box_overlaps(box, image: GrayImage) -> None:
    x, y, w, h = box
    if x + w <= 0 or y + h <= 0 or x >= image.width or y >= image.height:
        raise BoxError(
            f"box {box} lies outside the {image.width}x{image.height} image"
        )


def render_overlay(image: GrayImage, shape, scheme) -> np.ndarray:
    """Gray image as RGB with contour segments and red 3x3 landmark markers."""
    rgb = np.repeat(
        np.clip(np.rint(image.pixels), 0, 255).astype(np.uint8)[:, :, None], 3, axis=2
    )
    h, w = image.pixels.shape

    def draw_segment(a, b, color):
        steps = max(2, int(np.ceil(np.linalg.norm(b - a) * 2)))
        for t in np.linspace(0.0, 1.0, steps):
            x, y = a + t * (b - a)
            cx, cy = int(round(x)), int(round(y))
            if 0 <= cx < w and 0 <= cy < h:
                rgb[cy, cx] = color

    for gi, (group, (_, sl)) in enumerate(zip(scheme.groups, scheme.group_slices())):
        pts = shape.points[sl]
        color = GROUP_PALETTE[gi % len(GROUP_PALETTE)]
        pairs = list(zip(pts[:-1], pts[1:]))
        if group.closed:
            pairs.append((pts[-1], pts[0]))
        for a, b in pairs:
            draw_segment(a, b, color)
    for x, y in shape.points:
        cx, cy = int(round(x)), int(round(y))
        y0, y1 = max(cy - 1, 0), min(cy + 2, h)
        x0, x1 = max(cx - 1, 0), min(cx + 2, w)
        rgb[y0:y1, x0:x1] = MARKER_COLOR
    return rgb


def cmd_fit(args) -> int:
    bundle = load_bundle(args.model)
    image = load_image(args.image)
    box = _parse_box(args.box)
    _check_box_overlaps(box, image)
    config = config_for_mode(bundle, args.mode)
    pyramid = build_pyramid(image, config.levels)
    init = init_shape_from_box(bundle.shape_model, box)
    result = fit(pyramid, bundle, init, config)
    write_points_file(result.shape, args.out)
    if args.overlay:
        save_ppm(render_overlay(image, result.shape, bundle.scheme), args.overlay)
    iters = ", ".join(f"level {lv}: {n}" for lv, n in enumerate(result.iterations))
    print(f"fit iterations: {iters}")
    print(f"wrote {args.out}")
    return 0


def truth_box(shape, inflate: float):
    """Ground-truth bounding box inflated by `inflate`, center kept."""
    x0, y0, x1, y1 = shape.bounding_box()
    w, h = x1 - x0, y1 - y0
    pad_x, pad_y = w * inflate / 2, h * inflate / 2
    return (x0 - pad_x, y0 - pad_y, w * (1 + inflate), h * (1 + inflate))


def cmd_eval(args) -> int:
    bundle = load_bundle(args.model)
    samples = load_annotated(args.images, args.points, bundle.scheme)
    config = config_for_mode(bundle, args.mode)
    fitted = []
    for sample in samples:
        pyramid = build_pyramid(sample.image, config.levels)
        init = init_shape_from_box(bundle.shape_model, truth_box(sample.shape, args.box_inflate))
        fitted.append(fit(pyramid, bundle, init, config).shape)
    report = evaluate(
        fitted,
        [s.shape for s in samples],
        scheme=bundle.scheme,
        metric=args.metric,
        method=args.mode,
        image_names=[s.name for s in samples],
    )
    Path(args.report).write_text(format_report(report))
    print(f"method: {args.mode}")
    print(f"E_ave: {report.e_ave:.6f}")
    print(f"wrote {args.report}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="asmfit",
        description="Statistical shape-model face alignment: train, fit, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model bundle from annotated images")
    p_train.add_argument("--images", required=True, help="directory of .pgm images")
    p_train.add_argument("--points", required=True, help="directory of .pts annotations")
    p_train.add_argument("--config", default=None, help="JSON training settings")
    p_train.add_argument("--out", required=True, help="output bundle path")
    p_train.set_defaults(func=cmd_train)

    p_fit = sub.add_parser("fit", help="fit landmarks to one image")
    p_fit.add_argument("--model", required=True, help="trained bundle")
    p_fit.add_argument("--image", required=True, help="input .pgm image")
    p_fit.add_argument("--box", required=True, help="face box as x,y,w,h")
    p_fit.add_argument("--out", required=True, help="output .pts path")
    p_fit.add_argument("--overlay", default=None, help="optional overlay .ppm path")
    p_fit.add_argument("--mode", choices=("classic", "asm_svm"), default="asm_svm")
    p_fit.set_defaults(func=cmd_fit)

    p_eval = sub.add_parser("eval", help="fit a test set and report mean landmark error")
    p_eval.add_argument("--model", required=True, help="trained bundle")
    p_eval.add_argument("--images", required=True, help="directory of .pgm images")
    p_eval.add_argument("--points", required=True, help="directory of .pts annotations")
    p_eval.add_argument("--mode", choices=("classic", "asm_svm"), required=True)
    p_eval.add_argument("--report", required=True, help="output report path")
    p_eval.add_argument("--box-inflate", type=float, default=0.10,
                        help="fractional bounding-box inflation (default 0.10)")
    p_eval.add_argument("--metric", choices=("euclidean", "abs-coord"), default="euclidean")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AsmFitError, OSError) as exc:
        print(f"asmfit {args.command}: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main(sys.argv[1:]))
