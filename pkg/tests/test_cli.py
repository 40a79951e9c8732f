import json

import numpy as np
import pytest

from asmfit.cli import (
    GROUP_PALETTE,
    MARKER_COLOR,
    _parse_box,
    load_train_settings,
    main,
    render_overlay,
    truth_box,
)
from asmfit.dataset_io import load_points_file
from asmfit.errors import BoxError
from asmfit.imaging import GrayImage
from asmfit.scheme import single_contour_scheme
from asmfit.shape_model import Shape
from asmfit.synthetic import write_dataset


@pytest.fixture(scope="module")
def cli_env(faces96, tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    images = root / "images"
    points = root / "points"
    images.mkdir()
    points.mkdir()
    write_dataset(faces96[:6], images, points)
    config = root / "config.json"
    config.write_text(json.dumps({"svm": {"epochs": 30}}))
    bundle = root / "model.asmb"
    rc = main(["train", "--images", str(images), "--points", str(points),
               "--config", str(config), "--out", str(bundle)])
    assert rc == 0
    return {"root": root, "images": images, "points": points,
            "config": config, "bundle": bundle, "samples": faces96[:6]}


def box_arg(shape, inflate=0.10):
    return ",".join(f"{v:.3f}" for v in truth_box(shape, inflate))


# ------------------------------------------------------------------ train

def test_train_output_and_determinism(cli_env, capsys):
    second = cli_env["root"] / "model2.asmb"
    rc = main(["train", "--images", str(cli_env["images"]),
               "--points", str(cli_env["points"]),
               "--config", str(cli_env["config"]), "--out", str(second)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "modes: " in out
    assert "level 0: " in out and "positive" in out
    assert second.read_bytes() == cli_env["bundle"].read_bytes()


def test_train_rejects_unknown_config_keys(cli_env, tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"typo_key": 1}))
    rc = main(["train", "--images", str(cli_env["images"]),
               "--points", str(cli_env["points"]),
               "--config", str(bad), "--out", str(tmp_path / "x.asmb")])
    err = capsys.readouterr().err
    assert rc == 2
    assert "unknown config keys" in err
    assert err.count("\n") == 1  # single-line diagnostic

    bad.write_text(json.dumps({"svm": {"learning_rate": 0.1}}))
    rc = main(["train", "--images", str(cli_env["images"]),
               "--points", str(cli_env["points"]),
               "--config", str(bad), "--out", str(tmp_path / "x.asmb")])
    assert rc == 2
    assert "unknown svm config keys" in capsys.readouterr().err


def test_train_settings_defaults():
    settings = load_train_settings(None)
    assert settings["fit_config"].levels == 3
    assert settings["fit_config"].profile_lengths == (3, 7, 15)
    assert settings["svm_config"].epochs == 200
    assert settings["scheme"].total == 68
    assert settings["seed"] == 0


# -------------------------------------------------------------------- fit

def test_fit_writes_points_and_overlay(cli_env, tmp_path, capsys):
    sample = cli_env["samples"][0]
    out_pts = tmp_path / "fit.pts"
    overlay = tmp_path / "fit.ppm"
    rc = main(["fit", "--model", str(cli_env["bundle"]),
               "--image", str(cli_env["images"] / f"{sample.name}.pgm"),
               "--box", box_arg(sample.shape),
               "--out", str(out_pts), "--overlay", str(overlay)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "fit iterations: level 0:" in out
    assert f"wrote {out_pts}" in out
    fitted = load_points_file(out_pts)
    assert fitted.n == 68
    err = np.linalg.norm(fitted.points - sample.shape.points, axis=1).mean()
    assert err < 2.0
    data = overlay.read_bytes()
    assert data.startswith(b"P6\n96 96\n255\n")
    rgb = np.frombuffer(data.split(b"255\n", 1)[1], dtype=np.uint8).reshape(96, 96, 3)
    assert (rgb == np.array(MARKER_COLOR, dtype=np.uint8)).all(axis=2).any()


def test_fit_classic_mode(cli_env, tmp_path):
    sample = cli_env["samples"][1]
    out_pts = tmp_path / "classic.pts"
    rc = main(["fit", "--model", str(cli_env["bundle"]),
               "--image", str(cli_env["images"] / f"{sample.name}.pgm"),
               "--box", box_arg(sample.shape), "--mode", "classic",
               "--out", str(out_pts)])
    assert rc == 0
    assert load_points_file(out_pts).n == 68


def test_fit_bad_box_arguments(cli_env, tmp_path, capsys):
    image = str(cli_env["images"] / "face_000.pgm")
    base = ["fit", "--model", str(cli_env["bundle"]), "--image", image,
            "--out", str(tmp_path / "o.pts")]
    rc = main(base + ["--box", "1,2,3"])
    assert rc == 2
    assert "box" in capsys.readouterr().err
    rc = main(base + ["--box", "1,2,three,4"])
    assert rc == 2
    capsys.readouterr()
    rc = main(base + ["--box=-500,-500,20,20"])
    assert rc == 2
    assert "outside" in capsys.readouterr().err


def test_fit_missing_model_is_diagnosed(cli_env, tmp_path, capsys):
    rc = main(["fit", "--model", str(tmp_path / "nope.asmb"),
               "--image", str(cli_env["images"] / "face_000.pgm"),
               "--box", "10,10,50,50", "--out", str(tmp_path / "o.pts")])
    err = capsys.readouterr().err
    assert rc == 2
    assert err.startswith("asmfit fit: ")


def test_fit_rejects_unknown_mode(cli_env, tmp_path):
    with pytest.raises(SystemExit):
        main(["fit", "--model", str(cli_env["bundle"]),
              "--image", str(cli_env["images"] / "face_000.pgm"),
              "--box", "10,10,50,50", "--out", str(tmp_path / "o.pts"),
              "--mode", "hybrid"])


# ------------------------------------------------------------------- eval

def test_eval_writes_report(cli_env, tmp_path, capsys):
    report = tmp_path / "report.txt"
    rc = main(["eval", "--model", str(cli_env["bundle"]),
               "--images", str(cli_env["images"]), "--points", str(cli_env["points"]),
               "--mode", "asm_svm", "--report", str(report)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "method: asm_svm" in out
    assert "E_ave: " in out
    text = report.read_text()
    assert "method: asm_svm" in text
    assert "metric: euclidean" in text
    assert "images: 6" in text
    assert "\tface_000\t" in text
    assert "face_boundary\t" in text
    assert "mouth\t" in text


def test_eval_metric_flag(cli_env, tmp_path):
    report = tmp_path / "l1.txt"
    rc = main(["eval", "--model", str(cli_env["bundle"]),
               "--images", str(cli_env["images"]), "--points", str(cli_env["points"]),
               "--mode", "classic", "--report", str(report),
               "--metric", "abs-coord", "--box-inflate", "0.2"])
    assert rc == 0
    assert "metric: abs-coord" in report.read_text()


# ------------------------------------------------------------------ units

def test_parse_box():
    assert _parse_box("1,2.5,3,4") == (1.0, 2.5, 3.0, 4.0)
    with pytest.raises(BoxError):
        _parse_box("1,2,3,4,5")
    with pytest.raises(BoxError):
        _parse_box("a,b,c,d")


def test_truth_box_hand_case():
    shape = Shape(np.array([[10.0, 20.0], [30.0, 60.0], [20.0, 40.0]]))
    assert truth_box(shape, 0.10) == pytest.approx((9.0, 18.0, 22.0, 44.0))
    assert truth_box(shape, 0.0) == pytest.approx((10.0, 20.0, 20.0, 40.0))


def test_render_overlay_marks_landmarks():
    image = GrayImage(np.full((20, 20), 100.0))
    shape = Shape(np.array([[5.0, 5.0], [14.0, 5.0], [14.0, 14.0]]))
    rgb = render_overlay(image, shape, single_contour_scheme(3))
    assert rgb.shape == (20, 20, 3)
    marker = np.array(MARKER_COLOR, dtype=np.uint8)
    for x, y in shape.points:
        assert (rgb[int(y), int(x)] == marker).all()
    # the contour between landmarks carries the first palette color
    assert (rgb[5, 9] == np.array(GROUP_PALETTE[0], dtype=np.uint8)).all()
    # untouched background stays gray
    assert (rgb[0, 0] == 100).all()
