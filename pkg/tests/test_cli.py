import json
import time

import numpy as np
import pytest

from tcpdnet import files, synthetic
from tcpdnet.cli import main
from tcpdnet.evaluation import compare_methods
from tcpdnet.interp import bilinear_baseline
from tcpdnet.mosaic import CpfaPattern
from tcpdnet.training import TrainConfig


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    synthetic.make_dataset(root, n_scenes=9, seed=0, height=32, width=32, split=(6, 1, 2))
    return root


def test_help_and_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for cmd in ("synthesize", "train", "demosaick", "eval", "visualize"):
        assert cmd in out
    assert main([]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["synthesize", "--pattern", "1,2,3,4:RGGB", "--out", "x"]) == 1


def test_synthesize_idempotent(dataset, tmp_path):
    assert main(["synthesize", "--data", str(dataset), "--out", str(tmp_path / "a")]) == 0
    assert main(["synthesize", "--data", str(dataset), "--out", str(tmp_path / "b")]) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert len([n for n in names if n.endswith(".png")]) == 9
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()


def test_synthesize_reports_corrupt_scene(dataset, tmp_path, capsys):
    import shutil

    root = tmp_path / "data"
    shutil.copytree(dataset, root)
    (root / "scene_003" / "i045.png").write_bytes(b"broken")
    assert main(["synthesize", "--data", str(root), "--out", str(tmp_path / "o")]) == 2
    assert "i045.png" in capsys.readouterr().err


def test_missing_dataset_is_data_error(tmp_path, monkeypatch):
    monkeypatch.delenv(files.DATA_ENV, raising=False)
    assert main(["synthesize", "--out", str(tmp_path)]) == 2
    assert main(["eval", "--data", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 2


def test_env_var_sets_dataset(dataset, tmp_path, monkeypatch):
    monkeypatch.setenv(files.DATA_ENV, str(dataset))
    assert main(["synthesize", "--out", str(tmp_path)]) == 0


def test_demosaick_bilinear_round_trip(dataset, tmp_path):
    cube = files.load_scene(dataset / "scene_000").astype(np.float64)
    p = CpfaPattern.parse("0,45,135,90:GBRG")
    assert main(["synthesize", "--data", str(dataset), "--out", str(tmp_path / "raw"), "--pattern", str(p)]) == 0
    assert main(["demosaick", str(tmp_path / "raw" / "scene_000.png"), "--out", str(tmp_path / "o")]) == 0
    back = files.load_scene(tmp_path / "o").astype(np.float64)
    raw, q = files.load_raw(tmp_path / "raw" / "scene_000.png")
    assert q == p and back.shape == cube.shape
    expected = np.clip(bilinear_baseline(raw, p), 0, 1)
    assert np.abs(back - expected).max() <= 1 / 65535
    for name in ("s0.png", "aop_dop.png"):
        assert (tmp_path / "o" / name).is_file()
    assert main(["demosaick", str(tmp_path / "raw" / "scene_000.png"), "--method", "tcpdnet", "--out", str(tmp_path / "x")]) == 1


def test_train_demosaick_eval_flow(dataset, tmp_path):
    cfg = TrainConfig(
        arch={"levels": 1, "base_channels": 4, "convs_per_level": 1},
        patch_size=16,
        images_per_batch=2,
        patches_per_image=2,
        iterations=200,
        val_interval=100,
    )
    cfg.save(tmp_path / "cfg.json")
    t = time.time()
    args = ["train", "--config", str(tmp_path / "cfg.json"), "--data", str(dataset), "--seed", "1"]
    assert main([*args, "--out", str(tmp_path / "r1")]) == 0
    assert time.time() - t < 300
    assert main([*args, "--out", str(tmp_path / "r2")]) == 0
    log1 = (tmp_path / "r1" / "train_log.jsonl").read_text()
    assert log1 == (tmp_path / "r2" / "train_log.jsonl").read_text()
    assert json.loads((tmp_path / "r1" / "config.json").read_text())["seed"] == 1
    ckpt = tmp_path / "r1" / "final.pt"

    assert main(["synthesize", "--data", str(dataset), "--out", str(tmp_path / "raw")]) == 0
    raw = tmp_path / "raw" / "scene_000.png"
    assert main(["demosaick", str(raw), "--method", "tcpdnet", "--checkpoint", str(ckpt), "--out", str(tmp_path / "d")]) == 0
    assert files.load_scene(tmp_path / "d").shape == (12, 32, 32)
    assert main(["demosaick", str(raw), "--method", "single_step", "--checkpoint", str(ckpt), "--out", str(tmp_path / "e")]) == 2

    ev = ["eval", "--data", str(dataset), "--method", "bilinear", "--method", f"tcpdnet={ckpt}", "--out"]
    assert main([*ev, str(tmp_path / "ev")]) == 0
    doc = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert set(doc["methods"]) == {"bilinear", "tcpdnet"}
    assert len(doc["methods"]["bilinear"]["scenes"]) == 2
    assert main([*ev, str(tmp_path / "ev2"), "--no-images"]) == 0
    assert (tmp_path / "ev" / "metrics.csv").read_bytes() == (tmp_path / "ev2" / "metrics.csv").read_bytes()


def test_eval_matches_library(dataset, tmp_path):
    assert main(["eval", "--data", str(dataset), "--out", str(tmp_path), "--no-images"]) == 0
    from tcpdnet.training import by_split, load_dataset

    res = compare_methods(
        {"bilinear": lambda r, p: bilinear_baseline(r, p)}, by_split(load_dataset(dataset), "test"), CpfaPattern()
    )
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["methods"]["bilinear"]["mean"]["S0"] == pytest.approx(res["bilinear"][1].S0)


def test_train_bad_config_is_usage_error(dataset, tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"patch_size": 30}))
    assert main(["train", "--config", str(tmp_path / "c.json"), "--data", str(dataset), "--out", str(tmp_path)]) == 1


def test_visualize(dataset, tmp_path):
    assert main(["visualize", str(dataset / "scene_001"), "--out", str(tmp_path)]) == 0
    for name in ("s0", "dop", "aop", "aop_dop"):
        assert (tmp_path / f"scene_001_{name}.png").is_file()
    assert main(["visualize", str(tmp_path / "missing"), "--out", str(tmp_path)]) == 2
