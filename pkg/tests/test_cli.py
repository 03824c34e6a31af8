import json

import pytest

from cpfloc import container
from cpfloc.cli import main
from cpfloc.io import read_ground_truth, read_results


@pytest.fixture(scope="module")
def scene_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "scene.yaml"
    cfg.write_text("num_points: 2000\nnum_db_images: 20\nnum_queries: 3\ncluster_count: 600\nimage_size: [800, 600]\n")
    params = root / "params.yaml"
    params.write_text("aux_iterations: 200\nfinal_iterations: 200\n")
    assert main(["synth", "--config", str(cfg), "--words", "32", "--seed", "3", "--output", str(root / "scene")]) == 0
    return root


def _localize(root, name, *extra):
    out = root / name
    argv = ["localize", str(root / "scene" / "model.cpfl"), str(root / "scene" / "queries.jsonl"),
            "--params", str(root / "params.yaml"), "--output", str(out), *extra]
    assert main(argv) == 0
    return out


def test_synth_writes_everything(scene_dir):
    names = {p.name for p in (scene_dir / "scene").iterdir()}
    assert names == {"model.cpfl", "raw.npz", "queries.jsonl", "ground_truth.jsonl"}
    poses, meta = read_ground_truth(scene_dir / "scene" / "ground_truth.jsonl")
    assert sorted(poses) == [0, 1, 2]
    assert meta["config"]["seed"] == 3 and meta["config"]["image_size"] == [800, 600] and meta["scene_diameter"] > 0


def test_localize_is_byte_deterministic(scene_dir):
    a = _localize(scene_dir, "a.jsonl")
    b = _localize(scene_dir, "b.jsonl", "--threads", "2")
    assert a.read_bytes() == b.read_bytes()
    assert len(read_results(a)) == 3


def test_ablation_flags_and_timings(scene_dir):
    out = _localize(scene_dir, "abl.jsonl", "--ablate", "qsr", "--ablate", "pfl", "--timings")
    rec = json.loads(out.read_text().splitlines()[0])
    assert "timings" in rec and {"id", "status", "quaternion", "center", "focal", "inlier_count", "stage_counts"} <= rec.keys()
    with pytest.raises(SystemExit):
        _localize(scene_dir, "bad.jsonl", "--ablate", "everything")


def test_evaluate_report(scene_dir, capsys):
    res = _localize(scene_dir, "eval.jsonl")
    gt = scene_dir / "scene" / "ground_truth.jsonl"
    assert main(["evaluate", str(res), str(gt), "--json"]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report["n_queries"] == 3 and len(report["buckets"]) == 3
    assert "scene_diameter" in report["notes"]
    assert main(["evaluate", str(res), str(gt), "--distance-scale", "0.01"]) == 0
    assert "center error quartiles" in capsys.readouterr().out


def test_mem_report(scene_dir, capsys):
    assert main(["mem-report", str(scene_dir / "scene" / "model.cpfl"), "--json"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["signature_bytes_per_entry"] == 8 and rep["entry_reduction"] == 8.5
    assert rep["total"] == (scene_dir / "scene" / "model.cpfl").stat().st_size


def test_vocab_train_then_embed(scene_dir):
    raw = scene_dir / "scene" / "raw.npz"
    vocab = scene_dir / "vocab.npz"
    model = scene_dir / "rebuilt.cpfl"
    assert main(["vocab-train", str(raw), "--words", "16", "--sample", "3000", "--output", str(vocab)]) == 0
    assert main(["embed", str(raw), "--vocab", str(vocab), "--bits", "32", "--output", str(model)]) == 0
    m = container.read_model(model)
    assert m.bits == 32 and m.vocab.k == 16 and m.n_points == 2000
