import numpy as np
import pytest

from cpfloc import container
from cpfloc.camera import CameraPose
from cpfloc.container import ContainerError, entry_table_bytes, from_bytes, memory_report, read_model, to_bytes, write_model
from cpfloc.embedding import CompressedModel, HammingEmbedding, Vocabulary
from cpfloc.io import (
    dump_params,
    load_params,
    read_ground_truth,
    read_queries,
    read_results,
    write_ground_truth,
    write_queries,
    write_results,
)
from cpfloc.params import PipelineParams
from cpfloc.pipeline import LocalizationResult
from cpfloc.scene_model import VisibilityGraph


def test_container_round_trip_is_bit_exact(small_model, tmp_path):
    path = tmp_path / "m.cpfl"
    size = write_model(small_model, path)
    raw = path.read_bytes()
    assert size == len(raw) and raw[:4] == b"CPFL"
    again = read_model(path)
    assert to_bytes(again) == raw
    assert np.array_equal(again.entry_signature, small_model.entry_signature)
    assert np.array_equal(again.positions, small_model.positions)
    assert np.array_equal(again.graph.point_images, small_model.graph.point_images)


def test_container_layout_sizes(small_model):
    rep = memory_report(small_model)
    n, b = small_model.n_entries, small_model.bits // 8
    assert rep.sections["entries"] == 8 + n * (8 + b)
    assert rep.sections["points"] == 8 + small_model.n_points * 28
    assert rep.sections["visibility"] == 8 + small_model.graph.n_edges * 8
    assert rep.total == len(to_bytes(small_model))


def test_memory_examples():
    sig, table, base = entry_table_bytes(1_000_000, 64)
    assert sig == 8_000_000 and base / table == 8.5
    assert entry_table_bytes(1, 128)[0] == 16


def test_empty_model_reports_zeros():
    vocab = Vocabulary.from_centroids(np.eye(3, 64))
    emb = HammingEmbedding.from_arrays(np.eye(64), np.zeros((3, 64)))
    graph = VisibilityGraph.from_edges([], [], 0, 0)
    model = CompressedModel.from_entries(np.zeros((0, 3)), [], [], np.zeros((0, 8), np.uint8), graph, vocab, emb)
    rep = memory_report(model)
    assert (rep.n_entries, rep.signature_payload, rep.entry_table, rep.baseline_entry_table) == (0, 0, 0, 0)
    assert from_bytes(to_bytes(model)).n_entries == 0


def test_bad_magic_and_truncation(small_model):
    raw = to_bytes(small_model)
    with pytest.raises(ContainerError, match="magic"):
        from_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ContainerError):
        from_bytes(raw[:-3])
    with pytest.raises(ContainerError):
        from_bytes(raw + b"\0")


def test_unsupported_version(small_model):
    raw = bytearray(to_bytes(small_model))
    raw[4:8] = (container.VERSION + 1).to_bytes(4, "little")
    with pytest.raises(ContainerError, match="version"):
        from_bytes(bytes(raw))


def test_queries_round_trip(small_scene, tmp_path):
    path = tmp_path / "q.jsonl"
    write_queries(small_scene.queries, path)
    back = read_queries(path)
    for a, b in zip(small_scene.queries, back):
        assert (a.id, a.width, a.height) == (b.id, b.width, b.height)
        assert np.array_equal(a.pixels, b.pixels) and np.array_equal(a.descriptors, b.descriptors)


def test_ground_truth_round_trip(small_scene, tmp_path):
    path = tmp_path / "gt.jsonl"
    write_ground_truth(small_scene.truths, path, {"scene_diameter": 1.5})
    poses, meta = read_ground_truth(path)
    assert meta == {"scene_diameter": 1.5}
    for t in small_scene.truths:
        p = poses[t.id]
        np.testing.assert_allclose(p.rotation, t.pose.rotation, atol=1e-12)
        assert np.array_equal(p.center, t.pose.center) and p.focal == t.pose.focal
        assert np.array_equal(p.principal_point, t.pose.principal_point)


def test_results_round_trip_and_sorting(tmp_path):
    pose = CameraPose(np.diag([1.0, -1.0, -1.0]), [1, 2, 3], 812.5)
    results = [
        LocalizationResult(5, "failed", failed_stage="visibility"),
        LocalizationResult(2, "localized", pose, 40, timings={"final": 1.23456}),
    ]
    path = tmp_path / "r.jsonl"
    write_results(results, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith('{"center":[1.0,2.0,3.0]') and '"timings"' not in lines[0]
    back = read_results(path)
    assert [r.query_id for r in back] == [2, 5]
    np.testing.assert_allclose(back[0].pose.rotation, pose.rotation, atol=1e-12)
    assert back[0].inlier_count == 40 and back[1].pose is None and back[1].failed_stage == "visibility"
    write_results(results, path, include_timings=True)
    assert read_results(path)[0].timings == {"final": 1.235}


def test_params_round_trip(tmp_path):
    p = PipelineParams(top_images=15, known_focal=900.0).ablate("qsr")
    path = tmp_path / "params.yaml"
    dump_params(p, path)
    assert load_params(path) == p
    assert load_params(None) == PipelineParams()


def test_params_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "params.yaml"
    path.write_text("top_images: 5\nlearning_rate: 3\n")
    with pytest.raises(ValueError, match="learning_rate"):
        load_params(path)
