"""Text formats: queries, ground truth and results as JSON lines, params as YAML."""

from __future__ import annotations

import json
import os
from typing import Iterable, Sequence

import numpy as np
import yaml
from scipy.spatial.transform import Rotation

from .camera import CameraPose
from .feature_filter import Query
from .params import PipelineParams
from .pipeline import LocalizationResult
from .synthetic import QueryTruth


def pose_to_record(pose: CameraPose) -> dict:
    """Quaternion ``[w, x, y, z]`` of the world-to-camera rotation, centre and focal."""
    quat = Rotation.from_matrix(pose.rotation).as_quat(scalar_first=True)
    if quat[0] < 0:  # one canonical sign so equal poses serialise identically
        quat = -quat
    return {"quaternion": quat.tolist(), "center": pose.center.tolist(), "focal": pose.focal}


def pose_from_record(rec: dict, principal_point=(0.0, 0.0)) -> CameraPose:
    rot = Rotation.from_quat(rec["quaternion"], scalar_first=True).as_matrix()
    return CameraPose(rot, rec["center"], rec["focal"], rec.get("principal_point", principal_point))


def _read_lines(path) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write_lines(records: Iterable[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n")


# queries ---------------------------------------------------------------------

def query_to_record(query: Query) -> dict:
    return {
        "id": int(query.id),
        "width": int(query.width),
        "height": int(query.height),
        "features": [
            {"x": float(x), "y": float(y), "descriptor": d.tolist()}
            for (x, y), d in zip(query.pixels, query.descriptors)
        ],
    }


def query_from_record(rec: dict) -> Query:
    feats = rec.get("features", [])
    pixels = np.array([[f["x"], f["y"]] for f in feats], dtype=np.float64).reshape(-1, 2)
    desc = np.array([f["descriptor"] for f in feats], dtype=np.float64)
    return Query(int(rec["id"]), int(rec["width"]), int(rec["height"]), pixels, desc)


def write_queries(queries: Sequence[Query], path) -> None:
    _write_lines((query_to_record(q) for q in queries), path)


def read_queries(path) -> list[Query]:
    return [query_from_record(r) for r in _read_lines(path)]


# ground truth ----------------------------------------------------------------

def write_ground_truth(truths: Sequence[QueryTruth], path, meta: dict | None = None) -> None:
    """One record per query; an optional first ``{"meta": ...}`` line carries scene facts."""
    records = [{"meta": meta}] if meta else []
    for t in truths:
        rec = {"id": int(t.id), **pose_to_record(t.pose), "principal_point": t.pose.principal_point.tolist()}
        rec["point_ids"] = np.asarray(t.point_ids).tolist()
        records.append(rec)
    _write_lines(records, path)


def read_ground_truth(path) -> tuple[dict[int, CameraPose], dict]:
    """Ground-truth poses by query id, plus the metadata line (empty if absent)."""
    poses, meta = {}, {}
    for rec in _read_lines(path):
        if "meta" in rec:
            meta = rec["meta"]
            continue
        poses[int(rec["id"])] = pose_from_record(rec)
    return poses, meta


# results ---------------------------------------------------------------------

def result_to_record(res: LocalizationResult, include_timings: bool = False) -> dict:
    rec = {
        "id": int(res.query_id),
        "status": res.status,
        "failed_stage": res.failed_stage,
        "inlier_count": int(res.inlier_count),
        "stage_counts": {k: int(v) for k, v in res.stage_counts.items()},
    }
    if res.pose is not None:
        rec.update(pose_to_record(res.pose))
    else:
        rec.update({"quaternion": None, "center": None, "focal": None})
    if include_timings:
        rec["timings"] = {k: round(float(v), 3) for k, v in res.timings.items()}
    return rec


def result_from_record(rec: dict) -> LocalizationResult:
    pose = pose_from_record(rec) if rec.get("quaternion") is not None else None
    return LocalizationResult(
        int(rec["id"]),
        rec["status"],
        pose,
        int(rec.get("inlier_count", 0)),
        dict(rec.get("stage_counts", {})),
        dict(rec.get("timings", {})),
        rec.get("failed_stage"),
    )


def write_results(results: Sequence[LocalizationResult], path, include_timings: bool = False) -> None:
    ordered = sorted(results, key=lambda r: r.query_id)
    _write_lines((result_to_record(r, include_timings) for r in ordered), path)


def read_results(path) -> list[LocalizationResult]:
    return [result_from_record(r) for r in _read_lines(path)]


# params ----------------------------------------------------------------------

def load_params(path: str | os.PathLike | None) -> PipelineParams:
    """Read a YAML (or JSON) mapping of parameter overrides; ``None`` gives the defaults."""
    if path is None:
        return PipelineParams()
    with open(path, "r", encoding="utf-8") as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError("params file must hold a key/value mapping")
    return PipelineParams.from_dict(data)


def dump_params(params: PipelineParams, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(params.to_dict(), fh, sort_keys=False)
