"""End-to-end localization: the cascade wired together behind an estimator."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .camera import CameraPose
from .embedding import CompressedModel
from .feature_filter import Query, QueryFeatures, find_candidates, score_and_partition
from .geometry_pose import (
    estimate_auxiliary_pose,
    estimate_final_pose,
    geometry_filter,
    select_top_scored,
    spatial_reconfigure,
)
from .params import PipelineParams
from .visibility_filter import run_visibility_filter

STAGE_COUNT_KEYS = ("candidates", "matches", "fc", "selected", "reconfigured", "pool", "recovered")


@dataclass
class LocalizationResult:
    query_id: int
    status: str
    pose: Optional[CameraPose] = None
    inlier_count: int = 0
    stage_counts: dict = field(default_factory=lambda: dict.fromkeys(STAGE_COUNT_KEYS, 0))
    timings: dict = field(default_factory=dict)
    failed_stage: Optional[str] = None

    @property
    def localized(self) -> bool:
        return self.status == "localized"


def localization_status(inlier_count: int, min_inliers: int) -> str:
    """A pose counts as localized once it has at least ``min_inliers`` inliers."""
    return "localized" if inlier_count >= min_inliers else "failed"


def _failed(result: LocalizationResult, stage: str) -> LocalizationResult:
    result.status = "failed"
    result.failed_stage = stage
    return result


def localize(query: Query | QueryFeatures, model: CompressedModel, params: PipelineParams, seed=0) -> LocalizationResult:
    """Localize one query against a compressed model.

    ``seed`` (an int or a sequence of ints) drives both RANSAC stages.  Any stage
    that runs out of matches ends the run with status ``failed`` and names
    itself in ``failed_stage``.
    """
    if params.bits != model.bits:
        raise ValueError(f"params expect {params.bits}-bit signatures but the model stores {model.bits}")
    rng = np.random.default_rng(seed)
    res = LocalizationResult(int(query.id), "failed")
    counts, timings = res.stage_counts, res.timings
    clock = time.perf_counter

    t0 = clock()
    feats = query.encode(model) if isinstance(query, Query) else query
    tau = params.baseline_threshold if params.baseline_voting else params.hamming_threshold
    candidates = find_candidates(feats, model, tau)
    pool_m, fc = score_and_partition(candidates, params)
    counts.update(candidates=len(candidates), matches=len(pool_m), fc=len(fc))
    timings["feature"] = (clock() - t0) * 1e3
    if len(fc) == 0:
        return _failed(res, "feature")

    t0 = clock()
    vis = run_visibility_filter(pool_m, fc, model.graph, params)
    selected, pool = vis.selected, vis.pool
    counts.update(selected=len(selected), pool=len(pool))
    timings["visibility"] = (clock() - t0) * 1e3
    if len(selected) == 0:
        return _failed(res, "visibility")

    t0 = clock()
    idx, _ = spatial_reconfigure(selected, feats.width, feats.height, params.max_selected, params.inferred_ratio)
    if not params.spatial_reconfiguration:
        chosen = selected.take(idx)
        n_vfc = int(chosen.vfc.sum())
        idx = select_top_scored(selected, n_vfc, len(idx) - n_vfc)
    reconf = selected.take(idx)
    counts["reconfigured"] = len(reconf)
    timings["reconfiguration"] = (clock() - t0) * 1e3

    t0 = clock()
    pp = feats.principal_point
    aux = estimate_auxiliary_pose(model.positions[reconf.point_id], reconf.pixel, pp, params, rng, reconf.query_id)
    timings["auxiliary"] = (clock() - t0) * 1e3
    if aux is None:
        return _failed(res, "auxiliary")

    t0 = clock()
    keep = geometry_filter(model.positions[pool.point_id], pool.pixel, aux.pose, params.recovery_threshold)
    recovered = pool.take(keep)
    counts["recovered"] = len(recovered)
    timings["geometry"] = (clock() - t0) * 1e3

    t0 = clock()
    final = estimate_final_pose(model.positions[recovered.point_id], recovered.pixel, aux.focal, pp, params, rng, recovered.query_id)
    timings["final"] = (clock() - t0) * 1e3
    if final is None:
        return _failed(res, "final")
    res.pose = final.pose
    res.inlier_count = final.inlier_count
    if localization_status(final.inlier_count, params.min_inliers) != "localized":
        return _failed(res, "final")
    res.status = "localized"
    return res


class CascadedLocalizer(BaseEstimator):
    """Estimator facade over :func:`localize`.

    ``fit`` takes a :class:`CompressedModel`; ``predict`` takes a sequence of
    :class:`Query` (or already encoded :class:`QueryFeatures`) and returns one
    :class:`LocalizationResult` per query, ordered by query id.  Query ``q`` is
    localized with the seed ``(random_state, q.id)`` so results do not depend
    on ``n_jobs`` or on the order of the input.
    """

    def __init__(
        self,
        hamming_threshold=19,
        image_ratio_threshold=0.3,
        weight_sigma=None,
        score_threshold=0.8,
        top_images=20,
        pool_images=100,
        max_selected=100,
        inferred_ratio=0.33,
        recovery_threshold=10.0,
        final_threshold=4.0,
        aux_iterations=1000,
        final_iterations=1000,
        min_inliers=12,
        known_focal=None,
        spatial_reconfiguration=True,
        principal_focal=True,
        baseline_voting=False,
        baseline_threshold=11,
        zero_distance_weight=False,
        focal_grid_size=40,
        focal_refine_iterations=30,
        random_state=0,
        n_jobs=1,
    ):
        self.hamming_threshold = hamming_threshold
        self.image_ratio_threshold = image_ratio_threshold
        self.weight_sigma = weight_sigma
        self.score_threshold = score_threshold
        self.top_images = top_images
        self.pool_images = pool_images
        self.max_selected = max_selected
        self.inferred_ratio = inferred_ratio
        self.recovery_threshold = recovery_threshold
        self.final_threshold = final_threshold
        self.aux_iterations = aux_iterations
        self.final_iterations = final_iterations
        self.min_inliers = min_inliers
        self.known_focal = known_focal
        self.spatial_reconfiguration = spatial_reconfiguration
        self.principal_focal = principal_focal
        self.baseline_voting = baseline_voting
        self.baseline_threshold = baseline_threshold
        self.zero_distance_weight = zero_distance_weight
        self.focal_grid_size = focal_grid_size
        self.focal_refine_iterations = focal_refine_iterations
        self.random_state = random_state
        self.n_jobs = n_jobs

    @classmethod
    def from_params(cls, params: PipelineParams, **kwargs) -> "CascadedLocalizer":
        values = {f.name: getattr(params, f.name) for f in fields(params) if f.name != "bits"}
        values.update(kwargs)
        return cls(**values)

    def pipeline_params(self, bits: int) -> PipelineParams:
        names = {f.name for f in fields(PipelineParams)} - {"bits"}
        return PipelineParams(bits=bits, **{n: getattr(self, n) for n in names})

    def fit(self, model: CompressedModel, y=None):
        if not isinstance(model, CompressedModel):
            raise TypeError("fit expects a CompressedModel")
        self.params_ = self.pipeline_params(model.bits)
        self.model_ = model
        return self

    def localize(self, query: Query | QueryFeatures) -> LocalizationResult:
        check_is_fitted(self, "model_")
        return localize(query, self.model_, self.params_, seed=(int(self.random_state), int(query.id)))

    def predict(self, queries: Sequence[Query | QueryFeatures]) -> list[LocalizationResult]:
        check_is_fitted(self, "model_")
        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(max_workers=self.n_jobs) as pool:
                results = list(pool.map(self.localize, queries))
        else:
            results = [self.localize(q) for q in queries]
        return sorted(results, key=lambda r: r.query_id)
