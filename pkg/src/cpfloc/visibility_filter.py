"""Visibility-wise filtering: image voting and two-step match selection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .feature_filter import Matches
from .params import PipelineParams
from .scene_model import VisibilityGraph

MIN_VOTES = 3


@dataclass(frozen=True)
class ImageVote:
    image_id: int
    score: float
    vote_count: int


def vote_images(fc_matches: Matches, graph: VisibilityGraph) -> list[ImageVote]:
    """Rank database images by the scores of the FC matches that see them.

    Each query feature votes at most once per image, with its best-scoring
    match (ties to the lower point id).  Images with fewer than three votes are
    dropped; the rest are scored by the vote sum over ``sqrt(|P^d|)`` and sorted
    by score, ties to the lower image id.
    """
    if len(fc_matches) == 0:
        return []
    src, img = graph.expand_points(fc_matches.point_id)
    q = fc_matches.query_id[src]
    e = fc_matches.score[src]
    p = fc_matches.point_id[src]
    order = np.lexsort((p, -e, q, img))
    img, q, e = img[order], q[order], e[order]
    first = np.ones(img.size, dtype=bool)
    first[1:] = (img[1:] != img[:-1]) | (q[1:] != q[:-1])
    img, e = img[first], e[first]

    counts = np.bincount(img, minlength=graph.n_images)
    sums = np.bincount(img, weights=e, minlength=graph.n_images)
    ids = np.flatnonzero(counts >= MIN_VOTES)
    scores = sums[ids] / np.sqrt(graph.image_sizes()[ids])
    rank = np.lexsort((ids, -scores))
    return [ImageVote(int(ids[i]), float(scores[i]), int(counts[ids[i]])) for i in rank]


def visible_in(matches: Matches, images, graph: VisibilityGraph) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(match_index, image_id)`` restricted to the given images."""
    mask = np.zeros(graph.n_images, dtype=bool)
    mask[np.asarray(list(images), dtype=np.int64)] = True
    src, img = graph.expand_points(matches.point_id)
    keep = mask[img]
    return src[keep], img[keep]


def select_pool(matches: Matches, ranking: list[ImageVote], k1: int, graph: VisibilityGraph) -> np.ndarray:
    """Mask of matches whose point is seen by at least one of the top-``k1`` images."""
    top = [v.image_id for v in ranking[:k1]]
    src, _ = visible_in(matches, top, graph)
    return np.bincount(src, minlength=len(matches)) > 0


def split_confidence(scores: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    vfc = np.asarray(scores) >= alpha
    return vfc, ~vfc


def promote_vnfc(matches: Matches, vfc: np.ndarray, top_images, graph: VisibilityGraph, alpha: float) -> np.ndarray:
    """Promoted scores for ``matches`` (all members of the top-k match set).

    For every top image, ``omega_vfc`` and ``omega_vnfc`` count the VFC and VNFC
    matches whose point it observes.  A VNFC match gains
    ``alpha/2 * ln(1 + omega_vfc/omega_vnfc)`` from every such image; VFC
    matches keep their score.
    """
    src, img = visible_in(matches, top_images, graph)
    is_vfc = vfc[src]
    n_img = graph.n_images
    w_vfc = np.bincount(img[is_vfc], minlength=n_img).astype(np.float64)
    w_vnfc = np.bincount(img[~is_vfc], minlength=n_img).astype(np.float64)
    s, d = src[~is_vfc], img[~is_vfc]
    gain = 0.5 * alpha * np.log1p(w_vfc[d] / w_vnfc[d])
    bonus = np.bincount(s, weights=gain, minlength=len(matches))
    return np.where(vfc, matches.score, matches.score + bonus)


@dataclass
class VisibilityResult:
    ranking: list[ImageVote]
    matches: Matches  # the feature-wise pool with visibility flags and promoted scores
    pool_mask: np.ndarray

    @property
    def selected(self) -> Matches:
        return self.matches.take(self.matches.vfc | self.matches.vfc_i)

    @property
    def pool(self) -> Matches:
        return self.matches.take(self.pool_mask)

    @property
    def top_k(self) -> Matches:
        return self.matches.take(self.matches.vc)


def run_visibility_filter(matches: Matches, fc_matches: Matches, graph: VisibilityGraph, params: PipelineParams) -> VisibilityResult:
    """Vote, keep the top-``pool_images`` pool, and select VFC plus VFC-I matches.

    In baseline-voting mode every match of the top-``top_images`` set is
    selected as VFC and no promotion takes place.
    """
    m = matches.take(slice(None))
    ranking = vote_images(fc_matches, graph)
    if not ranking:
        return VisibilityResult([], m.take(np.zeros(len(m), bool)), np.zeros(0, bool))
    pool_mask = select_pool(m, ranking, params.pool_images, graph)
    top = [v.image_id for v in ranking[: params.top_images]]
    vc = select_pool(m, ranking, params.top_images, graph)
    m.vc = vc
    m.promoted = m.score.copy()
    if params.baseline_voting:
        m.vfc, m.vnfc = vc.copy(), np.zeros(len(m), bool)
        return VisibilityResult(ranking, m, pool_mask)

    sub = m.take(vc)
    vfc, vnfc = split_confidence(sub.score, params.score_threshold)
    promoted = promote_vnfc(sub, vfc, top, graph, params.score_threshold)
    idx = np.flatnonzero(vc)
    m.vfc[idx] = vfc
    m.vnfc[idx] = vnfc
    m.promoted[idx] = promoted
    m.vfc_i[idx] = vnfc & (promoted >= params.score_threshold)
    return VisibilityResult(ranking, m, pool_mask)
