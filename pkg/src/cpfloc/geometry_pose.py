"""Geometry-wise filtering and pose estimation.

The stage takes the VFC/VFC-I selection, spreads it over the query image
(spatial reconfiguration), estimates an auxiliary pose with the four-point
solver, uses that pose to pull matches back from the relaxed pool, and runs a
final three-point RANSAC at the auxiliary focal length.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraPose, batch_reprojection_errors, reprojection_errors
from .feature_filter import Matches
from .params import PipelineParams
from .solvers import bearings, focal_grid, non_degenerate, p3p_batch, p4pf_batch

GRID_ROWS = 4
GRID_COLS = 4
STORE_SIZE = 10
STORE_FRACTION = 0.7


@dataclass(frozen=True)
class BinGrid:
    rows: int
    cols: int
    counts: np.ndarray
    quotas: np.ndarray


def bin_index(pixels: np.ndarray, width: float, height: float, rows: int = GRID_ROWS, cols: int = GRID_COLS) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=float).reshape(-1, 2)
    bx = np.clip(np.floor(pixels[:, 0] * cols / width), 0, cols - 1).astype(np.int64)
    by = np.clip(np.floor(pixels[:, 1] * rows / height), 0, rows - 1).astype(np.int64)
    return by * cols + bx


def bin_shares(counts) -> np.ndarray:
    """Square-root share of the selection budget per bin."""
    root = np.sqrt(np.asarray(counts, dtype=np.float64))
    total = root.sum()
    return root / total if total > 0 else root


def bin_quotas(counts, budget: int) -> np.ndarray:
    """Largest-remainder apportionment of ``budget`` by square-root share.

    Equal remainders go to the lower bin index; empty bins get nothing.
    """
    counts = np.asarray(counts)
    quotas = np.zeros(counts.size, dtype=np.int64)
    occupied = np.flatnonzero(counts > 0)
    if occupied.size == 0 or budget <= 0:
        return quotas
    share = bin_shares(counts)[occupied] * budget
    base = np.floor(share).astype(np.int64)
    rest = int(budget - base.sum())
    order = np.lexsort((occupied, -(share - base)))
    base[order[:rest]] += 1
    quotas[occupied] = base
    return quotas


def inferred_cap(n_vfc: int, ratio: float) -> int:
    # guard against 0.33 * 100 = 32.999... style rounding
    return int(math.floor(ratio * n_vfc + 1e-9))


def _rank_within(groups: np.ndarray, priority: np.ndarray) -> np.ndarray:
    """Rank of each row inside its group when sorted by ``priority`` descending."""
    idx = np.arange(groups.size)
    order = np.lexsort((idx, -priority, groups))
    g = groups[order]
    starts = np.searchsorted(g, g, side="left")
    rank = np.empty(groups.size, dtype=np.int64)
    rank[order] = np.arange(groups.size) - starts
    return rank


def spatial_reconfigure(
    matches: Matches,
    width: float,
    height: float,
    max_selected: int,
    inferred_ratio: float,
) -> tuple[np.ndarray, BinGrid]:
    """Pick at most ``max_selected`` matches spread over a 4x4 image grid.

    Each bin's quota is its square-root share of the budget.  Bins are filled
    with VFC matches by descending score, then VFC-I matches by descending
    promoted score while the global VFC-I count stays within
    ``floor(inferred_ratio * n_vfc)``.  Budget left over by under-populated
    bins is handed out in one pass over the remaining matches in global score
    order, under the same cap.

    Returns the sorted indices of the chosen matches and the bin grid.
    """
    n = len(matches)
    bins = bin_index(matches.pixel, width, height)
    counts = np.bincount(bins, minlength=GRID_ROWS * GRID_COLS)
    quotas = bin_quotas(counts, max_selected)
    grid = BinGrid(GRID_ROWS, GRID_COLS, counts, quotas)
    if n < 4:
        return np.arange(n), grid

    is_vfc = matches.vfc.copy()
    is_inf = matches.vfc_i & ~is_vfc
    priority = np.where(is_vfc, matches.score, matches.promoted)
    chosen = np.zeros(n, dtype=bool)

    vfc_idx = np.flatnonzero(is_vfc)
    rank = _rank_within(bins[vfc_idx], priority[vfc_idx])
    chosen[vfc_idx[rank < quotas[bins[vfc_idx]]]] = True
    n_vfc = int(chosen.sum())

    left = quotas - np.bincount(bins[chosen], minlength=quotas.size)
    inf_idx = np.flatnonzero(is_inf)
    rank = _rank_within(bins[inf_idx], priority[inf_idx])
    eligible = inf_idx[rank < left[bins[inf_idx]]]
    eligible = eligible[np.lexsort((eligible, -priority[eligible]))]
    chosen[eligible[: inferred_cap(n_vfc, inferred_ratio)]] = True
    n_inf = int((chosen & is_inf).sum())

    budget = max_selected - int(chosen.sum())
    if budget > 0:
        rest = np.flatnonzero(~chosen & (is_vfc | is_inf))
        rest = rest[np.lexsort((rest, -priority[rest]))]
        for i in rest:
            if budget == 0:
                break
            if is_vfc[i]:
                n_vfc += 1
            elif n_inf + 1 <= inferred_cap(n_vfc, inferred_ratio):
                n_inf += 1
            else:
                continue
            chosen[i] = True
            budget -= 1
    return np.flatnonzero(chosen), grid


def select_top_scored(matches: Matches, n_vfc: int, n_inferred: int) -> np.ndarray:
    """Spatially blind selection: the best ``n_vfc`` VFC and ``n_inferred`` VFC-I matches."""
    idx = np.arange(len(matches))
    vfc = idx[matches.vfc]
    inf = idx[matches.vfc_i & ~matches.vfc]
    vfc = vfc[np.lexsort((vfc, -matches.score[vfc]))][:n_vfc]
    inf = inf[np.lexsort((inf, -matches.promoted[inf]))][:n_inferred]
    return np.sort(np.concatenate([vfc, inf]))


@dataclass
class Hypothesis:
    pose: CameraPose
    inlier_count: int
    inlier_ids: np.ndarray
    order: int


@dataclass
class AuxiliaryPose:
    pose: CameraPose
    focal: float
    epsilon: int
    stored: list[Hypothesis] = field(default_factory=list)


@dataclass
class FinalPose:
    pose: CameraPose
    inlier_count: int
    inlier_ids: np.ndarray


def draw_samples(rng: np.random.Generator, n: int, size: int, iterations: int) -> np.ndarray:
    """``iterations`` uniform draws of ``size`` distinct indices from ``range(n)``."""
    return np.array([rng.choice(n, size, replace=False) for _ in range(iterations)], dtype=np.int64).reshape(iterations, size)


def _sample_ok(samples: np.ndarray, points3d: np.ndarray, query_ids: np.ndarray | None) -> np.ndarray:
    ok = non_degenerate(points3d[samples])
    if query_ids is not None:
        q = np.sort(query_ids[samples], axis=1)
        ok &= np.all(q[:, 1:] != q[:, :-1], axis=1)
    return ok


def _count_inliers(R, C, f, pp, points3d, pixels, threshold, chunk: int = 512):
    counts = np.zeros(R.shape[0], dtype=np.int64)
    for s in range(0, R.shape[0], chunk):
        err = batch_reprojection_errors(R[s : s + chunk], C[s : s + chunk], f[s : s + chunk], pp, points3d, pixels)
        counts[s : s + chunk] = (err <= threshold).sum(axis=1)
    return counts


def store_hypotheses(inlier_counts: np.ndarray, capacity: int = STORE_SIZE, fraction: float = STORE_FRACTION) -> np.ndarray:
    """Indices (in generation order) kept by the bounded hypothesis store.

    The store keeps hypotheses whose inlier count exceeds ``fraction`` of the
    best count seen, at most ``capacity`` of them, preferring more inliers and
    then earlier generation.  Because the bound only ever tightens, running the
    store incrementally ends in exactly this set.
    """
    counts = np.asarray(inlier_counts)
    if counts.size == 0:
        return np.zeros(0, dtype=np.int64)
    eps = counts.max()
    idx = np.flatnonzero(counts > fraction * eps)
    idx = idx[np.lexsort((idx, -counts[idx]))]
    return idx[:capacity]


def principal_focal_choice(focals, store_order=None) -> int:
    """Position of the median-focal hypothesis among the stored ones.

    Even counts take the lower middle; among hypotheses sharing the median
    focal the first in ``store_order`` (best inliers, earliest) wins.
    """
    focals = np.asarray(focals, dtype=np.float64)
    order = np.arange(focals.size) if store_order is None else np.asarray(store_order)
    median = np.sort(focals)[(focals.size - 1) // 2]
    return int(next(i for i in order if focals[i] == median))


def estimate_auxiliary_pose(
    points3d: np.ndarray,
    pixels: np.ndarray,
    principal_point,
    params: PipelineParams,
    rng: np.random.Generator,
    query_ids: np.ndarray | None = None,
) -> AuxiliaryPose | None:
    """RANSAC with the four-point solver, or three-point at a known focal.

    Returns ``None`` when fewer than four matches support the best hypothesis.
    """
    points3d = np.asarray(points3d, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    pp = np.asarray(principal_point, dtype=np.float64)
    size = 3 if params.known_focal else 4
    n = points3d.shape[0]
    if n < size:
        return None
    samples = draw_samples(rng, n, size, params.aux_iterations)
    samples = samples[_sample_ok(samples, points3d, query_ids)]
    if samples.shape[0] == 0:
        return None
    X, x = points3d[samples], pixels[samples]
    if params.known_focal:
        R, C, valid = p3p_batch(X, bearings(x, params.known_focal, pp))
        f = np.full(valid.shape, float(params.known_focal))
    else:
        grid = focal_grid(pp, params.focal_grid_size)
        R, C, f, res = p4pf_batch(X, x, pp, grid=grid, n_minima=1, iterations=params.focal_refine_iterations)
        valid = res <= params.final_threshold
    R, C, f = R[valid], C[valid], f[valid]
    if f.size == 0:
        return None
    counts = _count_inliers(R, C, f, pp, points3d, pixels, params.final_threshold)
    eps = int(counts.max())
    if eps < 4:
        return None
    kept = store_hypotheses(counts)
    stored = []
    for i in kept:
        pose = CameraPose(R[i], C[i], f[i], pp)
        inl = np.flatnonzero(reprojection_errors(pose, points3d, pixels) <= params.final_threshold)
        stored.append(Hypothesis(pose, int(inl.size), inl, int(i)))
    pick = principal_focal_choice([h.pose.focal for h in stored]) if params.principal_focal else 0
    chosen = stored[pick]
    return AuxiliaryPose(chosen.pose, chosen.pose.focal, eps, stored)


def geometry_filter(points3d: np.ndarray, pixels: np.ndarray, pose: CameraPose, threshold: float) -> np.ndarray:
    """Mask of correspondences reprojecting within ``threshold`` pixels."""
    return reprojection_errors(pose, points3d, pixels) <= threshold


def estimate_final_pose(
    points3d: np.ndarray,
    pixels: np.ndarray,
    focal: float,
    principal_point,
    params: PipelineParams,
    rng: np.random.Generator,
    query_ids: np.ndarray | None = None,
) -> FinalPose | None:
    """Three-point RANSAC at a fixed focal length; best hypothesis by inlier count."""
    points3d = np.asarray(points3d, dtype=np.float64)
    pixels = np.asarray(pixels, dtype=np.float64)
    pp = np.asarray(principal_point, dtype=np.float64)
    n = points3d.shape[0]
    if n < 3:
        return None
    samples = draw_samples(rng, n, 3, params.final_iterations)
    samples = samples[_sample_ok(samples, points3d, query_ids)]
    if samples.shape[0] == 0:
        return None
    R, C, valid = p3p_batch(points3d[samples], bearings(pixels[samples], focal, pp))
    R, C = R[valid], C[valid]
    if R.shape[0] == 0:
        return None
    f = np.full(R.shape[0], float(focal))
    counts = _count_inliers(R, C, f, pp, points3d, pixels, params.final_threshold)
    best = int(np.argmax(counts))
    pose = CameraPose(R[best], C[best], focal, pp)
    inl = np.flatnonzero(reprojection_errors(pose, points3d, pixels) <= params.final_threshold)
    return FinalPose(pose, int(inl.size), inl)
