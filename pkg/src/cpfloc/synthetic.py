"""Synthetic scenes with exact ground truth.

Points line the inside of a cylindrical wall; database and query cameras stand
inside the ring and look outwards.  Every point belongs to one of
``cluster_count`` appearance clusters, and its descriptors are the cluster
centre plus a per-point offset plus per-observation noise, rounded to integers
in ``[0, 255]``.  Few clusters for many points means many near-identical
descriptors, which is what makes matching ambiguous.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import ConvexHull
from scipy.spatial.distance import pdist

from .camera import CameraPose, look_at
from .embedding import CompressedModel, compress_model, train_embedding, train_vocabulary
from .feature_filter import Query
from .scene_model import VisibilityGraph


@dataclass(frozen=True)
class SyntheticSceneConfig:
    num_points: int = 50_000
    num_db_images: int = 200
    num_queries: int = 50
    descriptor_dim: int = 64
    cluster_count: int = 5_000
    descriptor_noise_sigma: float = 6.0
    outlier_match_rate: float = 0.3
    spatial_clustering: float = 0.0
    # share of outlier features placed in the clustered window; None follows spatial_clustering
    outlier_clustering: Optional[float] = None
    # share of outlier features that copy the appearance of a point visible to the query
    repeated_texture: float = 0.0
    image_size: tuple[int, int] = (1024, 768)
    focal_range: tuple[float, float] = (700.0, 1100.0)
    seed: int = 0
    # geometry and sampling details
    wall_radius: float = 50.0
    wall_height: float = 20.0
    wall_depth: float = 20.0
    camera_radius: float = 25.0
    observation_rate: float = 0.6
    descriptors_per_point: int = 3
    cluster_spread: float = 4.0
    max_query_features: int = 600
    pixel_noise: float = 0.3
    min_visible: int = 50
    max_retries: int = 100

    def __post_init__(self):
        counts = ("num_points", "num_db_images", "num_queries", "descriptor_dim", "cluster_count",
                  "descriptors_per_point", "max_query_features", "max_retries")
        for name in counts:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        for name in ("outlier_match_rate", "spatial_clustering", "outlier_share_in_window", "repeated_texture", "observation_rate"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.outlier_match_rate >= 1.0:
            raise ValueError("outlier_match_rate must be below 1")
        lo, hi = self.focal_range
        if not 0 < lo <= hi:
            raise ValueError("focal_range must be positive and ordered")
        if self.descriptor_noise_sigma < 0 or self.cluster_spread < 0 or self.pixel_noise < 0:
            raise ValueError("noise levels must be non-negative")

    @property
    def outlier_share_in_window(self) -> float:
        return self.spatial_clustering if self.outlier_clustering is None else self.outlier_clustering

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class QueryTruth:
    """Ground truth of one query: its pose and the true point of every feature (-1 for outliers)."""

    id: int
    pose: CameraPose
    point_ids: np.ndarray


@dataclass
class SyntheticScene:
    config: SyntheticSceneConfig
    positions: np.ndarray
    point_cluster: np.ndarray
    descriptors: np.ndarray
    descriptor_point: np.ndarray
    graph: VisibilityGraph
    db_poses: list[CameraPose]
    queries: list[Query]
    truths: list[QueryTruth]
    diameter: float = field(default=0.0)

    def build_model(self, n_words: int = 256, bits: int = 64, seed: int = 0, vocab_sample: int = 20_000) -> CompressedModel:
        """Train a vocabulary and Hamming embedding on the database descriptors and compress."""
        rng = np.random.default_rng(seed)
        n = self.descriptors.shape[0]
        sample = self.descriptors if n <= vocab_sample else self.descriptors[np.sort(rng.choice(n, vocab_sample, replace=False))]
        vocab = train_vocabulary(sample, n_words, seed)
        words = vocab.predict(self.descriptors)
        embedding = train_embedding(self.descriptors, words, vocab, bits, seed)
        return compress_model(self.positions, self.descriptors, self.descriptor_point, self.graph, vocab, embedding, descriptor_word=words)


def scene_diameter(points: np.ndarray) -> float:
    """Largest distance between two points, taken over the convex hull."""
    points = np.asarray(points, dtype=np.float64)
    if points.shape[0] < 2:
        return 0.0
    try:
        points = points[ConvexHull(points).vertices]
    except Exception:  # flat or tiny sets: fall back to all pairs
        pass
    return float(pdist(points).max())


def _wall_points(rng, n, cfg: SyntheticSceneConfig) -> np.ndarray:
    theta = rng.uniform(0.0, 2 * np.pi, n)
    r = cfg.wall_radius + rng.uniform(-0.5, 0.5, n) * cfg.wall_depth
    z = rng.uniform(0.0, cfg.wall_height, n)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _random_camera(rng, cfg: SyntheticSceneConfig, focal: float) -> CameraPose:
    a = rng.uniform(0.0, 2 * np.pi)
    rad = cfg.camera_radius * np.sqrt(rng.uniform())
    height = cfg.wall_height * rng.uniform(0.35, 0.65)
    center = np.array([rad * np.cos(a), rad * np.sin(a), height])
    heading = rng.uniform(0.0, 2 * np.pi)
    target = center + np.array([np.cos(heading), np.sin(heading), rng.uniform(-0.1, 0.1)])
    w, h = cfg.image_size
    return CameraPose(look_at(center, target), center, focal, (w / 2.0, h / 2.0))


def _in_view(pose: CameraPose, points: np.ndarray, size) -> tuple[np.ndarray, np.ndarray]:
    uv, z = pose.project(points)
    w, h = size
    with np.errstate(invalid="ignore"):
        ok = (z > 1.0) & (uv[:, 0] >= 0) & (uv[:, 0] < w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    return ok, uv


def _cameras(rng, cfg, count, positions, focal_fn):
    poses, views = [], []
    for _ in range(count):
        for _attempt in range(cfg.max_retries):
            pose = _random_camera(rng, cfg, focal_fn())
            ok, uv = _in_view(pose, positions, cfg.image_size)
            if ok.sum() >= cfg.min_visible:
                break
        else:
            raise RuntimeError(f"no camera placement observed {cfg.min_visible} points after {cfg.max_retries} attempts")
        poses.append(pose)
        views.append((ok, uv))
    return poses, views


def _descriptor(rng, base: np.ndarray, sigma: float) -> np.ndarray:
    return np.clip(np.rint(base + rng.normal(0.0, sigma, base.shape)), 0, 255)


def _clustered_choice(rng, visible, uv, n_true, cfg):
    """Pick up to ``n_true`` visible points, ``spatial_clustering`` of them inside a window of two grid bins.

    Fewer points are picked when the window cannot supply its share.  Returns
    the chosen point ids and the window as pixel bounds ``(x0, y0, x1, y1)``
    (``None`` when neither true nor outlier features are clustered).
    """
    c = cfg.spatial_clustering
    if c <= 0 and cfg.outlier_share_in_window <= 0:
        return rng.choice(visible, n_true, replace=False), None
    w, h = cfg.image_size
    bx = np.clip((uv[visible, 0] * 4 // w).astype(int), 0, 3)
    by = np.clip((uv[visible, 1] * 4 // h).astype(int), 0, 3)
    windows = [(x0, y0, 2, 1) for x0 in range(3) for y0 in range(4)] + [(x0, y0, 1, 2) for x0 in range(4) for y0 in range(3)]
    x0, y0, dx, dy = windows[rng.integers(len(windows))]
    inside = (bx >= x0) & (bx < x0 + dx) & (by >= y0) & (by < y0 + dy)
    # shrink the feature count rather than dilute the requested concentration
    if c > 0:
        n_true = min(n_true, int(inside.sum() / c))
    if c < 1:
        n_true = min(n_true, int((~inside).sum() / (1 - c)))
    n_in = min(int(round(c * n_true)), int(inside.sum()))
    n_out = min(n_true - n_in, int((~inside).sum()))
    chosen = np.concatenate([
        rng.choice(visible[inside], n_in, replace=False),
        rng.choice(visible[~inside], n_out, replace=False),
    ])
    return chosen, (x0 * w / 4, y0 * h / 4, (x0 + dx) * w / 4, (y0 + dy) * h / 4)


def generate_scene(config: SyntheticSceneConfig | None = None) -> SyntheticScene:
    """Generate a scene, its database observations and labelled queries; deterministic in ``config.seed``."""
    cfg = config or SyntheticSceneConfig()
    rng = np.random.default_rng(cfg.seed)
    w, h = cfg.image_size
    flo, fhi = cfg.focal_range

    positions = _wall_points(rng, cfg.num_points, cfg)
    db_poses, views = _cameras(rng, cfg, cfg.num_db_images, positions, lambda: rng.uniform(flo, fhi))

    # observations: every in-view point with probability observation_rate
    pt_chunks, im_chunks = [], []
    seen_by_any = np.zeros(cfg.num_points, dtype=bool)
    for i, (ok, _) in enumerate(views):
        vis = np.flatnonzero(ok)
        seen_by_any[vis] = True
        obs = vis[rng.uniform(size=vis.size) < cfg.observation_rate]
        if obs.size == 0:
            obs = vis[:1]
        pt_chunks.append(obs)
        im_chunks.append(np.full(obs.size, i, dtype=np.int64))
    # points no camera frames are moved until some camera does
    for _attempt in range(cfg.max_retries):
        lost = np.flatnonzero(~seen_by_any)
        if lost.size == 0:
            break
        positions[lost] = _wall_points(rng, lost.size, cfg)
        for i, pose in enumerate(db_poses):
            ok, uv = _in_view(pose, positions[lost], cfg.image_size)
            seen_by_any[lost[ok]] = True
            views[i][0][lost] = ok
            views[i][1][lost] = uv
    else:
        raise RuntimeError("could not place every point inside some database view")
    pt = np.concatenate(pt_chunks)
    im = np.concatenate(im_chunks)
    observed = np.zeros(cfg.num_points, dtype=bool)
    observed[pt] = True
    # framed but unlucky points get one observation from a camera that frames them
    lonely = np.flatnonzero(~observed)
    if lonely.size:
        framed = np.stack([ok[lonely] for ok, _ in views], axis=1)
        pick = [np.flatnonzero(row)[rng.integers(row.sum())] for row in framed]
        pt = np.concatenate([pt, lonely])
        im = np.concatenate([im, np.asarray(pick, dtype=np.int64)])
    graph = VisibilityGraph.from_edges(pt, im, cfg.num_points, cfg.num_db_images)

    centers = rng.uniform(0.0, 128.0, (cfg.cluster_count, cfg.descriptor_dim))
    point_cluster = rng.integers(0, cfg.cluster_count, cfg.num_points)
    base = centers[point_cluster] + rng.normal(0.0, cfg.cluster_spread, (cfg.num_points, cfg.descriptor_dim))

    # up to descriptors_per_point observations per point carry a descriptor
    desc_point, _ = graph.edges()
    rank = np.arange(desc_point.size) - graph.point_offsets[desc_point]
    keep = rank < cfg.descriptors_per_point
    descriptor_point = desc_point[keep]
    descriptors = _descriptor(rng, base[descriptor_point], cfg.descriptor_noise_sigma)

    queries, truths = [], []
    for qid in range(cfg.num_queries):
        focal = rng.uniform(flo, fhi)
        (pose,), ((ok, uv),) = _cameras(rng, cfg, 1, positions, lambda f=focal: f)
        visible = np.flatnonzero(ok)
        n_true = min(cfg.max_query_features, visible.size)
        chosen, window = _clustered_choice(rng, visible, uv, n_true, cfg)
        px = uv[chosen] + rng.normal(0.0, cfg.pixel_noise, (chosen.size, 2))
        px = np.clip(px, 0.0, np.nextafter([w, h], 0))
        desc = _descriptor(rng, base[chosen], cfg.descriptor_noise_sigma)

        rate = cfg.outlier_match_rate
        n_out = int(round(rate * chosen.size / (1.0 - rate)))
        hidden = np.flatnonzero(~ok)
        if n_out and hidden.size:
            fake = rng.choice(hidden, n_out, replace=hidden.size < n_out)
            # repeated structure: the appearance of a point this camera also sees, at the wrong place
            if cfg.repeated_texture > 0:
                repeat = rng.uniform(size=n_out) < cfg.repeated_texture
                fake[repeat] = rng.choice(visible, int(repeat.sum()))
            # outlier features come from the same textured regions as the true ones
            out_px = rng.uniform([0, 0], [w, h], (n_out, 2))
            if window is not None:
                in_win = rng.uniform(size=n_out) < cfg.outlier_share_in_window
                out_px[in_win] = rng.uniform(window[:2], window[2:], (int(in_win.sum()), 2))
            out_desc = _descriptor(rng, base[fake], cfg.descriptor_noise_sigma)
            px = np.vstack([px, out_px])
            desc = np.vstack([desc, out_desc])
            labels = np.concatenate([chosen, np.full(n_out, -1)])
        else:
            labels = chosen
        order = rng.permutation(labels.size)
        queries.append(Query(qid, w, h, px[order], desc[order]))
        truths.append(QueryTruth(qid, pose, labels[order].astype(np.int64)))

    return SyntheticScene(cfg, positions, point_cluster, descriptors, descriptor_point, graph, db_poses, queries, truths, scene_diameter(positions))
