"""Feature-wise filtering: candidate 2D-3D matches and their distinctiveness scores."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .embedding import CompressedModel, encode_queries
from .params import PipelineParams
from .validation import check_descriptors, check_pixels

PLATEAU_WEIGHT = 4.0 * np.exp(-0.25)


@dataclass(frozen=True)
class Query:
    """A query image's raw local features (pixel origin top-left)."""

    id: int
    width: int
    height: int
    pixels: np.ndarray
    descriptors: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "descriptors", check_descriptors(self.descriptors) if len(self.descriptors) else np.zeros((0, 0)))
        object.__setattr__(self, "pixels", check_pixels(self.pixels, len(self.descriptors)))

    def __len__(self):
        return self.pixels.shape[0]

    def encode(self, model: CompressedModel) -> "QueryFeatures":
        if len(self) == 0:
            return QueryFeatures(self.id, self.width, self.height, self.pixels, np.zeros(0, np.int64), np.zeros((0, model.embedding.n_bytes), np.uint8))
        words, sigs = encode_queries(self.descriptors, model.vocab, model.embedding)
        return QueryFeatures(self.id, self.width, self.height, self.pixels, words, sigs)


@dataclass(frozen=True)
class QueryFeatures:
    """Encoded query: pixel, visual word and signature for every feature."""

    id: int
    width: int
    height: int
    pixels: np.ndarray
    words: np.ndarray
    signatures: np.ndarray

    def __len__(self):
        return self.pixels.shape[0]

    @property
    def principal_point(self) -> np.ndarray:
        return np.array([self.width / 2.0, self.height / 2.0])


def _empty(dtype, shape=(0,)):
    return field(default_factory=lambda: np.zeros(shape, dtype=dtype))


@dataclass
class Matches:
    """Column store of 2D-3D matches; row ``i`` of every array is match ``i``.

    Besides the Hamming distance the rows carry the image-side ratio, the
    model-side ratio, the gated ratio, the feature score and the promoted
    score, plus the confidence flags assigned by the later stages.
    """

    query_id: np.ndarray = _empty(np.int64)
    point_id: np.ndarray = _empty(np.int64)
    pixel: np.ndarray = _empty(np.float64, (0, 2))
    hamming: np.ndarray = _empty(np.int64)
    t_image: np.ndarray = _empty(np.float64)
    t_model: np.ndarray = _empty(np.float64)
    ratio: np.ndarray = _empty(np.float64)
    score: np.ndarray = _empty(np.float64)
    promoted: np.ndarray = _empty(np.float64)
    fc: np.ndarray = _empty(bool)
    vc: np.ndarray = _empty(bool)
    vfc: np.ndarray = _empty(bool)
    vnfc: np.ndarray = _empty(bool)
    vfc_i: np.ndarray = _empty(bool)

    def __len__(self):
        return self.query_id.size

    @classmethod
    def new(cls, query_id, point_id, pixel, hamming) -> "Matches":
        n = len(query_id)
        zeros = lambda dt: np.zeros(n, dtype=dt)  # noqa: E731
        return cls(
            np.asarray(query_id, np.int64),
            np.asarray(point_id, np.int64),
            np.asarray(pixel, np.float64).reshape(n, 2),
            np.asarray(hamming, np.int64),
            zeros(float), zeros(float), zeros(float), zeros(float), zeros(float),
            zeros(bool), zeros(bool), zeros(bool), zeros(bool), zeros(bool),
        )

    def take(self, index) -> "Matches":
        return Matches(**{f.name: getattr(self, f.name)[index] for f in fields(self)})

    def keys(self) -> set[tuple[int, int]]:
        return set(zip(self.query_id.tolist(), self.point_id.tolist()))


def find_candidates(query: QueryFeatures, model: CompressedModel, tau: int) -> Matches:
    """Every same-word (feature, point) pair within Hamming distance ``tau``.

    Rows are ordered by query feature, then point id.
    """
    if len(query) == 0 or model.n_entries == 0:
        return Matches()
    starts = model.word_offsets[query.words]
    counts = model.word_offsets[query.words + 1] - starts
    q_idx = np.repeat(np.arange(len(query)), counts)
    within = np.arange(q_idx.size) - np.repeat(np.cumsum(counts) - counts, counts)
    e_idx = np.repeat(starts, counts) + within
    h = np.bitwise_count(query.signatures[q_idx] ^ model.entry_signature[e_idx]).sum(axis=1, dtype=np.int64)
    keep = h <= tau
    q_idx, e_idx, h = q_idx[keep], e_idx[keep], h[keep]
    p_idx = model.entry_point[e_idx]
    order = np.lexsort((p_idx, q_idx))
    q_idx, p_idx, h = q_idx[order], p_idx[order], h[order]
    return Matches.new(q_idx, p_idx, query.pixels[q_idx], h)


def gaussian_weight(h, sigma: float, tau: int, zero_distance_weight: bool = False):
    """Truncated Gaussian weighting of a Hamming distance.

    ``(sigma/h)^2 exp(-(h/sigma)^2)`` on ``(sigma/2, tau]``, the constant
    ``4 exp(-1/4)`` below ``sigma/2`` and zero beyond ``tau``.  Distance 0 is on
    the plateau unless ``zero_distance_weight`` asks for the literal zero.
    """
    h_arr = np.asarray(h, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = (sigma / h_arr) ** 2 * np.exp(-((h_arr / sigma) ** 2))
    w = np.where(h_arr > tau, 0.0, np.where(h_arr > 0.5 * sigma, tail, PLATEAU_WEIGHT))
    if zero_distance_weight:
        w = np.where(h_arr == 0, 0.0, w)
    return float(w) if w.ndim == 0 else w


def ratio_scores(h, image_sum, image_count, model_sum, model_count, phi: float):
    """Image-side ratio, model-side ratio and the gated bilateral score.

    ``image_*`` summarise the distances of all features matched to the same
    point, ``model_*`` those of all points matched to the same feature, both
    including the match itself.  A zero distance is clamped to 1 in the
    denominators.
    """
    h = np.maximum(np.asarray(h, dtype=np.float64), 1.0)
    image_count = np.asarray(image_count, dtype=np.float64)
    t_image = np.asarray(image_sum, dtype=np.float64) / (h * image_count**2)
    t_model = np.asarray(model_sum, dtype=np.float64) / (h * np.asarray(model_count, dtype=np.float64))
    gated = np.where(t_image >= phi, t_model, 0.0)
    return t_image, t_model, gated


def bilateral_ratio_test(h: int, image_side_distances, model_side_distances, phi: float) -> tuple[float, float, float]:
    """Scalar form of :func:`ratio_scores` from the two neighbourhood distance lists."""
    qd = np.asarray(image_side_distances, dtype=np.float64)
    pd = np.asarray(model_side_distances, dtype=np.float64)
    t, tp, T = ratio_scores(h, qd.sum(), qd.size, pd.sum(), pd.size, phi)
    return float(t), float(tp), float(T)


def neighbourhood_sums(matches: Matches) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Per-match ``(sum, count)`` over Q(p) and over P(q)."""
    h = matches.hamming.astype(np.float64)
    _, p_inv = np.unique(matches.point_id, return_inverse=True)
    _, q_inv = np.unique(matches.query_id, return_inverse=True)
    p_sum, p_cnt = np.bincount(p_inv, weights=h), np.bincount(p_inv)
    q_sum, q_cnt = np.bincount(q_inv, weights=h), np.bincount(q_inv)
    return p_sum[p_inv], p_cnt[p_inv], q_sum[q_inv], q_cnt[q_inv]


def score_and_partition(candidates: Matches, params: PipelineParams) -> tuple[Matches, Matches]:
    """Score candidates and split them into the pool (score > 0) and the FC set.

    In baseline-voting mode the ratio test is skipped and the score is the
    Gaussian weight alone, truncated at ``params.baseline_threshold``.
    """
    m = candidates.take(slice(None))
    if len(m):
        if params.baseline_voting:
            m.ratio[:] = 1.0
            m.score = gaussian_weight(m.hamming, params.sigma, params.baseline_threshold, params.zero_distance_weight)
        else:
            img_sum, img_cnt, mdl_sum, mdl_cnt = neighbourhood_sums(m)
            m.t_image, m.t_model, m.ratio = ratio_scores(m.hamming, img_sum, img_cnt, mdl_sum, mdl_cnt, params.image_ratio_threshold)
            m.score = m.ratio * gaussian_weight(m.hamming, params.sigma, params.hamming_threshold, params.zero_distance_weight)
        m.promoted = m.score.copy()
        m.fc = m.score >= params.score_threshold
    pool = m.take(m.score > 0)
    return pool, pool.take(pool.fc)
