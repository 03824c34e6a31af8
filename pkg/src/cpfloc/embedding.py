"""Visual vocabulary, Hamming Embedding, and the compressed binary map.

Both trainable pieces are scikit-learn estimators so they can be cloned,
inspected with ``get_params`` and dropped into pipelines.  Signatures are
packed MSB-first into ``B/8`` bytes: bit ``i`` of a signature lives in byte
``i // 8`` at position ``7 - i % 8``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.cluster import KMeans
from sklearn.utils.validation import check_is_fitted

from .scene_model import Point3D, ValidationError, VisibilityGraph
from .validation import check_descriptors, check_word_ids


class TrainingError(ValueError):
    pass


class Vocabulary(BaseEstimator):
    """Flat k-means vocabulary with exact nearest-centroid assignment.

    Parameters
    ----------
    n_words : int
        Number of visual words ``k``.
    random_state : int
        Seed for the k-means initialisation.
    max_iter : int
        Lloyd iteration cap.
    """

    def __init__(self, n_words: int = 256, random_state: int = 0, max_iter: int = 100):
        self.n_words = n_words
        self.random_state = random_state
        self.max_iter = max_iter

    def fit(self, X, y=None):
        X = check_descriptors(X)
        n_distinct = np.unique(X, axis=0).shape[0]
        if n_distinct < self.n_words:
            raise TrainingError(f"{n_distinct} distinct descriptors cannot seed {self.n_words} words")
        km = KMeans(
            n_clusters=self.n_words,
            n_init=1,
            max_iter=self.max_iter,
            random_state=self.random_state,
        ).fit(X)
        self.centroids_ = km.cluster_centers_.astype(np.float64)
        self.inertia_ = float(km.inertia_)
        return self

    @classmethod
    def from_centroids(cls, centroids, **params) -> "Vocabulary":
        centroids = check_descriptors(centroids)
        vocab = cls(n_words=centroids.shape[0], **params)
        vocab.centroids_ = centroids
        return vocab

    @property
    def k(self) -> int:
        return self.centroids_.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids_.shape[1]

    def predict(self, X, chunk: int = 4096) -> np.ndarray:
        """Index of the nearest centroid; ties go to the lowest word id."""
        check_is_fitted(self, "centroids_")
        X = check_descriptors(X, dim=self.dim)
        out = np.empty(X.shape[0], dtype=np.int64)
        for start in range(0, X.shape[0], chunk):
            d = cdist(X[start : start + chunk], self.centroids_, "sqeuclidean")
            out[start : start + chunk] = np.argmin(d, axis=1)
        return out

    def distortion(self, X) -> float:
        X = check_descriptors(X, dim=self.dim)
        return float(((X - self.centroids_[self.predict(X)]) ** 2).sum())


class HammingEmbedding(TransformerMixin, BaseEstimator):
    """Per-word binary signatures from a random orthogonal projection.

    ``fit`` draws a ``B x D`` projection with orthonormal rows (QR of a seeded
    Gaussian matrix) and learns, for each visual word and each projected
    dimension, the median over the training descriptors of that word.
    ``transform`` sets bit ``i`` when projected coordinate ``i`` is strictly
    above the word's threshold.
    """

    def __init__(self, n_bits: int = 64, random_state: int = 0):
        self.n_bits = n_bits
        self.random_state = random_state

    def _projection(self, dim: int) -> np.ndarray:
        rng = np.random.default_rng(self.random_state)
        q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
        return q[: self.n_bits]

    def fit(self, X, words, n_words: int | None = None):
        X = check_descriptors(X)
        words = check_word_ids(words, X.shape[0])
        if self.n_bits % 8 or self.n_bits < 8:
            raise ValueError("n_bits must be a positive multiple of 8")
        if self.n_bits > X.shape[1]:
            raise ValueError(f"n_bits={self.n_bits} exceeds descriptor dimension {X.shape[1]}")
        k = int(words.max()) + 1 if n_words is None else int(n_words)
        self.projection_ = self._projection(X.shape[1])
        projected = X @ self.projection_.T

        thresholds = np.zeros((k, self.n_bits))
        order = np.argsort(words, kind="stable")
        bounds = np.searchsorted(words[order], np.arange(k + 1))
        empty = 0
        for w in range(k):
            rows = order[bounds[w] : bounds[w + 1]]
            if rows.size == 0:
                empty += 1
                continue
            thresholds[w] = np.median(projected[rows], axis=0)
        if empty:
            warnings.warn(f"{empty} visual words had no training descriptors; thresholds set to 0")
        self.thresholds_ = thresholds
        self.n_empty_words_ = empty
        return self

    @classmethod
    def from_arrays(cls, projection, thresholds, random_state: int = 0) -> "HammingEmbedding":
        projection = np.asarray(projection, dtype=np.float64)
        emb = cls(n_bits=projection.shape[0], random_state=random_state)
        emb.projection_ = projection
        emb.thresholds_ = np.asarray(thresholds, dtype=np.float64)
        emb.n_empty_words_ = 0
        return emb

    @property
    def bits(self) -> int:
        return self.n_bits

    @property
    def n_bytes(self) -> int:
        return self.n_bits // 8

    def project(self, X) -> np.ndarray:
        check_is_fitted(self, "projection_")
        return check_descriptors(X, dim=self.projection_.shape[1]) @ self.projection_.T

    def binarize(self, projected: np.ndarray, words: np.ndarray) -> np.ndarray:
        bits = projected > self.thresholds_[words]
        return np.packbits(bits, axis=1)

    def transform(self, X, words) -> np.ndarray:
        X = check_descriptors(X)
        words = check_word_ids(words, X.shape[0], self.thresholds_.shape[0])
        return self.binarize(self.project(X), words)

    def fit_transform(self, X, words, n_words: int | None = None):
        return self.fit(X, words, n_words=n_words).transform(X, words)


def hamming_distance(a, b) -> np.ndarray | int:
    """Number of differing bits between packed signatures (broadcasts over rows)."""
    a = np.asarray(a, dtype=np.uint8)
    b = np.asarray(b, dtype=np.uint8)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"signature lengths differ: {a.shape[-1]} vs {b.shape[-1]} bytes")
    d = np.bitwise_count(np.bitwise_xor(a, b)).sum(axis=-1, dtype=np.int64)
    return int(d) if np.ndim(d) == 0 else d


def train_vocabulary(descriptors, k: int, seed: int = 0) -> Vocabulary:
    return Vocabulary(n_words=k, random_state=seed).fit(descriptors)


def train_embedding(descriptors, words, vocab: Vocabulary, bits: int = 64, seed: int = 0) -> HammingEmbedding:
    return HammingEmbedding(n_bits=bits, random_state=seed).fit(descriptors, words, n_words=vocab.k)


def encode_query(descriptor, vocab: Vocabulary, embedding: HammingEmbedding) -> tuple[int, np.ndarray]:
    words, sigs = encode_queries(np.reshape(descriptor, (1, -1)), vocab, embedding)
    return int(words[0]), sigs[0]


def encode_queries(descriptors, vocab: Vocabulary, embedding: HammingEmbedding) -> tuple[np.ndarray, np.ndarray]:
    descriptors = check_descriptors(descriptors, dim=vocab.dim)
    words = vocab.predict(descriptors)
    return words, embedding.transform(descriptors, words)


@dataclass(frozen=True)
class CompressedModel:
    """Memory-efficient map: one binary signature per (point, visual word).

    Entries are sorted by word then point, so the inverted index is a CSR
    offset array: the entries of word ``w`` are ``word_offsets[w]:word_offsets[w+1]``.
    """

    positions: np.ndarray
    entry_point: np.ndarray
    entry_word: np.ndarray
    entry_signature: np.ndarray
    graph: VisibilityGraph
    vocab: Vocabulary
    embedding: HammingEmbedding
    word_offsets: np.ndarray

    @classmethod
    def from_entries(cls, positions, entry_point, entry_word, entry_signature, graph, vocab, embedding) -> "CompressedModel":
        entry_point = np.asarray(entry_point, dtype=np.int64)
        entry_word = np.asarray(entry_word, dtype=np.int64)
        entry_signature = np.asarray(entry_signature, dtype=np.uint8).reshape(entry_point.size, embedding.n_bytes)
        order = np.lexsort((entry_point, entry_word))
        entry_point, entry_word, entry_signature = entry_point[order], entry_word[order], entry_signature[order]
        key = entry_word * max(len(positions), 1) + entry_point
        if np.any(np.diff(key) == 0):
            raise ValidationError("duplicate (point, word) entry")
        offsets = np.searchsorted(entry_word, np.arange(vocab.k + 1)).astype(np.int64)
        return cls(np.asarray(positions, dtype=np.float64), entry_point, entry_word, entry_signature, graph, vocab, embedding, offsets)

    @property
    def n_points(self) -> int:
        return self.positions.shape[0]

    @property
    def n_entries(self) -> int:
        return self.entry_point.size

    @property
    def bits(self) -> int:
        return self.embedding.n_bits

    @property
    def points(self) -> list[Point3D]:
        return [Point3D(i, p) for i, p in enumerate(self.positions)]

    def inverted_index(self, word: int) -> np.ndarray:
        return np.arange(self.word_offsets[word], self.word_offsets[word + 1])


def integer_mean(descriptors: np.ndarray, groups: np.ndarray, n_groups: int) -> np.ndarray:
    """Componentwise mean per group, rounded half-up to integers."""
    order = np.argsort(groups, kind="stable")
    starts = np.searchsorted(groups[order], np.arange(n_groups))
    sums = np.add.reduceat(descriptors[order], starts, axis=0)
    counts = np.bincount(groups, minlength=n_groups)
    return np.floor(sums / counts[:, None] + 0.5)


def compress_model(
    positions,
    descriptors,
    descriptor_point,
    graph: VisibilityGraph,
    vocab: Vocabulary,
    embedding: HammingEmbedding,
    descriptor_word=None,
) -> CompressedModel:
    """Collapse each point's descriptors to one signature per visual word.

    Descriptors of a point that fall into the same word are averaged, rounded
    half-up to integers, then binarised with that word's thresholds.
    """
    positions = np.asarray(positions, dtype=np.float64)
    descriptors = check_descriptors(descriptors, dim=vocab.dim)
    descriptor_point = check_word_ids(descriptor_point, descriptors.shape[0], positions.shape[0])
    n_points = positions.shape[0]
    missing = np.flatnonzero(np.bincount(descriptor_point, minlength=n_points) == 0)
    if missing.size:
        raise ValidationError(f"point {missing[0]} has no descriptors")
    words = vocab.predict(descriptors) if descriptor_word is None else check_word_ids(descriptor_word, descriptors.shape[0], vocab.k)

    key = words * n_points + descriptor_point
    uniq, group = np.unique(key, return_inverse=True)
    means = integer_mean(descriptors, group, uniq.size)
    entry_word, entry_point = uniq // n_points, uniq % n_points
    sigs = embedding.binarize(means @ embedding.projection_.T, entry_word)
    return CompressedModel.from_entries(positions, entry_point, entry_word, sigs, graph, vocab, embedding)
