"""SfM map structures: 3D points, database images and their visibility graph."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ValidationError(ValueError):
    """Raised when model inputs violate a structural invariant."""


@dataclass(frozen=True)
class Point3D:
    id: int
    position: np.ndarray


@dataclass(frozen=True)
class DatabaseImage:
    id: int
    observed_points: np.ndarray

    def __post_init__(self):
        obs = np.unique(np.asarray(self.observed_points, dtype=np.int64))
        object.__setattr__(self, "observed_points", obs)


def _csr(keys: np.ndarray, values: np.ndarray, n_keys: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((values, keys))
    offsets = np.zeros(n_keys + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n_keys), out=offsets[1:])
    return offsets, values[order].astype(np.int64)


@dataclass(frozen=True)
class VisibilityGraph:
    """Bipartite point/image graph stored as two sorted CSR adjacencies."""

    n_points: int
    n_images: int
    point_offsets: np.ndarray
    point_images: np.ndarray
    image_offsets: np.ndarray
    image_points: np.ndarray

    @classmethod
    def from_edges(cls, point_ids, image_ids, n_points: int, n_images: int | None = None) -> "VisibilityGraph":
        point_ids = np.asarray(point_ids, dtype=np.int64)
        image_ids = np.asarray(image_ids, dtype=np.int64)
        if n_images is None:
            n_images = int(image_ids.max()) + 1 if image_ids.size else 0
        if point_ids.size:
            if point_ids.min() < 0 or point_ids.max() >= n_points:
                raise ValidationError("edge references a point id outside the model")
            if image_ids.min() < 0 or image_ids.max() >= n_images:
                raise ValidationError("edge references an image id outside the model")
            key = np.unique(point_ids * n_images + image_ids)
            point_ids, image_ids = key // n_images, key % n_images
        po, pi = _csr(point_ids, image_ids, n_points)
        io, ip = _csr(image_ids, point_ids, n_images)
        return cls(n_points, n_images, po, pi, io, ip)

    @property
    def n_edges(self) -> int:
        return int(self.point_images.size)

    def images_of_point(self, point_id: int) -> np.ndarray:
        return self.point_images[self.point_offsets[point_id] : self.point_offsets[point_id + 1]]

    def points_of_image(self, image_id: int) -> np.ndarray:
        return self.image_points[self.image_offsets[image_id] : self.image_offsets[image_id + 1]]

    def image_sizes(self) -> np.ndarray:
        """``|P^d|`` for every image."""
        return np.diff(self.image_offsets)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """All edges as ``(point_ids, image_ids)``, sorted by point then image."""
        pts = np.repeat(np.arange(self.n_points, dtype=np.int64), np.diff(self.point_offsets))
        return pts, self.point_images.copy()

    def expand_points(self, point_ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """For each entry of ``point_ids``, every observing image.

        Returns ``(source_index, image_id)`` pairs in input order.
        """
        point_ids = np.asarray(point_ids, dtype=np.int64)
        starts = self.point_offsets[point_ids]
        counts = self.point_offsets[point_ids + 1] - starts
        src = np.repeat(np.arange(point_ids.size), counts)
        within = np.arange(src.size) - np.repeat(np.cumsum(counts) - counts, counts)
        return src, self.point_images[np.repeat(starts, counts) + within]


def build_visibility_graph(points: Sequence[Point3D] | int, images: Sequence[DatabaseImage]) -> VisibilityGraph:
    """Build the bipartite visibility graph from per-image observation lists.

    ``points`` may be the point sequence or just the point count.
    """
    n_points = points if isinstance(points, (int, np.integer)) else len(points)
    ids = [img.id for img in images]
    if sorted(ids) != list(range(len(ids))):
        raise ValidationError("database image ids must be unique and dense in [0, n_images)")
    pt_chunks, im_chunks = [], []
    for img in images:
        obs = img.observed_points
        if obs.size == 0:
            raise ValidationError(f"image {img.id} observes no points")
        if obs.min() < 0 or obs.max() >= n_points:
            bad = obs[(obs < 0) | (obs >= n_points)][0]
            raise ValidationError(f"image {img.id} references unknown point id {bad}")
        pt_chunks.append(obs)
        im_chunks.append(np.full(obs.size, img.id, dtype=np.int64))
    if not images:
        return VisibilityGraph.from_edges(np.empty(0, np.int64), np.empty(0, np.int64), n_points, 0)
    return VisibilityGraph.from_edges(np.concatenate(pt_chunks), np.concatenate(im_chunks), n_points, len(images))
