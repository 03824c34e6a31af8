import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cpfloc.scene_model import DatabaseImage, Point3D, ValidationError, VisibilityGraph, build_visibility_graph


def _points(n):
    return [Point3D(i, np.zeros(3)) for i in range(n)]


def test_two_images_share_a_point():
    g = build_visibility_graph(_points(3), [DatabaseImage(0, [0, 1]), DatabaseImage(1, [1, 2])])
    assert g.n_edges == 4
    assert g.images_of_point(1).tolist() == [0, 1]
    assert g.points_of_image(1).tolist() == [1, 2]


def test_empty_image_list_gives_empty_graph():
    g = build_visibility_graph(_points(5), [])
    assert g.n_edges == 0 and g.n_images == 0


def test_dangling_point_names_the_image():
    with pytest.raises(ValidationError, match="image 1"):
        build_visibility_graph(10, [DatabaseImage(0, [1]), DatabaseImage(1, [3, 99])])


def test_image_without_points_rejected():
    with pytest.raises(ValidationError, match="image 0 observes no points"):
        build_visibility_graph(4, [DatabaseImage(0, [])])


def test_image_ids_must_be_dense():
    with pytest.raises(ValidationError):
        build_visibility_graph(4, [DatabaseImage(0, [1]), DatabaseImage(2, [1])])


def test_duplicate_observations_collapse():
    img = DatabaseImage(0, [3, 1, 3, 1])
    assert img.observed_points.tolist() == [1, 3]


def test_single_view_points_accepted():
    g = build_visibility_graph(3, [DatabaseImage(0, [0, 1, 2])])
    assert all(g.images_of_point(p).tolist() == [0] for p in range(3))


@st.composite
def observation_lists(draw):
    n_points = draw(st.integers(1, 30))
    n_images = draw(st.integers(1, 8))
    lists = [draw(st.lists(st.integers(0, n_points - 1), min_size=1, max_size=20)) for _ in range(n_images)]
    return n_points, lists


@settings(max_examples=150, deadline=None)
@given(observation_lists())
def test_adjacency_is_symmetric_and_counts_edges(data):
    n_points, lists = data
    images = [DatabaseImage(i, obs) for i, obs in enumerate(lists)]
    g = build_visibility_graph(n_points, images)
    assert g.n_edges == sum(img.observed_points.size for img in images)
    for p in range(n_points):
        for d in range(len(images)):
            assert (d in g.images_of_point(p)) == (p in g.points_of_image(d))
    # rebuilding gives the same arrays in the same order
    again = build_visibility_graph(n_points, images)
    assert np.array_equal(g.point_images, again.point_images) and np.array_equal(g.image_points, again.image_points)


def test_expand_points_lists_every_observer():
    g = VisibilityGraph.from_edges([0, 0, 1, 2], [0, 1, 1, 0], 3)
    src, img = g.expand_points(np.array([2, 0, 1]))
    assert list(zip(src.tolist(), img.tolist())) == [(0, 0), (1, 0), (1, 1), (2, 1)]
