import numpy as np
import pytest

from mlcd.benchmark import (IntegrationLabeler, NearestNeighborLabeler, RegularGrid,
                            classify_regular, label_vertices, min_grid_search)
from mlcd.decomposition import UNCERTAIN, tag_name
from mlcd.dynamics import HyperRectangle, get_system
from mlcd.homology import expected_table
from mlcd.labeling import LabeledDataset


def _circle(r, n=64):
    t = np.linspace(0, 2 * np.pi, n, endpoint=False)
    return r * np.column_stack([np.cos(t), np.sin(t)])


def test_regular_grid_counts():
    g = RegularGrid(HyperRectangle([0, 0, 0], [1, 2, 3]), 4)
    assert g.cubes == 64 and len(g.cell_grid()) == 64
    with pytest.raises(ValueError):
        RegularGrid(HyperRectangle([0], [1]), 0)


def test_nearest_neighbor_labeler():
    data = LabeledDataset(np.array([[0.0, 0.0], [1.0, 1.0]]), [0, 1], 2)
    lab = NearestNeighborLabeler(data)
    assert lab(np.array([[0.1, 0.0], [0.9, 1.2]])).tolist() == [0, 1]
    zeros = NearestNeighborLabeler(LabeledDataset(np.random.rand(5, 2), np.zeros(5, int), 1))
    assert np.all(zeros(np.random.rand(7, 2)) == 0)
    with pytest.raises(ValueError):
        NearestNeighborLabeler(LabeledDataset(np.empty((0, 2)), [], 0))


def test_integration_labeler_radial():
    sys = get_system("radial_bistable")
    lab = IntegrationLabeler(sys, [_circle(3.0), _circle(1.0)], horizon=14)
    assert lab(np.array([[0.5, 0.0], [2.5, 0.0], [-3.8, 0.1]])).tolist() == [1, 0, 0]
    with pytest.raises(ValueError):
        IntegrationLabeler(sys, [], 14)


def test_integration_labeler_linear_separatrix():
    sys = get_system("linear_separatrix")
    anchors = [np.array([[-1.366, -0.366]]), np.array([[-0.366, 1.366]])]
    lab = IntegrationLabeler(sys, anchors, horizon=20, escape_factor=50.0)
    # which side of the stable manifold of the saddle a point lies on decides the label
    labels = lab(np.array([[1.0, 1.0], [-1.0, -1.0]]))
    assert labels.tolist() == [1, 0]
    assert lab(np.array([[-0.366, 1.366]]))[0] == 1


def test_classify_regular_one_dimensional():
    grid = RegularGrid(HyperRectangle([0], [2]), 2)
    res = classify_regular(np.array([0, 0, 1]), grid, 2)
    assert [tag_name(t) for t in res.tags] == ["N0", "U"]
    with pytest.raises(ValueError):
        classify_regular(np.array([0, 1]), grid, 2)


def test_uniform_labels_give_single_region():
    grid = RegularGrid(HyperRectangle([0, 0], [1, 1]), 3)
    res = classify_regular(np.full((4, 4), 1), grid, 2)
    assert np.all(res.tags == 1) and res.counts()[UNCERTAIN] == 0


def test_label_vertices_shape():
    grid = RegularGrid(HyperRectangle([0, 0], [1, 1]), 3)
    out = label_vertices(lambda p: (p[:, 0] > 0.5).astype(int), grid)
    assert out.shape == (4, 4) and out[3, 0] == 1 and out[0, 3] == 0


def test_min_grid_search_radial_bistable():
    sys = get_system("radial_bistable")
    lab = IntegrationLabeler(sys, [_circle(3.0), _circle(1.0)], horizon=14)
    res = min_grid_search(sys, lab, expected_table("radial_bistable"), 8)
    assert res.min_n == 5 and res.min_cubes == 25
    assert all(not res.per_n[n]["success"] for n in range(1, 5))
    d = res.to_dict()
    assert d["min_cubes"] == 25 and d["labeler"] == "integration"


def test_min_grid_search_linear_separatrix_profile():
    sys = get_system("linear_separatrix")
    anchors = [np.array([[-1.366, -0.366]]), np.array([[-0.366, 1.366]])]
    lab = IntegrationLabeler(sys, anchors, horizon=20, escape_factor=50.0)
    res = min_grid_search(sys, lab, expected_table("linear_separatrix"), 6, full_profile=True)
    assert res.min_n == 3
    assert sorted(res.per_n) == list(range(1, 7))
    assert res.stable_min_n is not None and res.stable_min_n >= res.min_n


def test_min_grid_search_without_success():
    sys = get_system("radial_bistable")
    lab = IntegrationLabeler(sys, [_circle(3.0), _circle(1.0)], horizon=14)
    res = min_grid_search(sys, lab, expected_table("radial_bistable"), 2)
    assert res.min_n is None and res.min_cubes is None and res.stable_min_n is None
    with pytest.raises(ValueError):
        min_grid_search(sys, lab, expected_table("radial_bistable"), 0)
