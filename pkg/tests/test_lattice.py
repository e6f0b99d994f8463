import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ffcolor.lattice import (
    FiniteGraph,
    Window,
    WindowGraph,
    ball_offsets,
    ball_size,
    cycle_graph,
    l1,
    linf,
    path_graph,
    sphere_offsets,
)


@given(st.integers(1, 4), st.integers(0, 6))
def test_ball_size_matches_enumeration(d, r):
    for norm in ("l1", "linf"):
        offs = ball_offsets(d, r, norm)
        assert len(offs) == ball_size(d, r, norm)
        assert len(set(offs)) == len(offs)
        dist = l1 if norm == "l1" else linf
        assert all(dist(o) <= r for o in offs)


def test_ball_size_known_values():
    assert ball_size(2, 1, "l1") == 5
    assert ball_size(2, 1, "linf") == 9
    assert ball_size(3, 1, "l1") == 7
    assert ball_size(2, 2, "l1") == 13
    assert ball_size(1, 5, "l1") == 11


def test_sphere_offsets():
    s = sphere_offsets(2, 2, "l1")
    assert len(s) == 8
    assert all(l1(o) == 2 for o in s)


def test_window_roundtrip_and_iteration():
    w = Window((-2, 3), (4, 5))
    assert w.size == 20
    seen = list(w)
    assert len(seen) == 20
    for v in seen:
        assert w.contains(v)
        assert w.vertex(w.index(v)) == v
    assert not w.contains((-3, 3))
    assert not w.contains((2, 3))


def test_window_axes_match_iteration_order():
    w = Window((10, -1), (3, 2))
    ax = w.axes()
    flat = np.stack([a.ravel() for a in ax], axis=1)
    assert [tuple(r) for r in flat] == list(w)


def test_window_rejects_bad_extents():
    with pytest.raises(ValueError):
        Window((0, 0), (0, 3))


def test_finite_graph_from_edges():
    g = FiniteGraph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    assert g.max_degree == 2
    assert sorted(g.neighbors(0).tolist()) == [1, 3]
    el = g.edge_list()
    assert el.shape == (4, 2)
    assert np.all(el[:, 0] < el[:, 1])


def test_path_and_cycle():
    assert path_graph(5).max_degree == 2
    assert path_graph(5).degree(0) == 1
    assert cycle_graph(5).degree(0) == 2


def test_window_graph_degrees_l1():
    wg = WindowGraph.build(Window((0, 0), (5, 5)), m=1, norm="l1")
    assert wg.graph.max_degree == 4
    center = wg.window.index((2, 2))
    corner = wg.window.index((0, 0))
    assert wg.graph.degree(center) == 4
    assert wg.graph.degree(corner) == 2
    assert wg.interior[center]
    assert not wg.interior[corner]


def test_window_graph_power_linf():
    wg = WindowGraph.build(Window((0, 0), (7, 7)), m=2, norm="linf")
    assert wg.graph.max_degree == 24
    assert int(wg.interior.sum()) == 9  # 3x3 core


def test_window_graph_neighbors_are_mutual():
    wg = WindowGraph.build(Window((0, 0), (4, 3)), m=1, norm="l1")
    for v in range(wg.graph.n):
        for u in wg.graph.neighbors(v):
            assert v in wg.graph.neighbors(int(u))


def test_window_graph_coords_align():
    wg = WindowGraph.build(Window((5, -5), (3, 3)), m=1, norm="l1")
    idx = wg.window.index((6, -4))
    assert tuple(wg.coords[idx]) == (6, -4)
