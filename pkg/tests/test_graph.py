import math
import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lingnn.errors import ParameterError, ParseError
from lingnn.graph import (
    Graph,
    adjacency_matrix,
    barabasi_albert,
    erdos_renyi,
    knn_ring,
    load_edge_csv,
    sbm,
    write_edge_csv,
)


def edge_set(g):
    return set(g.edges)


def test_graph_rejects_bad_edges():
    with pytest.raises(ParameterError):
        Graph.from_edges(3, [(0, 0)])
    with pytest.raises(ParameterError):
        Graph.from_edges(3, [(0, 1), (1, 0)])
    with pytest.raises(ParameterError):
        Graph.from_edges(3, [(0, 3)])


def test_erdos_renyi_extremes():
    assert erdos_renyi(5, 1.0, 3).num_edges == 10
    assert erdos_renyi(4, 0.0, 3).num_edges == 0


def test_erdos_renyi_edge_count_concentrates():
    g = erdos_renyi(200, 0.1, 7)
    N = 200 * 199 // 2
    mean, sd = N * 0.1, math.sqrt(N * 0.1 * 0.9)
    assert abs(g.num_edges - mean) <= 3 * sd


def test_erdos_renyi_seeded():
    assert erdos_renyi(30, 0.3, 11) == erdos_renyi(30, 0.3, 11)
    assert erdos_renyi(30, 0.3, 11) != erdos_renyi(30, 0.3, 12)


@pytest.mark.parametrize("p", [-0.1, 1.5])
def test_erdos_renyi_bad_p(p):
    with pytest.raises(ParameterError):
        erdos_renyi(5, p, 0)


def test_knn_ring_cycle():
    assert edge_set(knn_ring(6, 2)) == {(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5)}


def test_knn_ring_degree_four():
    g = knn_ring(8, 4)
    expected = {tuple(sorted((i, (i + d) % 8))) for i in range(8) for d in (1, 2)}
    assert edge_set(g) == expected
    assert np.all(g.degrees() == 4)


@pytest.mark.parametrize("n,k", [(5, 3), (5, 6), (4, 4)])
def test_knn_ring_errors(n, k):
    with pytest.raises(ParameterError):
        knn_ring(n, k)


def test_sbm_extremes():
    assert edge_set(sbm(2, 2, 1.0, 0.0, 1)) == {(0, 1), (2, 3)}
    assert sbm(2, 2, 1.0, 1.0, 1).num_edges == 6


def test_sbm_inter_block_count():
    n1, n2, q = 66, 134, 0.05
    g = sbm(n1, n2, 0.15, q, 5)
    inter = sum(1 for i, j in g.edges if (i < n1) != (j < n1))
    mean, sd = n1 * n2 * q, math.sqrt(n1 * n2 * q * (1 - q))
    assert abs(inter - mean) <= 3 * sd


def test_sbm_bad_probability():
    with pytest.raises(ParameterError):
        sbm(3, 3, 0.5, 1.2, 0)


def test_barabasi_albert_small_is_complete():
    assert barabasi_albert(4, 3, 9).num_edges == 6


def test_barabasi_albert_edges_and_degrees():
    g = barabasi_albert(200, 4, 2)
    assert g.num_edges == 4 * 3 // 2 + 196 * 4 == 790
    g2 = barabasi_albert(200, 2, 2)
    assert np.all(g2.degrees()[2:] >= 2)


def test_barabasi_albert_m_too_large():
    with pytest.raises(ParameterError):
        barabasi_albert(4, 4, 0)


@given(st.integers(2, 25), st.floats(0, 1), st.integers(0, 2 ** 32 - 1))
def test_adjacency_is_simple(n, p, seed):
    A = adjacency_matrix(erdos_renyi(n, p, seed))
    assert np.array_equal(A, A.T)
    assert not np.any(np.diag(A))
    assert set(np.unique(A)) <= {0.0, 1.0}


def test_load_edge_csv_path(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("0,1\n1,2")
    g = load_edge_csv(f)
    assert g.n == 3 and edge_set(g) == {(0, 1), (1, 2)}


def test_load_edge_csv_drops_duplicates_and_loops(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("0,1\n1,0\n2,2")
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        g = load_edge_csv(f)
    assert edge_set(g) == {(0, 1)}
    assert g.meta["dropped_duplicates"] == 1 and g.meta["dropped_self_loops"] == 1
    assert len(w) >= 1


def test_load_edge_csv_reports_line(tmp_path):
    f = tmp_path / "e.csv"
    f.write_text("u,v\n0,1\n1,x\n")
    with pytest.raises(ParseError, match="line 3"):
        load_edge_csv(f)


def test_edge_csv_round_trip(tmp_path):
    g = erdos_renyi(20, 0.3, 4)
    write_edge_csv(g, tmp_path / "g.csv")
    h = load_edge_csv(tmp_path / "g.csv")
    # node ids are remapped in order of first appearance; edge counts and degrees survive
    assert h.num_edges == g.num_edges
    assert sorted(h.degrees()) == sorted(d for d in g.degrees() if d > 0)
