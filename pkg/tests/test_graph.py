import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mstar.errors import AdjacencyParseError, GraphError
from mstar.graph import (AreaGraph, build_laplacian, generate_grid_queen, generate_random_connected,
                         is_connected, read_adjacency, write_adjacency)


def path3():
    return AreaGraph(3, [(0, 1), (1, 2)])


def test_laplacian_path():
    L = build_laplacian(path3())
    assert L.tolist() == [[1, -1, 0], [-1, 2, -1], [0, -1, 1]]


def test_laplacian_single_unit():
    assert build_laplacian(AreaGraph(1)).tolist() == [[0]]


def test_laplacian_k4_from_grid():
    # the 6 edges of K4, enumerated by hand
    g = generate_grid_queen(2, 2)
    assert g.edges == {(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)}
    expected = 3 * np.eye(4, dtype=int) - (np.ones((4, 4), dtype=int) - np.eye(4, dtype=int))
    np.testing.assert_array_equal(build_laplacian(g), expected)


def test_edges_symmetrized_and_deduplicated():
    g = AreaGraph(3, [(1, 0), (0, 1), (2, 1)])
    assert g.edges == {(0, 1), (1, 2)}
    assert g.degree.tolist() == [1, 2, 1]


@pytest.mark.parametrize("edges", [[(0, 0)], [(0, 3)], [(-1, 1)]])
def test_invalid_edges_rejected(edges):
    with pytest.raises(GraphError):
        AreaGraph(3, edges)


def test_is_connected():
    assert is_connected(path3())
    assert not is_connected(AreaGraph(2))
    assert is_connected(AreaGraph(1))
    assert not is_connected(AreaGraph(4, [(0, 1), (2, 3)]))


def test_random_connected_many():
    for seed in range(1000):
        n = 2 + seed % 40
        g = generate_random_connected(n, seed)
        assert is_connected(g)
        assert g.n_edges == n - 1


@pytest.mark.parametrize("n, mean", [(25, 1.920), (100, 1.980), (400, 1.995)])
def test_random_connected_mean_degree(n, mean):
    g = generate_random_connected(n, 11)
    assert g.degree.sum() == 2 * (n - 1)
    assert round(g.degree.mean(), 3) == mean


def test_random_connected_deterministic():
    assert generate_random_connected(50, 3) == generate_random_connected(50, 3)
    assert generate_random_connected(50, 3) != generate_random_connected(50, 4)


def test_random_tree_uniform_on_four_units():
    # K4 has 4^2 = 16 labelled spanning trees; Wilson's algorithm hits each equally often
    rng = np.random.default_rng(0)
    counts = {}
    draws = 16_000
    for _ in range(draws):
        g = generate_random_connected(4, rng)
        counts[g.edges] = counts.get(g.edges, 0) + 1
    assert len(counts) == 16
    freq = np.array(list(counts.values())) / draws
    # each cell ~ Binomial(16000, 1/16): sd ~ 0.0019
    assert np.abs(freq - 1 / 16).max() < 0.01


def test_grid_degrees():
    g = generate_grid_queen(3, 3)
    assert g.degree[4] == 8
    assert g.degree[[0, 2, 6, 8]].tolist() == [3, 3, 3, 3]
    g = generate_grid_queen(10, 10)
    assert g.n == 100
    interior = [r * 10 + c for r in range(1, 9) for c in range(1, 9)]
    assert set(g.degree[interior].tolist()) == {8}


@given(st.integers(1, 7), st.integers(1, 7))
def test_grid_degree_is_chebyshev_count(rows, cols):
    g = generate_grid_queen(rows, cols)
    for r in range(rows):
        for c in range(cols):
            count = sum(1 for rr in range(rows) for cc in range(cols)
                        if (rr, cc) != (r, c) and max(abs(rr - r), abs(cc - c)) == 1)
            assert g.degree[r * cols + c] == count


@settings(max_examples=50)
@given(st.integers(1, 60), st.integers(0, 2**32 - 1))
def test_generated_laplacian_invariants(n, seed):
    g = generate_random_connected(n, seed)
    L = build_laplacian(g)
    W = g.adjacency_matrix()
    assert L.dtype.kind == "i"
    assert (W == W.T).all() and (np.diag(W) == 0).all()
    assert (L.sum(axis=1) == 0).all()
    assert g.degree.mean() == pytest.approx(2 * (n - 1) / n, abs=0)


def test_read_adjacency_examples():
    assert read_adjacency("n 3\n1 2\n2 3") == path3()
    assert read_adjacency("n 3\n1 2\n2 1\n2 3") == path3()
    assert read_adjacency("# header comment\nn 3\n1 2  # inline\n\n2 3\n") == path3()
    with pytest.raises(GraphError, match="self-loop"):
        read_adjacency("n 2\n1 1")


def test_read_adjacency_errors_carry_line_numbers():
    with pytest.raises(AdjacencyParseError) as exc:
        read_adjacency("n 3\n1 2\n2 x\n")
    assert exc.value.lineno == 3
    with pytest.raises(AdjacencyParseError, match="outside"):
        read_adjacency("n 3\n1 4\n")
    with pytest.raises(AdjacencyParseError, match="header"):
        read_adjacency("1 2\n")
    with pytest.raises(AdjacencyParseError):
        read_adjacency("n 3\n1 2 3\n")
    with pytest.raises(AdjacencyParseError):
        read_adjacency("")


def test_isolated_units_representable():
    g = read_adjacency("n 4\n1 2\n")
    assert g.n == 4 and not is_connected(g)


def test_adjacency_round_trip(tmp_path):
    g = generate_random_connected(30, 5)
    path = tmp_path / "g.adj"
    write_adjacency(g, path)
    assert read_adjacency(path.read_text()) == g
