import itertools
import json

import numpy as np
import pytest

from src.data.core import (
    DataHistogram,
    LinearQuery,
    Universe,
    compile_cut_query,
    compile_rank1_query,
    evaluate,
    matrix_to_pairs,
    pairs_to_matrix,
    read_graph,
    read_query_stream,
    write_graph,
    write_query_stream,
)
from src.data.errors import DomainMismatchError, QueryValidationError


def test_graph_universe_size_and_bijection():
    universe = Universe.graph(6)
    assert universe.size == 15
    seen = set()
    for index in range(universe.size):
        i, j = universe.index_pair(index)
        assert i < j
        assert universe.pair_index(i, j) == index
        assert universe.pair_index(j, i) == index
        seen.add((i, j))
    assert len(seen) == universe.size


def test_graph_universe_rejects_wrong_size():
    with pytest.raises(ValueError):
        Universe(size=5, vertex_count=4)


def test_histogram_norms_and_validation():
    db = DataHistogram(Universe(3), [1.0, 2.0, 0.0])
    assert db.n == 3.0
    assert db.n2 == 5.0
    with pytest.raises(ValueError):
        DataHistogram(Universe(3), [1.0, -1.0, 0.0])
    with pytest.raises(ValueError):
        DataHistogram(Universe(3), [1.0, 1.0])


def test_histogram_is_immutable():
    db = DataHistogram(Universe(2), [1.0, 0.0])
    with pytest.raises(ValueError):
        db.weights[0] = 5.0


def test_cut_query_single_crossing_pair(single_edge_graph):
    query = compile_cut_query({0}, {1}, single_edge_graph.universe)
    assert evaluate(query, single_edge_graph.weights) == pytest.approx(1.0)


def test_cut_query_symmetric_convention(single_edge_graph):
    query = compile_cut_query({0, 1}, {0, 1}, single_edge_graph.universe)
    assert evaluate(query, single_edge_graph.weights) == pytest.approx(2.0)
    assert query.coefficients.max() <= 1.0


def test_empty_cut_is_zero(single_edge_graph):
    query = compile_cut_query(set(), {0, 1, 2}, single_edge_graph.universe)
    assert not query.coefficients.any()
    assert evaluate(query, single_edge_graph.weights) == 0.0


def test_cut_query_needs_graph_universe():
    with pytest.raises(DomainMismatchError):
        compile_cut_query({0}, {1}, Universe(6))


def test_cut_query_rejects_out_of_range_vertex():
    with pytest.raises(QueryValidationError):
        compile_cut_query({0}, {5}, Universe.graph(3))


def test_rank1_with_indicators_matches_cut():
    universe = Universe.graph(5)
    S, T = {0, 2}, {1, 2, 4}
    u = np.zeros(5)
    v = np.zeros(5)
    u[list(S)] = 1
    v[list(T)] = 1
    rank1 = compile_rank1_query(u, v, universe)
    cut = compile_cut_query(S, T, universe)
    np.testing.assert_allclose(rank1.coefficients, cut.coefficients)
    assert rank1.rescale == cut.rescale


def test_rank1_all_ones_counts_both_orders():
    db = DataHistogram.from_edges(2, [(0, 1)])
    query = compile_rank1_query(np.ones(2), np.ones(2), db.universe)
    assert evaluate(query, db.weights) == pytest.approx(2.0)
    zero = compile_rank1_query(np.zeros(2), np.ones(2), db.universe)
    assert evaluate(zero, db.weights) == 0.0


def test_rank1_validates_range():
    with pytest.raises(QueryValidationError):
        compile_rank1_query([1.5, 0, 0], [1, 1, 1], Universe.graph(3))


def test_linear_query_validation():
    with pytest.raises(QueryValidationError):
        LinearQuery([0.5, 1.2])
    with pytest.raises(QueryValidationError):
        LinearQuery([0.5, 0.2], rescale=0)


def test_evaluate_basics():
    db = DataHistogram(Universe(4), [3.0, 0.0, 2.0, 1.0])
    ones = LinearQuery(np.ones(4))
    assert evaluate(ones, np.zeros(4)) == 0.0
    assert evaluate(ones, db.weights) == db.n


def test_evaluate_matches_summation():
    rng = np.random.default_rng(7)
    coefficients = rng.random(8)
    h = rng.normal(size=8)
    query = LinearQuery(coefficients, rescale=3.0)
    expected = 3.0 * sum(c * x for c, x in zip(coefficients, h))
    assert evaluate(query, h) == pytest.approx(expected)


def test_evaluate_dimension_mismatch():
    with pytest.raises(QueryValidationError):
        evaluate(LinearQuery(np.ones(3)), np.ones(4))


def test_pairs_matrix_round_trip():
    values = np.arange(10, dtype=float)
    matrix = pairs_to_matrix(values, 5)
    np.testing.assert_array_equal(matrix, matrix.T)
    assert not np.diag(matrix).any()
    np.testing.assert_array_equal(matrix_to_pairs(matrix), values)


def test_graph_file_io(tmp_path):
    db = DataHistogram.from_edges(5, [(0, 1), (2, 4), (1, 3)])
    path = tmp_path / "g.txt"
    write_graph(db, str(path))
    loaded = read_graph(str(path))
    assert loaded.universe == db.universe
    np.testing.assert_array_equal(loaded.weights, db.weights)
    assert sorted(loaded.edges()) == [(0, 1), (1, 3), (2, 4)]


def test_read_graph_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_graph(str(tmp_path / "missing.txt"))


def test_query_stream_io(tmp_path):
    universe = Universe.graph(4)
    queries = [
        compile_cut_query({0, 1}, {2}, universe),
        compile_rank1_query([1, 0.5, 0, 0], [0, 0, 1, 0.25], universe),
    ]
    path = tmp_path / "q.jsonl"
    write_query_stream(queries, str(path))
    loaded = read_query_stream(str(path), universe)
    assert [q.tag for q in loaded] == [q.tag for q in queries]
    for a, b in zip(loaded, queries):
        np.testing.assert_allclose(a.coefficients, b.coefficients)


def _vertex_subsets(vertex_count: int):
    for mask in range(1 << vertex_count):
        yield [i for i in range(vertex_count) if mask >> i & 1]


@pytest.mark.parametrize(
    "vertex_count",
    [2, 3, 4, 5, 6, pytest.param(7, marks=pytest.mark.slow), pytest.param(8, marks=pytest.mark.slow)],
)
def test_cut_query_matches_double_sum_for_every_pair_of_sets(vertex_count):
    universe = Universe.graph(vertex_count)
    h = np.random.default_rng(vertex_count).random(universe.size)
    A = pairs_to_matrix(h, vertex_count)
    subsets = list(_vertex_subsets(vertex_count))
    for S, T in itertools.product(subsets, subsets):
        expected = sum(A[i, j] for i in S for j in T)
        assert evaluate(compile_cut_query(S, T, universe), h) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("vertex_count", [2, 3, 4, 5, 6])
def test_cut_query_sensitivity_under_single_edge_flip(vertex_count):
    universe = Universe.graph(vertex_count)
    G = (np.random.default_rng(10 + vertex_count).random(universe.size) < 0.5).astype(float)
    # row e is G with pair e flipped
    neighbours = np.tile(G, (universe.size, 1))
    neighbours[np.arange(universe.size), np.arange(universe.size)] = 1.0 - G
    subsets = list(_vertex_subsets(vertex_count))
    worst = 0.0
    for S, T in itertools.product(subsets, subsets):
        query = compile_cut_query(S, T, universe)
        shifts = np.abs(neighbours @ query.coefficients - query.canonical(G))
        assert shifts.max() <= 1.0 + 1e-12
        worst = max(worst, shifts.max())
    assert worst == pytest.approx(1.0)


def test_query_stream_with_late_rank1_line(tmp_path):
    path = tmp_path / "mixed.jsonl"
    with open(path, "w") as handle:
        for i in range(150):
            handle.write(json.dumps({"type": "cut", "S": [i % 3], "T": [(i + 1) % 3]}) + "\n")
        handle.write(json.dumps({"type": "rank1", "u": [1, 0, 0.5], "v": [0, 1, 1]}) + "\n")
    universe = Universe.graph(3)
    loaded = read_query_stream(str(path), universe)
    assert len(loaded) == 151
    expected = compile_rank1_query([1, 0, 0.5], [0, 1, 1], universe)
    assert loaded[-1].tag == expected.tag
    np.testing.assert_allclose(loaded[-1].coefficients, expected.coefficients)
    np.testing.assert_allclose(loaded[0].coefficients, compile_cut_query({0}, {1}, universe).coefficients)
