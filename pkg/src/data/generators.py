import logging

import numpy as np

from .core import DataHistogram, LinearQuery, Universe, compile_cut_query, pairs_to_matrix, write_graph, write_query_stream
from .idc import Hypothesis
from .noise import NoiseSource
from .synth import cut_norm_bruteforce


def gen_graph(vertex_count: int, p: float, seed: int = 0, file_path: str | None = None) -> DataHistogram:
    """
    Erdos-Renyi G(n, p): each unordered pair is an edge independently with probability p.
    """
    if vertex_count < 2:
        raise ValueError(f"Graph needs at least 2 vertices, got {vertex_count}.")
    if not 0 <= p <= 1:
        raise ValueError(f"Edge probability must lie in [0, 1], got {p}.")
    universe = Universe.graph(vertex_count)
    draws = NoiseSource(seed).uniform(size=universe.size)
    graph = DataHistogram(universe, (draws < p).astype(float))
    logging.info(f"Generated G({vertex_count}, {p}) with {int(graph.n)} edges (seed={seed})")
    if file_path is not None:
        write_graph(graph, file_path)
    return graph


def gen_graph_edges(vertex_count: int, m: int, seed: int = 0, file_path: str | None = None) -> DataHistogram:
    """
    Erdos-Renyi G(n, m): exactly m edges, chosen uniformly among all pair sets of that size.
    """
    if vertex_count < 2:
        raise ValueError(f"Graph needs at least 2 vertices, got {vertex_count}.")
    universe = Universe.graph(vertex_count)
    if not 0 <= m <= universe.size:
        raise ValueError(f"A {vertex_count}-vertex graph has room for 0..{universe.size} edges, got {m}.")
    draws = NoiseSource(seed).uniform(size=universe.size)
    weights = np.zeros(universe.size)
    weights[np.argsort(draws, kind="stable")[:m]] = 1.0
    graph = DataHistogram(universe, weights)
    logging.info(f"Generated G({vertex_count}, m={m}) (seed={seed})")
    if file_path is not None:
        write_graph(graph, file_path)
    return graph


def max_gap_cut(db: DataHistogram, h: Hypothesis | None = None) -> LinearQuery:
    """The cut query maximizing |Q(D) - Q(h)|, by exhaustive search over row sets."""
    vertex_count = db.universe.require_graph()
    target = db.weights if h is None else db.weights - h.as_vector()
    _, S, T = cut_norm_bruteforce(pairs_to_matrix(target, vertex_count))
    return compile_cut_query(S, T, db.universe)


def max_gap_subset_query(db: DataHistogram, h: Hypothesis) -> LinearQuery:
    """
    The {0,1} query maximizing |Q(D) - Q(h)| over all item subsets: the
    indicator of the positive (or negative) part of D - h.
    """
    diff = db.weights - h.as_vector()
    positive = np.where(diff > 0, diff, 0.0).sum()
    negative = -np.where(diff < 0, diff, 0.0).sum()
    mask = diff > 0 if positive >= negative else diff < 0
    return LinearQuery(mask.astype(float))


def gen_cut_stream(
    vertex_count: int,
    k: int,
    seed: int = 0,
    mode: str = "uniform",
    db: DataHistogram | None = None,
    file_path: str | None = None,
) -> list[LinearQuery]:
    """
    Generate k cut queries.

    ``uniform`` puts each vertex in S and in T independently with
    probability 1/2. ``adversarial`` needs the true graph and repeats its
    max-gap cut against the empty hypothesis; adaptive use goes through
    ``max_gap_adversary``.
    """
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}.")
    universe = Universe.graph(vertex_count)
    match mode:
        case "uniform":
            src = NoiseSource(seed)
            masks = src.uniform(size=(k, 2, vertex_count)) < 0.5
            queries = [
                compile_cut_query(np.flatnonzero(s), np.flatnonzero(t), universe) for s, t in masks
            ]
        case "adversarial":
            if db is None:
                raise ValueError("Adversarial cut streams need the true graph.")
            queries = [max_gap_cut(db)] * k
        case _:
            raise ValueError(f"Unknown cut stream mode {mode!r}; expected uniform or adversarial.")
    if file_path is not None:
        write_query_stream(queries, file_path)
    return queries


def max_gap_adversary(db: DataHistogram, k: int, graph_cuts: bool = True):
    """
    Adaptive adversary for ``run_adversary``: every query is the max-gap
    query against the mechanism's current hypothesis.
    """

    def source(mechanism):
        for _ in range(k):
            if graph_cuts:
                yield max_gap_cut(db, mechanism.hypothesis)
            else:
                yield max_gap_subset_query(db, mechanism.hypothesis)

    return source
