import json
import logging
import os
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import polars as pl

from .errors import DomainMismatchError, QueryValidationError


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Universe:
    """
    The data domain X.

    Parameters
    ----------
    size: int
        Number of items |X|.
    vertex_count: int | None
        When set, the universe is the set of unordered vertex pairs {i, j}
        with i < j, indexed in row-major upper-triangular order.
    """

    size: int
    vertex_count: int | None = None

    def __post_init__(self):
        if self.size < 0:
            raise ValueError("Universe size must be non-negative.")
        if self.vertex_count is not None:
            v = self.vertex_count
            if v < 0 or self.size != v * (v - 1) // 2:
                raise ValueError(
                    f"Graph universe over {v} vertices must have size {v * (v - 1) // 2}, "
                    f"got {self.size}."
                )

    @classmethod
    def graph(cls, vertex_count: int) -> "Universe":
        return cls(size=vertex_count * (vertex_count - 1) // 2, vertex_count=vertex_count)

    @property
    def is_graph(self) -> bool:
        return self.vertex_count is not None

    def require_graph(self) -> int:
        if self.vertex_count is None:
            raise DomainMismatchError("Operation needs a graph universe (vertex pairs).")
        return self.vertex_count

    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        """Endpoint arrays (rows, cols) for every universe index."""
        v = self.require_graph()
        return np.triu_indices(v, k=1)

    def pair_index(self, i: int, j: int) -> int:
        v = self.require_graph()
        if i == j or not (0 <= i < v and 0 <= j < v):
            raise ValueError(f"({i}, {j}) is not a vertex pair of a {v}-vertex graph.")
        if i > j:
            i, j = j, i
        return i * v - i * (i + 1) // 2 + (j - i - 1)

    def index_pair(self, index: int) -> tuple[int, int]:
        rows, cols = self.pairs()
        return int(rows[index]), int(cols[index])


@dataclass(frozen=True, eq=False)
class DataHistogram:
    """
    A database as a vector of non-negative counts over the universe.
    """

    universe: Universe
    weights: np.ndarray

    def __post_init__(self):
        weights = _frozen(self.weights)
        if weights.shape != (self.universe.size,):
            raise ValueError(
                f"Histogram has shape {weights.shape}, universe needs ({self.universe.size},)."
            )
        if np.any(weights < 0):
            raise ValueError("Histogram weights must be non-negative.")
        object.__setattr__(self, "weights", weights)

    @property
    def n(self) -> float:
        return float(self.weights.sum())

    @property
    def n2(self) -> float:
        return float(np.dot(self.weights, self.weights))

    @classmethod
    def from_edges(cls, vertex_count: int, edges) -> "DataHistogram":
        universe = Universe.graph(vertex_count)
        weights = np.zeros(universe.size)
        for i, j in edges:
            weights[universe.pair_index(int(i), int(j))] = 1.0
        return cls(universe, weights)

    def edges(self) -> list[tuple[int, int]]:
        rows, cols = self.universe.pairs()
        present = np.flatnonzero(self.weights > 0)
        return [(int(rows[e]), int(cols[e])) for e in present]

    def adjacency(self) -> np.ndarray:
        return pairs_to_matrix(self.weights, self.universe.require_graph())


class QueryTag(str, Enum):
    GENERIC = "generic"
    CUT = "cut"
    RANK1 = "rank1"


@dataclass(frozen=True, eq=False)
class LinearQuery:
    """
    Canonical coefficient vector in [0,1]^|X| plus a public rescale factor.

    Noise scales are always applied to the canonical value
    ``<coefficients, h>``; ``rescale`` is only applied to public answers.
    """

    coefficients: np.ndarray
    rescale: float = 1.0
    tag: QueryTag = QueryTag.GENERIC
    S: tuple[int, ...] | None = None
    T: tuple[int, ...] | None = None
    u: tuple[float, ...] | None = field(default=None, repr=False)
    v: tuple[float, ...] | None = field(default=None, repr=False)

    def __post_init__(self):
        coefficients = _frozen(self.coefficients)
        if coefficients.ndim != 1:
            raise QueryValidationError("Query coefficients must be a vector.")
        if np.any(coefficients < 0) or np.any(coefficients > 1):
            raise QueryValidationError("Query coefficients must lie in [0, 1].")
        if self.rescale <= 0:
            raise QueryValidationError("Query rescale must be positive.")
        object.__setattr__(self, "coefficients", coefficients)

    @property
    def dimension(self) -> int:
        return self.coefficients.shape[0]

    def canonical(self, h) -> float:
        """Pre-rescale value <coefficients, h> (sensitivity 1)."""
        h = np.asarray(h, dtype=float)
        if h.shape != self.coefficients.shape:
            raise QueryValidationError(
                f"Dimension mismatch: query has {self.dimension} entries, vector has {h.shape}."
            )
        return float(np.dot(self.coefficients, h))

    def to_dict(self) -> dict:
        match self.tag:
            case QueryTag.CUT:
                return {"type": "cut", "S": list(self.S), "T": list(self.T)}
            case QueryTag.RANK1:
                return {"type": "rank1", "u": list(self.u), "v": list(self.v)}
            case _:
                return {
                    "type": "generic",
                    "coefficients": self.coefficients.tolist(),
                    "rescale": self.rescale,
                }


def _check_vertex_set(vertices, vertex_count: int) -> tuple[int, ...]:
    out = tuple(sorted({int(x) for x in vertices}))
    if out and (out[0] < 0 or out[-1] >= vertex_count):
        raise QueryValidationError(f"Vertex set {out} outside [0, {vertex_count}).")
    return out


def compile_cut_query(S, T, universe: Universe) -> LinearQuery:
    """
    Compile the cut query Q_{S,T}(G) = A_G(S,T) over ordered pairs.

    On the unordered edge e = {i, j} the natural coefficient is
    1[i in S, j in T] + 1[j in S, i in T], which lies in {0, 1, 2}. It is
    stored halved with ``rescale = 2`` so the canonical query stays in [0,1]
    with sensitivity 1.
    """
    v = universe.require_graph()
    S = _check_vertex_set(S, v)
    T = _check_vertex_set(T, v)
    s_mask = np.zeros(v)
    t_mask = np.zeros(v)
    s_mask[list(S)] = 1.0
    t_mask[list(T)] = 1.0
    rows, cols = universe.pairs()
    coefficients = (s_mask[rows] * t_mask[cols] + s_mask[cols] * t_mask[rows]) / 2.0
    return LinearQuery(coefficients, rescale=2.0, tag=QueryTag.CUT, S=S, T=T)


def compile_rank1_query(u, v, universe: Universe) -> LinearQuery:
    """
    Compile Q_{u,v}(G) = sum_{i,j} u[i] v[j] A_G[i,j] with the same halving
    convention as cut queries.
    """
    vertex_count = universe.require_graph()
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != (vertex_count,) or v.shape != (vertex_count,):
        raise QueryValidationError(
            f"Rank-1 vectors must have length {vertex_count}, got {u.shape} and {v.shape}."
        )
    if np.any((u < 0) | (u > 1)) or np.any((v < 0) | (v > 1)):
        raise QueryValidationError("Rank-1 vectors must lie in [0, 1].")
    rows, cols = universe.pairs()
    coefficients = (u[rows] * v[cols] + u[cols] * v[rows]) / 2.0
    return LinearQuery(
        coefficients,
        rescale=2.0,
        tag=QueryTag.RANK1,
        u=tuple(u.tolist()),
        v=tuple(v.tolist()),
    )


def evaluate(query: LinearQuery, h) -> float:
    """Public value rescale * <coefficients, h>; h may be fractional or negative."""
    return query.rescale * query.canonical(h)


def pairs_to_matrix(values, vertex_count: int) -> np.ndarray:
    """Symmetric |V| x |V| matrix with zero diagonal from a pair-indexed vector."""
    values = np.asarray(values, dtype=float)
    rows, cols = np.triu_indices(vertex_count, k=1)
    matrix = np.zeros((vertex_count, vertex_count))
    matrix[rows, cols] = values
    matrix[cols, rows] = values
    return matrix


def matrix_to_pairs(matrix) -> np.ndarray:
    matrix = np.asarray(matrix, dtype=float)
    rows, cols = np.triu_indices(matrix.shape[0], k=1)
    return matrix[rows, cols].copy()


def read_graph(file_path: str) -> DataHistogram:
    """
    Read a graph in edge-list format: first line |V|, then "i j" per edge
    (0-based, i < j).

    Raises
    ------
    FileNotFoundError
        If the file does not exist.
    ValueError
        If a line cannot be parsed.
    """
    if not os.path.exists(file_path):
        logging.error(f"Graph file {file_path} not found.")
        raise FileNotFoundError(file_path)
    with open(file_path) as handle:
        lines = [line.strip() for line in handle if line.strip()]
    vertex_count = int(lines[0])
    edges = []
    for line in lines[1:]:
        parts = line.split()
        if len(parts) < 2:
            raise ValueError(f"Malformed edge line in {file_path}: {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    logging.info(f"Read graph with {vertex_count} vertices and {len(edges)} edges from {file_path}")
    return DataHistogram.from_edges(vertex_count, edges)


def write_graph(graph: DataHistogram, file_path: str) -> None:
    vertex_count = graph.universe.require_graph()
    with open(file_path, "w") as handle:
        handle.write(f"{vertex_count}\n")
        for i, j in graph.edges():
            handle.write(f"{i} {j}\n")
    logging.info(f"Wrote graph to {file_path}")


def read_query_stream(file_path: str, universe: Universe) -> list[LinearQuery]:
    """Read a JSON-lines query stream of cut and rank-1 queries."""
    df = pl.read_ndjson(file_path, infer_schema_length=None)
    queries = []
    for row in df.iter_rows(named=True):
        match row["type"]:
            case "cut":
                queries.append(compile_cut_query(row.get("S") or [], row.get("T") or [], universe))
            case "rank1":
                queries.append(compile_rank1_query(row.get("u"), row.get("v"), universe))
            case other:
                raise QueryValidationError(f"Unknown query type {other!r} in {file_path}")
    logging.info(f"Read {len(queries)} queries from {file_path}")
    return queries


def write_query_stream(queries: list[LinearQuery], file_path: str) -> None:
    with open(file_path, "w") as handle:
        for query in queries:
            handle.write(json.dumps(query.to_dict()) + "\n")
    logging.info(f"Wrote {len(queries)} queries to {file_path}")
