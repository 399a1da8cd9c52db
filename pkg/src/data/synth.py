import logging
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import DataHistogram, Universe, pairs_to_matrix
from .errors import ToyScaleError
from .noise import NoiseSource, PrivacyReport

BRUTE_FORCE_MAX_ROWS = 20
_CHUNK = 1 << 13


def _vertex_count_for(size: int) -> int:
    v = int(round((1 + np.sqrt(1 + 8 * size)) / 2))
    if v * (v - 1) // 2 != size:
        raise ValueError(f"{size} is not the number of pairs of any vertex count.")
    return v


def as_matrix(A) -> np.ndarray:
    """Accept a pair-indexed vector or a matrix; return a 2-D float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        return pairs_to_matrix(A, _vertex_count_for(A.shape[0]))
    if A.ndim != 2:
        raise ValueError("Expected a pair-indexed vector or a matrix.")
    return A


def _write_weighted(vertex_count: int, values: np.ndarray, file_path: str) -> None:
    rows, cols = np.triu_indices(vertex_count, k=1)
    with open(file_path, "w") as handle:
        handle.write(f"{vertex_count}\n")
        for i, j, w in zip(rows, cols, values):
            handle.write(f"{i} {j} {w:.17g}\n")
    logging.info(f"Wrote weighted graph with {vertex_count} vertices to {file_path}")


def _read_weighted(file_path: str) -> tuple[int, np.ndarray]:
    if not os.path.exists(file_path):
        logging.error(f"Weighted graph file {file_path} not found.")
        raise FileNotFoundError(file_path)
    with open(file_path) as handle:
        lines = [line.split() for line in handle if line.strip()]
    vertex_count = int(lines[0][0])
    universe = Universe.graph(vertex_count)
    values = np.zeros(universe.size)
    for parts in lines[1:]:
        if len(parts) != 3:
            raise ValueError(f"Malformed weighted edge line in {file_path}: {' '.join(parts)!r}")
        values[universe.pair_index(int(parts[0]), int(parts[1]))] = float(parts[2])
    return vertex_count, values


@dataclass(frozen=True, eq=False)
class NoisyGraph:
    """Randomized-response release: edge indicators plus Laplace noise, per unordered pair."""

    vertex_count: int
    z: np.ndarray
    privacy: PrivacyReport | None = field(default=None, compare=False)

    def __post_init__(self):
        z = np.array(self.z, dtype=float, copy=True)
        expected = self.vertex_count * (self.vertex_count - 1) // 2
        if z.shape != (expected,):
            raise ValueError(f"Noisy graph over {self.vertex_count} vertices needs {expected} entries.")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)

    def matrix(self) -> np.ndarray:
        return pairs_to_matrix(self.z, self.vertex_count)

    def write(self, file_path: str) -> None:
        _write_weighted(self.vertex_count, self.z, file_path)

    @classmethod
    def read(cls, file_path: str) -> "NoisyGraph":
        return cls(*_read_weighted(file_path))


@dataclass(frozen=True, eq=False)
class WeightedSyntheticGraph:
    vertex_count: int
    x: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, copy=True)
        expected = self.vertex_count * (self.vertex_count - 1) // 2
        if x.shape != (expected,):
            raise ValueError(f"Synthetic graph over {self.vertex_count} vertices needs {expected} entries.")
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("Synthetic edge weights must lie in [0, 1].")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    def matrix(self) -> np.ndarray:
        return pairs_to_matrix(self.x, self.vertex_count)

    def write(self, file_path: str) -> None:
        _write_weighted(self.vertex_count, self.x, file_path)

    @classmethod
    def read(cls, file_path: str) -> "WeightedSyntheticGraph":
        return cls(*_read_weighted(file_path))


@dataclass(frozen=True)
class SeparationResult:
    """
    A pair (S, T) and its signed violation A(S, T), divided by
    sqrt(|S||T|) when ``normalized``.
    """

    S: tuple[int, ...]
    T: tuple[int, ...]
    violation: float
    normalized: bool = False
    converged: bool = True

    @property
    def magnitude(self) -> float:
        return abs(self.violation)


@dataclass(frozen=True, eq=False)
class SingularPair:
    value: float
    left: np.ndarray
    right: np.ndarray
    iterations: int
    converged: bool


def top_singular_pair(A, tol: float = 1e-8, max_iter: int = 1000, seed: int = 0) -> SingularPair:
    """
    Top singular triple of A by power iteration on A^T A.

    Starts from a seeded Gaussian vector and stops once successive right
    vectors move less than ``tol``. If the cap is hit the last iterate is
    returned with ``converged=False``.
    """
    A = as_matrix(A)
    rows, cols = A.shape
    if not np.any(A):
        return SingularPair(0.0, np.zeros(rows), np.zeros(cols), 0, True)

    rng = np.random.default_rng(seed)
    v = rng.normal(size=cols)
    v /= np.linalg.norm(v)
    converged = False
    iterations = 0
    for iterations in range(1, max_iter + 1):
        w = A.T @ (A @ v)
        w_norm = np.linalg.norm(w)
        if w_norm == 0:
            # start landed in the null space
            v = rng.normal(size=cols)
            v /= np.linalg.norm(v)
            continue
        w /= w_norm
        if np.linalg.norm(w - v) < tol:
            v = w
            converged = True
            break
        v = w
    if not converged:
        logging.warning(f"Power iteration did not converge in {max_iter} iterations.")

    u = A @ v
    value = float(np.linalg.norm(u))
    u = u / value if value > 0 else u
    return SingularPair(value, u, v, iterations, converged)


def cut_value(A, S, T) -> float:
    """A(S, T) = sum over i in S, j in T of A[i, j]."""
    A = as_matrix(A)
    return float(A[np.ix_(list(S), list(T))].sum()) if S and T else 0.0


def _subset_masks(start: int, stop: int, m: int) -> np.ndarray:
    return ((np.arange(start, stop)[:, None] >> np.arange(m)) & 1).astype(float)


def _check_bruteforce_size(A: np.ndarray) -> None:
    if A.shape[0] > BRUTE_FORCE_MAX_ROWS:
        raise ToyScaleError(
            f"Brute-force cut norm enumerates 2^{A.shape[0]} row sets; the cap is "
            f"{BRUTE_FORCE_MAX_ROWS} rows."
        )


def cut_norm_bruteforce(A) -> tuple[float, tuple[int, ...], tuple[int, ...]]:
    """
    Exact cut norm max_{S,T} |A(S, T)| and a maximizing pair.

    For a fixed row set S the best column set takes every column whose sum
    over S has the wanted sign, so only the 2^m row sets are enumerated.
    """
    A = as_matrix(A)
    _check_bruteforce_size(A)
    m = A.shape[0]
    best, best_S, best_T = 0.0, (), ()
    for start in range(0, 1 << m, _CHUNK):
        masks = _subset_masks(start, min(start + _CHUNK, 1 << m), m)
        sums = masks @ A
        positive = np.where(sums > 0, sums, 0.0).sum(axis=1)
        negative = -np.where(sums < 0, sums, 0.0).sum(axis=1)
        values = np.maximum(positive, negative)
        i = int(np.argmax(values))
        if values[i] > best:
            best = float(values[i])
            best_S = tuple(int(r) for r in np.flatnonzero(masks[i]))
            picked = sums[i] > 0 if positive[i] >= negative[i] else sums[i] < 0
            best_T = tuple(int(c) for c in np.flatnonzero(picked))
    return best, best_S, best_T


def normalized_cut_norm_bruteforce(A) -> tuple[float, tuple[int, ...], tuple[int, ...]]:
    """
    Exact normalized cut norm max_{S,T nonempty} |A(S, T)| / sqrt(|S||T|).

    For fixed S and |T| = t the best T is the t largest (or t smallest)
    column sums over S.
    """
    A = as_matrix(A)
    _check_bruteforce_size(A)
    m, n = A.shape
    best, best_S, best_T = 0.0, (), ()
    t = np.arange(1, n + 1)
    for start in range(0, 1 << m, _CHUNK):
        stop = min(start + _CHUNK, 1 << m)
        masks = _subset_masks(start, stop, m)
        sizes = masks.sum(axis=1)
        keep = sizes > 0
        masks, sizes = masks[keep], sizes[keep]
        if not len(masks):
            continue
        sums = masks @ A
        order = np.argsort(-sums, axis=1, kind="stable")
        ranked = np.take_along_axis(sums, order, axis=1)
        denominators = np.sqrt(sizes[:, None] * t[None, :])
        top = np.cumsum(ranked, axis=1) / denominators
        bottom = -np.cumsum(ranked[:, ::-1], axis=1) / denominators
        values = np.maximum(top, bottom)
        flat = int(np.argmax(values))
        i, j = divmod(flat, n)
        if values[i, j] > best:
            best = float(values[i, j])
            best_S = tuple(int(r) for r in np.flatnonzero(masks[i]))
            columns = order[i, : j + 1] if top[i, j] >= bottom[i, j] else order[i, ::-1][: j + 1]
            best_T = tuple(sorted(int(c) for c in columns))
    return best, best_S, best_T


def sweep_rounding(A, left: np.ndarray, right: np.ndarray, normalized: bool) -> SeparationResult:
    """
    Round a singular pair to (S, T) by checking every magnitude-ordered
    prefix of +-left against every prefix of +-right.
    """
    A = as_matrix(A)
    best = SeparationResult((), (), 0.0, normalized)
    a = np.arange(1, A.shape[0] + 1)[:, None]
    b = np.arange(1, A.shape[1] + 1)[None, :]
    for row_sign in (1.0, -1.0):
        rows = np.argsort(-row_sign * left, kind="stable")
        for col_sign in (1.0, -1.0):
            cols = np.argsort(-col_sign * right, kind="stable")
            totals = A[np.ix_(rows, cols)].cumsum(axis=0).cumsum(axis=1)
            scores = totals / np.sqrt(a * b) if normalized else totals
            i, j = np.unravel_index(int(np.argmax(np.abs(scores))), scores.shape)
            if abs(scores[i, j]) > best.magnitude:
                best = SeparationResult(
                    tuple(sorted(int(r) for r in rows[: i + 1])),
                    tuple(sorted(int(c) for c in cols[: j + 1])),
                    float(scores[i, j]),
                    normalized,
                )
    return best


def spectral_separation(
    A, normalized: bool = False, tol: float = 1e-8, max_iter: int = 1000, seed: int = 0
) -> SeparationResult:
    """
    Approximately most-violated cut of A via its top singular pair.

    The returned violation is the exact (normalized) cut value of the
    returned (S, T), so it never exceeds the true (normalized) cut norm.
    """
    A = as_matrix(A)
    pair = top_singular_pair(A, tol=tol, max_iter=max_iter, seed=seed)
    if pair.value == 0:
        return SeparationResult((), (), 0.0, normalized, pair.converged)
    result = sweep_rounding(A, pair.left, pair.right, normalized)
    violation = cut_value(A, result.S, result.T)
    if normalized and result.S and result.T:
        violation /= np.sqrt(len(result.S) * len(result.T))
    return SeparationResult(result.S, result.T, violation, normalized, pair.converged)


def bruteforce_separation(A, normalized: bool = False) -> SeparationResult:
    """Exact most-violated cut; small graphs only."""
    A = as_matrix(A)
    if normalized:
        _, S, T = normalized_cut_norm_bruteforce(A)
    else:
        _, S, T = cut_norm_bruteforce(A)
    violation = cut_value(A, S, T)
    if normalized and S and T:
        violation /= np.sqrt(len(S) * len(T))
    return SeparationResult(S, T, violation, normalized)


def randomized_response(G: DataHistogram, epsilon: float, src: NoiseSource) -> NoisyGraph:
    """Add independent Lap(1/epsilon) noise to every pair indicator; (epsilon, 0)-DP."""
    vertex_count = G.universe.require_graph()
    indicators = (G.weights > 0).astype(float)
    noise = src.laplace(1.0 / epsilon, size=indicators.shape)
    return NoisyGraph(vertex_count, indicators + noise, PrivacyReport(epsilon, 0.0))


def _cut_direction(vertex_count: int, S, T) -> np.ndarray:
    """Pair-indexed coefficients g with <g, x> = X(S, T) for the symmetric matrix X of x."""
    s_mask = np.zeros(vertex_count)
    t_mask = np.zeros(vertex_count)
    s_mask[list(S)] = 1.0
    t_mask[list(T)] = 1.0
    rows, cols = np.triu_indices(vertex_count, k=1)
    return s_mask[rows] * t_mask[cols] + s_mask[cols] * t_mask[rows]


@dataclass(frozen=True, eq=False)
class ProjectionResult:
    graph: WeightedSyntheticGraph
    violation: float
    history: list[float]
    iterations: int


SeparationOracle = Callable[[np.ndarray], SeparationResult]


def project_to_synthetic(
    z: NoisyGraph,
    oracle: SeparationOracle | None = None,
    budget: int = 50,
    normalized: bool = False,
) -> ProjectionResult:
    """
    Find x in [0,1]^pairs whose cut values track those of z.

    Starts from clip(z) and repeatedly asks the oracle for the most violated
    cut of x - z, stepping x <- clip(x - (v/||g||^2) g). The iterate with the
    smallest oracle violation is returned; ``history`` holds the best
    violation after each oracle call.
    """
    if budget < 1:
        raise ValueError("Projection budget must be at least 1.")
    if oracle is None:
        oracle = lambda A: spectral_separation(A, normalized=normalized)  # noqa: E731

    x = np.clip(z.z, 0.0, 1.0)
    best_x, best_violation = x.copy(), np.inf
    history = []
    iterations = 0
    for iterations in range(1, budget + 1):
        result = oracle(pairs_to_matrix(x - z.z, z.vertex_count))
        if result.magnitude < best_violation:
            best_x, best_violation = x.copy(), result.magnitude
        history.append(best_violation)
        if result.magnitude <= 1e-12 or not (result.S and result.T):
            break
        g = _cut_direction(z.vertex_count, result.S, result.T)
        raw = float(np.dot(g, x - z.z))
        norm2 = float(np.dot(g, g))
        if norm2 == 0:
            break
        x = np.clip(x - (raw / norm2) * g, 0.0, 1.0)
    logging.info(
        f"Projection finished after {iterations} oracle calls with violation {best_violation:.6g}"
    )
    return ProjectionResult(WeightedSyntheticGraph(z.vertex_count, best_x), best_violation, history, iterations)


def round_to_unweighted(x: WeightedSyntheticGraph, src: NoiseSource) -> DataHistogram:
    """Keep each pair as an edge independently with probability x_ij."""
    draws = src.uniform(size=x.x.shape)
    weights = (draws < x.x).astype(float)
    return DataHistogram(Universe.graph(x.vertex_count), weights)


def residual_cut_norm(G: DataHistogram, x) -> float:
    """||A_G - X||_C by brute force, for measuring release quality."""
    values = x.x if isinstance(x, WeightedSyntheticGraph) else np.asarray(x, dtype=float)
    return cut_norm_bruteforce(pairs_to_matrix(G.weights - values, G.universe.require_graph()))[0]
