import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from scipy.special import softmax

from .core import DataHistogram, LinearQuery, Universe
from .errors import ConfigError, InvariantViolationError, ToyScaleError


@dataclass(frozen=True, eq=False)
class FkHypothesis:
    weights: np.ndarray

    def __post_init__(self):
        weights = np.array(self.weights, dtype=float, copy=True)
        if not np.all(np.isfinite(weights)):
            raise InvariantViolationError("Frieze/Kannan hypothesis has non-finite entries.")
        weights.setflags(write=False)
        object.__setattr__(self, "weights", weights)

    def evaluate(self, query: LinearQuery) -> float:
        return query.canonical(self.weights)

    def as_vector(self) -> np.ndarray:
        return self.weights

    def same_as(self, other, atol: float = 1e-12) -> bool:
        return isinstance(other, FkHypothesis) and np.allclose(self.weights, other.weights, atol=atol)


@dataclass(frozen=True, eq=False)
class MwHypothesis:
    """A distribution over the universe; answers are scaled by the public n."""

    distribution: np.ndarray
    public_n: float

    def __post_init__(self):
        distribution = np.array(self.distribution, dtype=float, copy=True)
        if np.any(distribution <= 0):
            raise InvariantViolationError("Multiplicative weights entries must stay positive.")
        if abs(distribution.sum() - 1.0) > 1e-9:
            raise InvariantViolationError("Multiplicative weights distribution must sum to 1.")
        if self.public_n <= 0:
            raise ValueError("public_n must be positive.")
        distribution.setflags(write=False)
        object.__setattr__(self, "distribution", distribution)

    def evaluate(self, query: LinearQuery) -> float:
        return self.public_n * query.canonical(self.distribution)

    def as_vector(self) -> np.ndarray:
        return self.public_n * self.distribution

    def same_as(self, other, atol: float = 1e-12) -> bool:
        return (
            isinstance(other, MwHypothesis)
            and math.isclose(self.public_n, other.public_n)
            and np.allclose(self.distribution, other.distribution, atol=atol)
        )


@dataclass(frozen=True, eq=False)
class MmHypothesis:
    """
    Median datastructure: a set of size-m histograms (one per row).

    Candidate answers are multiplied by ``scale = n/m`` so they are on the
    same scale as the size-n database.
    """

    candidates: np.ndarray
    m: int
    scale: float

    def __post_init__(self):
        candidates = np.array(self.candidates, dtype=float, copy=True)
        if candidates.ndim != 2 or candidates.shape[0] == 0:
            raise InvariantViolationError("Median datastructure must hold at least one candidate.")
        if not np.allclose(candidates.sum(axis=1), self.m):
            raise InvariantViolationError(f"Every candidate must have L1 norm {self.m}.")
        candidates.setflags(write=False)
        object.__setattr__(self, "candidates", candidates)

    def __len__(self) -> int:
        return self.candidates.shape[0]

    def candidate_values(self, query: LinearQuery) -> np.ndarray:
        return self.scale * (self.candidates @ query.coefficients)

    def evaluate(self, query: LinearQuery) -> float:
        values = np.sort(self.candidate_values(query))
        # lower median on ties
        return float(values[(len(values) - 1) // 2])

    def as_vector(self) -> np.ndarray:
        return self.scale * self.candidates.mean(axis=0)

    def same_as(self, other, atol: float = 1e-12) -> bool:
        return (
            isinstance(other, MmHypothesis)
            and self.candidates.shape == other.candidates.shape
            and np.allclose(self.candidates, other.candidates, atol=atol)
        )


Hypothesis = FkHypothesis | MwHypothesis | MmHypothesis


@dataclass(frozen=True, eq=False)
class UpdateRound:
    hypothesis_before: Hypothesis
    query: LinearQuery
    noisy_answer: float
    hypothesis_after: Hypothesis


def fk_update(h: FkHypothesis, Q: LinearQuery, a_hat: float, alpha: float) -> FkHypothesis:
    """Move h by (alpha/|X|) Q toward the noisy answer; no change on a tie."""
    gap = h.evaluate(Q) - a_hat
    if gap == 0:
        return h
    step = (alpha / Q.dimension) * Q.coefficients
    return FkHypothesis(h.weights - step if gap > 0 else h.weights + step)


def fk_bound(n2: float, universe_size: int, alpha: float) -> int:
    if alpha <= 0:
        raise ValueError("alpha must be positive.")
    return math.ceil(n2 * universe_size / alpha**2)


def mw_update(h: MwHypothesis, Q: LinearQuery, a_hat: float, alpha: float) -> MwHypothesis:
    """
    Multiplicative weights step with eta = alpha / (2n).

    ``a_hat`` is on the canonical (un-normalized) scale and is divided by
    the public n before the comparison.
    """
    normalized_answer = a_hat / h.public_n
    current = Q.canonical(h.distribution)
    if normalized_answer == current:
        return h
    penalty = Q.coefficients if normalized_answer < current else 1.0 - Q.coefficients
    eta = alpha / (2 * h.public_n)
    return MwHypothesis(softmax(np.log(h.distribution) - eta * penalty), h.public_n)


def mw_bound(n: float, universe_size: int, alpha: float) -> int:
    if alpha <= 0:
        raise ValueError("alpha must be positive.")
    return math.ceil(4 * n**2 * math.log(universe_size) / alpha**2)


def mm_update(h: MmHypothesis, Q: LinearQuery, a_hat: float) -> MmHypothesis:
    """Drop every candidate on the median's side of the noisy answer."""
    values = h.candidate_values(Q)
    median = h.evaluate(Q)
    if median > a_hat:
        keep = values < median
    elif median < a_hat:
        keep = values > median
    else:
        return h
    if not keep.any():
        raise InvariantViolationError(
            "Median mechanism update would empty the candidate set; "
            "alpha is too small for the candidate size m."
        )
    return MmHypothesis(h.candidates[keep], h.m, h.scale)


def mm_bound(n: float, universe_size: int, k: int, alpha: float) -> int:
    if alpha <= 0:
        raise ValueError("alpha must be positive.")
    return math.ceil(n**2 * math.log(universe_size) * math.log(k) / alpha**2)


def mm_candidate_size(n: float, k: int, alpha: float) -> int:
    return max(1, math.ceil(n**2 * math.log(k) / alpha**2))


def enumerate_candidates(universe_size: int, m: int, cap: int = 10**6) -> np.ndarray:
    """
    All |X|^m ordered m-tuples of universe items as histograms, in
    lexicographic tuple order.

    Raises
    ------
    ToyScaleError
        If |X|^m exceeds ``cap``.
    """
    count = universe_size**m
    if count > cap:
        raise ToyScaleError(
            f"Median mechanism needs {universe_size}^{m} = {count} candidates, over the cap of "
            f"{cap}; it only runs at toy scale."
        )
    tuples = np.indices((universe_size,) * m).reshape(m, -1).T
    candidates = np.zeros((count, universe_size))
    rows = np.arange(count)
    for position in range(m):
        candidates[rows, tuples[:, position]] += 1.0
    return candidates


class IterativeDatabaseConstruction(ABC):
    """
    An update rule U_alpha together with its certified update bound B(alpha).

    Parameters
    ----------
    universe: Universe
        The data domain.
    alpha: float
        Accuracy scale the update rule is tuned for.
    """

    name: str = "idc"

    def __init__(self, universe: Universe, alpha: float):
        if alpha <= 0:
            raise ValueError("alpha must be positive.")
        self.universe = universe
        self.alpha = alpha

    @abstractmethod
    def init(self) -> Hypothesis: ...

    @abstractmethod
    def update(self, h: Hypothesis, query: LinearQuery, a_hat: float) -> Hypothesis: ...

    @abstractmethod
    def bound_value(self, alpha: float) -> float:
        """Real-valued B(alpha) before the ceiling."""

    @abstractmethod
    def at_alpha(self, alpha: float) -> "IterativeDatabaseConstruction": ...

    def evaluate(self, h: Hypothesis, query: LinearQuery) -> float:
        return h.evaluate(query)

    def bound_B(self, alpha: float | None = None) -> int:
        value = self.bound_value(self.alpha if alpha is None else alpha)
        return math.ceil(value)

    def potential(self, true_db: DataHistogram, h: Hypothesis) -> float:
        raise NotImplementedError(f"{self.name} has no potential function.")

    def __repr__(self) -> str:
        return f"{type(self).__name__}(alpha={self.alpha})"


class FriezeKannanIDC(IterativeDatabaseConstruction):
    """
    Additive cut-decomposition updates; the hypothesis is an unconstrained
    real vector and n2 = ||D||_2^2 is a public parameter of the bound.
    """

    name = "fk"

    def __init__(self, universe: Universe, alpha: float, n2: float):
        super().__init__(universe, alpha)
        self.n2 = n2

    def init(self) -> FkHypothesis:
        return FkHypothesis(np.zeros(self.universe.size))

    def update(self, h, query, a_hat):
        return fk_update(h, query, a_hat, self.alpha)

    def bound_value(self, alpha):
        return self.n2 * self.universe.size / alpha**2

    def at_alpha(self, alpha):
        return FriezeKannanIDC(self.universe, alpha, self.n2)

    def potential(self, true_db, h):
        diff = true_db.weights - h.weights
        return float(np.dot(diff, diff))


class MultiplicativeWeightsIDC(IterativeDatabaseConstruction):
    """Multiplicative weights over the universe with n = ||D||_1 treated as public."""

    name = "mw"

    def __init__(self, universe: Universe, alpha: float, public_n: float):
        super().__init__(universe, alpha)
        if public_n <= 0:
            raise ValueError("public_n must be positive.")
        self.public_n = public_n

    def init(self) -> MwHypothesis:
        size = self.universe.size
        return MwHypothesis(np.full(size, 1.0 / size), self.public_n)

    def update(self, h, query, a_hat):
        return mw_update(h, query, a_hat, self.alpha)

    def bound_value(self, alpha):
        return 4 * self.public_n**2 * math.log(self.universe.size) / alpha**2

    def at_alpha(self, alpha):
        return MultiplicativeWeightsIDC(self.universe, alpha, self.public_n)

    def potential(self, true_db, h):
        """Relative entropy of the normalized database from the hypothesis."""
        target = true_db.weights / true_db.n
        support = target > 0
        return float(np.sum(target[support] * np.log(target[support] / h.distribution[support])))


class MedianMechanismIDC(IterativeDatabaseConstruction):
    """
    Median datastructure over all size-m databases. Toy scale only: the
    candidate set has |X|^m members and is capped.
    """

    name = "mm"

    def __init__(self, universe: Universe, alpha: float, n: float, k: int, cap: int = 10**6):
        super().__init__(universe, alpha)
        if k < 1:
            raise ValueError("k must be at least 1.")
        self.n = n
        self.k = k
        self.cap = cap
        self.m = mm_candidate_size(n, k, alpha)

    def check_scale(self, alpha: float | None = None) -> int:
        m = self.m if alpha is None else mm_candidate_size(self.n, self.k, alpha)
        if self.universe.size**m > self.cap:
            raise ToyScaleError(
                f"Median mechanism at alpha={alpha or self.alpha} needs "
                f"{self.universe.size}^{m} candidates, over the cap of {self.cap}."
            )
        return m

    def init(self) -> MmHypothesis:
        self.check_scale()
        candidates = enumerate_candidates(self.universe.size, self.m, self.cap)
        logging.info(f"Median mechanism initialised with {len(candidates)} candidates of size {self.m}")
        return MmHypothesis(candidates, self.m, self.n / self.m)

    def update(self, h, query, a_hat):
        return mm_update(h, query, a_hat)

    def bound_value(self, alpha):
        return self.n**2 * math.log(self.universe.size) * math.log(self.k) / alpha**2

    def bound_B(self, alpha=None):
        self.check_scale(alpha)
        return super().bound_B(alpha)

    def at_alpha(self, alpha):
        return MedianMechanismIDC(self.universe, alpha, self.n, self.k, self.cap)


def make_idc(
    kind: str, db: DataHistogram, alpha: float, k: int = 1, cap: int = 10**6
) -> IterativeDatabaseConstruction:
    """
    Build an IDC by short name, reading its public parameters from ``db``.

    Raises
    ------
    ValueError
        If ``kind`` is not one of fk, mw, mm.
    ConfigError
        If ``kind`` is mw and the database is empty.
    """
    match kind:
        case "fk":
            return FriezeKannanIDC(db.universe, alpha, db.n2)
        case "mw":
            if db.n <= 0:
                raise ConfigError(
                    "The mw IDC needs a nonempty database (n > 0); the input database is empty. Use fk instead."
                )
            return MultiplicativeWeightsIDC(db.universe, alpha, db.n)
        case "mm":
            return MedianMechanismIDC(db.universe, alpha, db.n, k, cap)
        case _:
            raise ValueError(f"Unknown IDC {kind!r}; expected fk, mw or mm.")


@dataclass(frozen=True)
class DusReport:
    passed: bool
    round: int | None = None
    violated_property: int | None = None
    message: str = "ok"


def verify_dus(
    trace: list[UpdateRound],
    true_db: DataHistogram,
    alpha: float,
    idc: IterativeDatabaseConstruction | None = None,
) -> DusReport:
    """
    Audit a trace of update rounds as a database update sequence.

    Property 1 (initial hypothesis) and the recomputation half of property 4
    need ``idc``; without it only the chaining of recorded hypotheses is
    checked. Rounds are numbered from 1.
    """
    if not trace:
        return DusReport(True)
    if idc is not None and not trace[0].hypothesis_before.same_as(idc.init()):
        return DusReport(False, 1, 1, "first hypothesis is not the initial one")
    for t, step in enumerate(trace, start=1):
        truth = step.query.canonical(true_db.weights)
        guess = step.hypothesis_before.evaluate(step.query)
        if abs(truth - guess) < alpha:
            return DusReport(
                False, t, 2, f"|Q(D) - Q(h)| = {abs(truth - guess):.6g} < alpha = {alpha:.6g}"
            )
        if abs(truth - step.noisy_answer) >= alpha:
            return DusReport(
                False, t, 3, f"|Q(D) - a_hat| = {abs(truth - step.noisy_answer):.6g} >= alpha"
            )
        if idc is not None:
            expected = idc.update(step.hypothesis_before, step.query, step.noisy_answer)
            if not step.hypothesis_after.same_as(expected, atol=1e-9):
                return DusReport(False, t, 4, "recorded update differs from U(h, Q, a_hat)")
        if t < len(trace) and not trace[t].hypothesis_before.same_as(step.hypothesis_after):
            return DusReport(False, t + 1, 4, "hypotheses do not chain")
    return DusReport(True)
