import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .core import DataHistogram, LinearQuery, QueryTag, compile_cut_query, compile_rank1_query, pairs_to_matrix
from .errors import ConfigError, DistinguisherContractError
from .idc import Hypothesis, IterativeDatabaseConstruction, UpdateRound
from .noise import NoiseSource, PrivacyParams, PrivacyReport, compose_budget
from .synth import cut_norm_bruteforce, top_singular_pair

EXACT_CUT_CANDIDATE_MAX_VERTICES = 14


class Distinguisher(ABC):
    """
    Picks a query on which a database and a hypothesis disagree the most.

    Attributes
    ----------
    private: bool
        False for experimental stand-ins that read the database without noise.
    gamma: float
        Failure probability of the guarantee returned by ``F``.
    """

    name: str = "distinguisher"
    private: bool = True
    gamma: float = 0.0

    @abstractmethod
    def distinguish(self, eps0: float, D: DataHistogram, H: Hypothesis) -> LinearQuery: ...

    @abstractmethod
    def accepts(self, query: LinearQuery) -> bool:
        """Whether ``query`` belongs to the class this distinguisher searches."""

    def F(self, eps0: float) -> float:
        """Additive shortfall from the best discrepancy, with probability 1 - gamma."""
        return 0.0


def exp_mech_distinguisher(
    eps0: float,
    D: DataHistogram,
    H: Hypothesis,
    query_class: list[LinearQuery],
    noise: NoiseSource,
) -> LinearQuery:
    """
    Exponential mechanism over a finite query class with score |Q(D) - Q(H)|.

    Scores are on the canonical scale (sensitivity 1) and queries are drawn
    with probability proportional to exp(eps0 * score / 2). With zero noise
    the first maximizer is returned.
    """
    if not query_class:
        raise ValueError("Exponential mechanism needs a nonempty query class.")
    scores = np.array([abs(q.canonical(D.weights) - H.evaluate(q)) for q in query_class])
    if noise.zero_noise:
        return query_class[int(np.argmax(scores))]
    probabilities = softmax(eps0 * scores / 2)
    return query_class[noise.choice(probabilities)]


class ExpMechDistinguisher(Distinguisher):
    name = "expmech"
    private = True

    def __init__(self, query_class: list[LinearQuery], noise: NoiseSource, gamma: float = 0.05):
        if not query_class:
            raise ValueError("Exponential mechanism needs a nonempty query class.")
        if not 0 < gamma < 1:
            raise ValueError("gamma must lie in (0, 1).")
        self.query_class = list(query_class)
        self.noise = noise
        self.gamma = gamma
        self._members = {id(q) for q in self.query_class}

    def distinguish(self, eps0, D, H):
        return exp_mech_distinguisher(eps0, D, H, self.query_class, self.noise)

    def accepts(self, query):
        return id(query) in self._members

    def F(self, eps0):
        return 2 * (math.log(len(self.query_class)) + math.log(1 / self.gamma)) / eps0


def _rank1_score(A: np.ndarray, u: np.ndarray, v: np.ndarray) -> float:
    return float(u @ A @ v)


def _alternate(A: np.ndarray, u: np.ndarray, v: np.ndarray, sign: float, rounds: int = 10):
    """Coordinate ascent on sign * u^T A v over the unit box; each step is exact."""
    for _ in range(rounds):
        new_u = (sign * (A @ v) > 0).astype(float)
        new_v = (sign * (A.T @ new_u) > 0).astype(float)
        if np.array_equal(new_u, u) and np.array_equal(new_v, v):
            break
        u, v = new_u, new_v
    return u, v


def svd_rank1_distinguisher(
    D_graph: DataHistogram,
    H_graph: Hypothesis,
    tol: float = 1e-8,
    max_iter: int = 1000,
    seed: int = 0,
) -> LinearQuery:
    """
    NON-PRIVATE. Rank-1 query approximately maximizing |u^T (D - H) v|.

    The top singular pair (w, z) of D - H is split into the positive and
    negative parts of w and z, each scaled to max 1, and the four pairings
    are scored. The best one is polished by coordinate ascent. On small
    graphs the exact best cut is also a candidate, so the result never
    scores below it.
    """
    vertex_count = D_graph.universe.require_graph()
    A = pairs_to_matrix(D_graph.weights - H_graph.as_vector(), vertex_count)
    if not np.any(A):
        zero = np.zeros(vertex_count)
        return compile_rank1_query(zero, zero, D_graph.universe)

    pair = top_singular_pair(A, tol=tol, max_iter=max_iter, seed=seed)
    candidates = []
    for w in (np.maximum(pair.left, 0), np.maximum(-pair.left, 0)):
        for z in (np.maximum(pair.right, 0), np.maximum(-pair.right, 0)):
            if w.max() > 0 and z.max() > 0:
                candidates.append((w / w.max(), z / z.max()))
    for u, v in list(candidates):
        sign = 1.0 if _rank1_score(A, u, v) >= 0 else -1.0
        candidates.append(_alternate(A, u, v, sign))
    if vertex_count <= EXACT_CUT_CANDIDATE_MAX_VERTICES:
        _, S, T = cut_norm_bruteforce(A)
        u, v = np.zeros(vertex_count), np.zeros(vertex_count)
        u[list(S)] = 1.0
        v[list(T)] = 1.0
        candidates.append((u, v))

    u, v = max(candidates, key=lambda c: abs(_rank1_score(A, *c)))
    return compile_rank1_query(u, v, D_graph.universe)


class SvdRank1Distinguisher(Distinguisher):
    """NON-PRIVATE experimental distinguisher; runs report no privacy guarantee."""

    name = "svd-rank1"
    private = False

    def __init__(self, seed: int = 0):
        self.seed = seed

    def distinguish(self, eps0, D, H):
        return svd_rank1_distinguisher(D, H, seed=self.seed)

    def accepts(self, query):
        return query.tag == QueryTag.RANK1


def singleton_and_pair_queries(universe_size: int) -> list[LinearQuery]:
    """Indicator queries of every single item and every pair of items."""
    queries = []
    for i in range(universe_size):
        coefficients = np.zeros(universe_size)
        coefficients[i] = 1.0
        queries.append(LinearQuery(coefficients))
    for i in range(universe_size):
        for j in range(i + 1, universe_size):
            coefficients = np.zeros(universe_size)
            coefficients[[i, j]] = 1.0
            queries.append(LinearQuery(coefficients))
    return queries


def all_cut_queries(universe) -> list[LinearQuery]:
    """Every cut query Q_{S,T} with S, T nonempty; small graphs only."""
    vertex_count = universe.require_graph()
    subsets = [
        tuple(v for v in range(vertex_count) if mask >> v & 1) for mask in range(1, 1 << vertex_count)
    ]
    return [compile_cut_query(S, T, universe) for S in subsets for T in subsets]


@dataclass(frozen=True)
class IcConfig:
    privacy: PrivacyParams
    alpha: float
    beta: float = 0.05
    certify: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}.")
        if not 0 < self.privacy.delta < 1:
            raise ConfigError("The iterative construction needs 0 < delta < 1.")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}.")

    def eps0(self, B: int) -> float:
        return self.privacy.epsilon / (4 * math.sqrt(B * math.log(1 / self.privacy.delta)))


@dataclass(frozen=True, eq=False)
class IcRound:
    round: int
    query: LinearQuery
    noisy_answer: float
    hypothesis_answer: float
    updated: bool


@dataclass(eq=False)
class IcResult:
    hypothesis: Hypothesis
    transcript: list[IcRound]
    updates: list[UpdateRound]
    exit_reason: str
    B: int
    eps0: float
    privacy: PrivacyReport
    update_idc: IterativeDatabaseConstruction = field(repr=False)

    @property
    def rounds(self) -> int:
        return len(self.transcript)


def ic_release(
    db: DataHistogram,
    idc: IterativeDatabaseConstruction,
    dist: Distinguisher,
    cfg: IcConfig,
    noise: NoiseSource | None = None,
) -> IcResult:
    """
    Offline synthetic-data release by iterative construction.

    For t = 1..B(alpha) the distinguisher proposes a query at eps0, its
    answer is measured with Lap(1/eps0), and the run stops early once the
    hypothesis is within 3 alpha/4 of that measurement. Otherwise the
    hypothesis is updated by the IDC tuned to alpha/2.

    Raises
    ------
    ConfigError
        If ``cfg.certify`` is set and gamma > beta / (2 B(alpha)).
    DistinguisherContractError
        If the distinguisher returns a query outside its class.
    """
    noise = noise or NoiseSource()
    B = idc.at_alpha(cfg.alpha).bound_B()
    updater = idc.at_alpha(cfg.alpha / 2)
    if B == 0:
        logging.info(f"Iterative construction ({idc.name}) has B=0; releasing the initial hypothesis")
        return IcResult(updater.init(), [], [], "accurate", 0, math.inf, PrivacyReport(0.0, 0.0), updater)
    eps0 = cfg.eps0(B)
    if cfg.certify and dist.gamma > cfg.beta / (2 * B):
        raise ConfigError(
            f"Distinguisher failure probability {dist.gamma} exceeds beta/(2B) = {cfg.beta / (2 * B):.3g}."
        )
    h = updater.init()
    transcript: list[IcRound] = []
    updates: list[UpdateRound] = []
    exit_reason = "budget"

    logging.info(f"Iterative construction ({idc.name}, {dist.name}) with B={B}, eps0={eps0:.6g}")
    for t in range(1, B + 1):
        query = dist.distinguish(eps0, db, h)
        if not dist.accepts(query):
            raise DistinguisherContractError(f"{dist.name} returned a query outside its class at round {t}.")
        a_hat = query.canonical(db.weights) + float(noise.laplace(1.0 / eps0))
        guess = h.evaluate(query)
        if abs(a_hat - guess) < 3 * cfg.alpha / 4:
            transcript.append(IcRound(t, query, a_hat, guess, False))
            exit_reason = "accurate"
            break
        after = updater.update(h, query, a_hat)
        updates.append(UpdateRound(h, query, a_hat, after))
        transcript.append(IcRound(t, query, a_hat, guess, True))
        h = after

    if dist.private:
        privacy = compose_budget(B, eps0, cfg.privacy.delta)
    else:
        logging.warning(f"{dist.name} is not private; no privacy guarantee is reported.")
        privacy = PrivacyReport(math.nan, math.nan, private=False)
    logging.info(f"Iterative construction stopped after {len(transcript)} rounds ({exit_reason})")
    return IcResult(h, transcript, updates, exit_reason, B, eps0, privacy, updater)


def ic_utility_bound(B: int, privacy: PrivacyParams, beta: float, F_at_eps0: float = 0.0) -> float:
    """Smallest alpha the iterative construction certifies: max(16 sqrt(B ln(1/delta)) ln(2B/beta)/eps, 2F(eps0))."""
    noise_term = 16 * math.sqrt(B * math.log(1 / privacy.delta)) * math.log(2 * B / beta) / privacy.epsilon
    return max(noise_term, 2 * F_at_eps0)


def max_class_error(db: DataHistogram, h: Hypothesis, query_class: list[LinearQuery]) -> float:
    return max(abs(q.canonical(db.weights) - h.evaluate(q)) for q in query_class)
