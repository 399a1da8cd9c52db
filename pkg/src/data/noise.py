import math
from dataclasses import dataclass, field

import numpy as np

_MANTISSA = 2**53


@dataclass(frozen=True)
class PrivacyParams:
    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}.")
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}.")


@dataclass
class NoiseSource:
    """
    Seeded randomness for one run.

    Draws come from a counter-based Philox generator so sub-sources spawned
    for parallel trials are reproducible. With ``zero_noise`` every Laplace
    draw is exactly 0 and samplers fall back to their deterministic argmax;
    uniform draws for rounding still use the generator.

    Not safe to share between threads: each run owns one.
    """

    seed: int = 0
    zero_noise: bool = False
    _sequence: np.random.SeedSequence = field(init=False, repr=False)
    _rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        self._sequence = np.random.SeedSequence(self.seed)
        self._rng = np.random.Generator(np.random.Philox(self._sequence))

    @property
    def live(self) -> bool:
        return not self.zero_noise

    def open_uniform(self, size=None):
        """Uniform draws on the open interval (0, 1)."""
        ticks = self._rng.integers(1, _MANTISSA, size=size)
        return ticks / _MANTISSA

    def uniform(self, size=None):
        return self._rng.random(size=size)

    def laplace(self, scale: float, size=None):
        """Lap(scale) draws by inverse CDF."""
        if not scale > 0:
            raise ValueError(f"Laplace scale must be positive, got {scale}.")
        if self.zero_noise:
            return 0.0 if size is None else np.zeros(size)
        w = self.open_uniform(size) - 0.5
        return -scale * np.sign(w) * np.log1p(-2.0 * np.abs(w))

    def choice(self, probabilities: np.ndarray) -> int:
        return int(self._rng.choice(len(probabilities), p=probabilities))

    def normal(self, size=None):
        return self._rng.standard_normal(size=size)

    def spawn(self, count: int) -> list["NoiseSource"]:
        """Independent child sources, one per trial."""
        children = []
        for child in self._sequence.spawn(count):
            source = NoiseSource.__new__(NoiseSource)
            source.seed = int(child.generate_state(1, dtype=np.uint32)[0])
            source.zero_noise = self.zero_noise
            source._sequence = child
            source._rng = np.random.Generator(np.random.Philox(child))
            children.append(source)
        return children


def laplace_sample(scale: float, src: NoiseSource) -> float:
    return float(src.laplace(scale))


def laplace_sum_tail_bound(k: int, b: float, alpha: float) -> float:
    """
    Upper bound on Pr[sum_i q_i Y_i >= alpha] for k i.i.d. Lap(b) draws and
    weights q_i in [0, 1].
    """
    if k < 1 or b <= 0 or alpha <= 0:
        raise ValueError("Tail bound needs k >= 1, b > 0 and alpha > 0.")
    if alpha <= k * b:
        return math.exp(-(alpha**2) / (6 * k * b**2))
    return math.exp(-alpha / (6 * b))


def rr_error_bound(
    universe_size: int,
    num_queries: float,
    beta: float,
    epsilon: float,
    small_class: bool | None = None,
) -> float:
    """
    Additive error of randomized response over a class of linear queries.

    Parameters
    ----------
    universe_size: int
        |X|.
    num_queries: float
        |Q|; may be astronomically large, only its logarithm is used.
    beta: float
        Failure probability.
    epsilon: float
        Privacy parameter; ``math.inf`` gives 0.
    small_class: bool | None
        Force the small-class branch (True) or the general branch (False).
        None picks the branch from |Q| <= (beta/2) 2^{|X|/6}.

    Returns
    -------
    float
        eps^-1 sqrt(6|X| ln(|Q|/beta)), times sqrt(ln(|X|/beta)) on the general branch.
    """
    if math.isinf(epsilon):
        return 0.0
    log_q = math.log(num_queries) - math.log(beta)
    if small_class is None:
        small_class = math.log(num_queries) <= math.log(beta / 2) + (universe_size / 6) * math.log(2)
    bound = math.sqrt(6 * universe_size * log_q) / epsilon
    if not small_class:
        bound *= math.sqrt(math.log(universe_size / beta))
    return bound


@dataclass(frozen=True)
class PrivacyReport:
    """Spent (epsilon, delta); ``private`` is False when a non-private step ran."""

    epsilon: float
    delta: float
    private: bool = True

    def as_dict(self) -> dict:
        if not self.private:
            return {"epsilon": None, "delta": None, "private": False}
        return {"epsilon": self.epsilon, "delta": self.delta, "private": True}


def compose_budget(
    B: int, eps0: float, delta: float, accesses_per_round: int = 2
) -> PrivacyReport:
    """
    Total privacy of ``accesses_per_round * B`` adaptive eps0-DP accesses.

    With k accesses, eps' = sqrt(2k ln(1/delta)) eps0 + k eps0 (e^eps0 - 1).
    The default of two accesses per round gives the iterative construction
    accounting sqrt(4B ln(1/delta)) eps0 + 2B eps0 (e^eps0 - 1).
    """
    if eps0 <= 0 or not 0 < delta < 1:
        raise ValueError("compose_budget needs eps0 > 0 and 0 < delta < 1.")
    k = accesses_per_round * B
    epsilon = math.sqrt(2 * k * math.log(1 / delta)) * eps0 + k * eps0 * math.expm1(eps0)
    return PrivacyReport(epsilon, delta)
