import json
import logging
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import bisect

from .core import DataHistogram, LinearQuery
from .errors import BudgetExhaustedError, ConfigError, QueryValidationError
from .idc import Hypothesis, IterativeDatabaseConstruction, UpdateRound
from .noise import NoiseSource, PrivacyParams, PrivacyReport


@dataclass(frozen=True)
class OnlineConfig:
    """
    Parameters of the interactive mechanism.

    Parameters
    ----------
    privacy: PrivacyParams
        Target (epsilon, delta); delta must be positive since sigma uses log(4/delta).
    alpha: float
        Accuracy scale the IDC is run at.
    beta: float
        Failure probability in (0, 1).
    k: int
        Number of queries the analyst declares up front.
    sigma_constant: float, optional, default=1000
        Leading constant of the Laplace scale.
    T_constant: float, optional, default=4
        Leading constant of the lazy-round threshold.
    strict_window: bool, optional, default=False
        Raise instead of warn when T(alpha) falls outside [4 alpha/3, 2 alpha].
    """

    privacy: PrivacyParams
    alpha: float
    beta: float
    k: int
    sigma_constant: float = 1000.0
    T_constant: float = 4.0
    strict_window: bool = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}.")
        if not 0 < self.beta < 1:
            raise ConfigError(f"beta must lie in (0, 1), got {self.beta}.")
        if self.k < 1:
            raise ConfigError(f"k must be at least 1, got {self.k}.")
        if self.privacy.delta <= 0:
            raise ConfigError("The online mechanism needs delta > 0.")
        if self.sigma_constant <= 0 or self.T_constant <= 0:
            raise ConfigError("sigma_constant and T_constant must be positive.")

    def sigma(self, B: int) -> float:
        return self.sigma_constant * math.sqrt(B) * math.log(4 / self.privacy.delta) / self.privacy.epsilon

    def threshold(self, B: int) -> float:
        return self.T_constant * self.sigma(B) * math.log(2 * self.k / self.beta)

    def check_window(self, B: int) -> bool:
        """Whether T(alpha) lies in [4 alpha/3, 2 alpha], the range the utility guarantee needs."""
        T = self.threshold(B)
        inside = 4 * self.alpha / 3 <= T <= 2 * self.alpha
        if not inside:
            message = (
                f"Threshold T={T:.6g} lies outside [{4 * self.alpha / 3:.6g}, {2 * self.alpha:.6g}] "
                f"for alpha={self.alpha:.6g}; the accuracy guarantee does not apply."
            )
            if self.strict_window:
                raise ConfigError(message)
            logging.warning(message)
        return inside


class AnswerKind(str, Enum):
    LAZY = "lazy"
    UPDATE = "update"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True, eq=False)
class AnswerRecord:
    query: LinearQuery
    answer: float
    kind: AnswerKind
    true_answer: float | None = field(default=None, repr=False)
    noise_draw: float | None = field(default=None, repr=False)

    def to_dict(self, include_internal: bool = False) -> dict:
        row = {"query": self.query.to_dict(), "answer": self.answer, "kind": self.kind.value}
        if include_internal:
            row["true_answer"] = self.true_answer
            row["noise_draw"] = self.noise_draw
        return row


class OnlineMechanism:
    """
    Interactive query release around an iterative database construction.

    Each query gets a noisy true answer a_hat = Q(D) + Lap(sigma). When the
    hypothesis answer is within T of it the hypothesis answer is released
    (lazy round); otherwise a_hat is released and fed to the IDC (update round).
    After B(alpha) updates every further query raises BudgetExhaustedError.

    A mechanism is one sequential session; do not share it between threads.
    """

    def __init__(
        self,
        db: DataHistogram,
        idc: IterativeDatabaseConstruction,
        config: OnlineConfig,
        noise: NoiseSource,
    ):
        if db.universe.size != idc.universe.size:
            raise ConfigError("Database and IDC live on different universes.")
        if not math.isclose(idc.alpha, config.alpha):
            idc = idc.at_alpha(config.alpha)
        B = idc.bound_B()
        if not math.isfinite(B) or B < 0:
            raise ConfigError(f"IDC bound B(alpha)={B} must be a non-negative finite integer.")

        self.db = db
        self.idc = idc
        self.config = config
        self.noise = noise
        self.B = B
        self.sigma = config.sigma(B)
        self.T = config.threshold(B)
        self.window_ok = config.check_window(B) if B > 0 else True
        self.hypothesis: Hypothesis = idc.init()
        self.update_count = 0
        self.transcript: list[AnswerRecord] = []
        self.updates: list[UpdateRound] = []

        logging.info(
            f"Online mechanism ({idc.name}) created: B={B}, sigma={self.sigma:.6g}, "
            f"T={self.T:.6g}, k={config.k}"
        )

    @property
    def exhausted(self) -> bool:
        return 0 < self.B <= self.update_count

    def answer(self, query: LinearQuery) -> tuple[float, AnswerRecord]:
        if query.dimension != self.db.universe.size:
            raise QueryValidationError(
                f"Query has {query.dimension} coefficients, universe has {self.db.universe.size}."
            )
        if len(self.transcript) >= self.config.k:
            raise QueryValidationError(f"Declared k={self.config.k} queries have all been answered.")
        if self.exhausted:
            record = AnswerRecord(query, math.nan, AnswerKind.EXHAUSTED)
            self.transcript.append(record)
            raise BudgetExhaustedError(
                f"Update budget B={self.B} spent; query {len(self.transcript)} refused."
            )

        truth = query.canonical(self.db.weights)
        fake = self.hypothesis.evaluate(query)
        # B = 0: the IDC admits no alpha-far query for its initial hypothesis
        if self.B == 0:
            record = AnswerRecord(query, query.rescale * fake, AnswerKind.LAZY, truth, 0.0)
            self.transcript.append(record)
            return record.answer, record

        draw = float(self.noise.laplace(self.sigma))
        a_hat = truth + draw

        if abs(a_hat - fake) <= self.T:
            record = AnswerRecord(query, query.rescale * fake, AnswerKind.LAZY, truth, draw)
        else:
            before = self.hypothesis
            self.hypothesis = self.idc.update(before, query, a_hat)
            self.updates.append(UpdateRound(before, query, a_hat, self.hypothesis))
            self.update_count += 1
            record = AnswerRecord(query, query.rescale * a_hat, AnswerKind.UPDATE, truth, draw)
            logging.info(
                f"Update round {self.update_count}/{self.B} at query {len(self.transcript) + 1}: "
                f"|a_hat - fake| = {abs(a_hat - fake):.6g}"
            )
            if self.exhausted:
                logging.warning(f"Online mechanism exhausted its budget of {self.B} updates.")

        self.transcript.append(record)
        return record.answer, record

    def privacy_report(self) -> PrivacyReport:
        return PrivacyReport(self.config.privacy.epsilon, self.config.privacy.delta)

    def max_error(self) -> float:
        """Largest |released - true| over answered queries, on the canonical scale of T."""
        return float(errors_on(self).max(initial=0.0))

    def write_transcript(self, file_path: str, include_internal: bool = False) -> None:
        with open(file_path, "w") as handle:
            for record in self.transcript:
                handle.write(json.dumps(record.to_dict(include_internal)) + "\n")
        logging.info(f"Wrote transcript of {len(self.transcript)} answers to {file_path}")


MechanismState = OnlineMechanism


def new_mechanism(
    db: DataHistogram,
    idc: IterativeDatabaseConstruction,
    cfg: OnlineConfig,
    noise: NoiseSource | None = None,
) -> OnlineMechanism:
    return OnlineMechanism(db, idc, cfg, noise or NoiseSource())


def answer_query(state: OnlineMechanism, query: LinearQuery) -> tuple[float, AnswerRecord]:
    return state.answer(query)


def exhaustion_check(state: OnlineMechanism) -> bool:
    return state.B > 0 and state.update_count == state.B


def solve_alpha(
    idc: IterativeDatabaseConstruction,
    privacy: PrivacyParams,
    k: int,
    beta: float,
    constant: float = 3000.0,
) -> float:
    """
    Fixed point of alpha = constant * sqrt(B(alpha)) log(4/delta) log(k/beta) / epsilon.

    B(alpha) is taken before the ceiling so the equation is continuous; the
    root is found by bisection to a relative tolerance of 1e-10.

    Raises
    ------
    ConfigError
        If no root can be bracketed.
    """
    if privacy.delta <= 0:
        raise ConfigError("solve_alpha needs delta > 0.")
    scale = constant * math.log(4 / privacy.delta) * math.log(k / beta) / privacy.epsilon
    if scale <= 0:
        raise ConfigError("log(k/beta) must be positive for solve_alpha; need k > beta.")

    def gap(alpha: float) -> float:
        return alpha - scale * math.sqrt(idc.bound_value(alpha))

    lo, hi = 1e-12, 1.0
    for _ in range(400):
        if gap(hi) > 0:
            break
        hi *= 2
    else:
        raise ConfigError("Could not bracket the accuracy fixed point.")
    if gap(lo) >= 0:
        raise ConfigError("Accuracy fixed point lies below the search bracket.")
    root = bisect(gap, lo, hi, xtol=1e-300, rtol=1e-10, maxiter=2000)
    logging.info(f"solve_alpha({idc.name}) = {root:.6g}")
    return float(root)


def practical_constant(sigma_constant: float, T_constant: float) -> float:
    """solve_alpha constant matching alpha = 3 T(alpha) / 4 for the given mechanism constants."""
    return 0.75 * sigma_constant * T_constant


def run_adversary(mechanism: OnlineMechanism, queries, stop_on_exhaustion: bool = True) -> list:
    """Feed a fixed or adaptive query source to the mechanism; ``queries`` may be a callable of the mechanism."""
    answers = []
    source = queries(mechanism) if callable(queries) else iter(queries)
    for query in source:
        try:
            answer, _ = mechanism.answer(query)
        except BudgetExhaustedError:
            if stop_on_exhaustion:
                break
            continue
        answers.append(answer)
    return answers


def errors_on(mechanism: OnlineMechanism) -> np.ndarray:
    return np.array(
        [
            abs(r.answer / r.query.rescale - r.true_answer)
            for r in mechanism.transcript
            if r.kind != AnswerKind.EXHAUSTED
        ]
    )
