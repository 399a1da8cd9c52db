import itertools
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from src.data.core import DataHistogram, LinearQuery, Universe, evaluate, matrix_to_pairs
from src.data.errors import ConfigError, DistinguisherContractError
from src.data.idc import FkHypothesis, make_idc, verify_dus
from src.data.noise import NoiseSource, PrivacyParams, compose_budget
from src.data.offline import (
    Distinguisher,
    ExpMechDistinguisher,
    IcConfig,
    SvdRank1Distinguisher,
    exp_mech_distinguisher,
    ic_release,
    ic_utility_bound,
    max_class_error,
    singleton_and_pair_queries,
    svd_rank1_distinguisher,
)
from src.data.synth import cut_norm_bruteforce


def singletons(size: int) -> list[LinearQuery]:
    return [LinearQuery(np.eye(size)[i]) for i in range(size)]


def test_exp_mech_zero_noise_returns_argmax(zero_noise):
    D = DataHistogram(Universe(2), [2.0, 0.0])
    H = FkHypothesis(np.zeros(2))
    query_class = singletons(2)
    assert exp_mech_distinguisher(1.0, D, H, query_class, zero_noise) is query_class[0]


def test_exp_mech_first_index_breaks_ties(zero_noise):
    D = DataHistogram(Universe(3), [1.0, 1.0, 1.0])
    query_class = singletons(3)
    assert exp_mech_distinguisher(1.0, D, FkHypothesis(np.zeros(3)), query_class, zero_noise) is query_class[0]


def test_exp_mech_needs_queries(zero_noise, flat_db):
    with pytest.raises(ValueError):
        exp_mech_distinguisher(1.0, flat_db, FkHypothesis(np.zeros(4)), [], zero_noise)


@pytest.mark.slow
def test_exp_mech_uniform_when_scores_tie():
    D = DataHistogram(Universe(4), [1.0, 1.0, 1.0, 1.0])
    H = FkHypothesis(np.ones(4))
    query_class = singletons(4)
    src = NoiseSource(seed=8)
    counts = np.zeros(4)
    for _ in range(10_000):
        picked = exp_mech_distinguisher(1.0, D, H, query_class, src)
        counts[next(i for i, q in enumerate(query_class) if q is picked)] += 1
    assert chisquare(counts).pvalue > 0.001


@pytest.mark.slow
def test_exp_mech_concentrates_at_large_eps0():
    D = DataHistogram(Universe(2), [1.0, 0.0])
    H = FkHypothesis(np.zeros(2))
    query_class = singletons(2)
    src = NoiseSource(seed=9)
    hits = sum(exp_mech_distinguisher(100.0, D, H, query_class, src) is query_class[0] for _ in range(10_000))
    assert hits / 10_000 > 0.99


def test_svd_distinguisher_single_pair():
    D = DataHistogram(Universe.graph(2), [5.0])
    H = FkHypothesis(np.zeros(1))
    query = svd_rank1_distinguisher(D, H)
    A = np.array([[0.0, 5.0], [5.0, 0.0]])
    grid = max(
        abs(np.array(u) @ A @ np.array(v))
        for u in itertools.product([0, 1], repeat=2)
        for v in itertools.product([0, 1], repeat=2)
    )
    assert abs(evaluate(query, D.weights)) == pytest.approx(10.0)
    assert grid == 10.0


def test_svd_distinguisher_zero_difference():
    D = DataHistogram.from_edges(4, [(0, 1), (2, 3)])
    query = svd_rank1_distinguisher(D, FkHypothesis(D.weights))
    assert not query.coefficients.any()


def test_svd_distinguisher_dominates_cuts():
    rng = np.random.default_rng(6)
    for _ in range(20):
        D = DataHistogram(Universe.graph(6), rng.random(15))
        H = FkHypothesis(rng.normal(size=15))
        diff = D.weights - H.weights
        query = svd_rank1_distinguisher(D, H)
        best_cut = cut_norm_bruteforce(diff)[0]
        assert abs(evaluate(query, diff)) >= best_cut - 1e-9


def test_svd_distinguisher_is_flagged_non_private():
    dist = SvdRank1Distinguisher()
    assert not dist.private


def test_ic_exits_immediately_when_accurate(zero_noise):
    db = DataHistogram(Universe(4), np.ones(4))
    idc = make_idc("mw", db, 1.0)
    dist = ExpMechDistinguisher(singleton_and_pair_queries(4), zero_noise)
    result = ic_release(db, idc, dist, IcConfig(PrivacyParams(1.0, 1e-6), 1.0), zero_noise)
    assert result.exit_reason == "accurate"
    assert result.rounds == 1
    assert result.hypothesis.same_as(idc.init())


def test_ic_on_empty_database_releases_initial_hypothesis(zero_noise):
    db = DataHistogram(Universe(4), np.zeros(4))
    idc = make_idc("fk", db, 1.0)
    dist = ExpMechDistinguisher(singletons(4), zero_noise)
    result = ic_release(db, idc, dist, IcConfig(PrivacyParams(1.0, 1e-6), 1.0), zero_noise)
    assert result.exit_reason == "accurate"
    assert result.rounds == 0
    assert result.updates == []
    assert result.privacy.epsilon == 0.0
    assert result.hypothesis.same_as(idc.init())


def test_ic_fk_singletons_reach_alpha(zero_noise):
    db = DataHistogram(Universe(4), [4.0, 0.0, 0.0, 0.0])
    alpha = 2.0
    query_class = singletons(4)
    dist = ExpMechDistinguisher(query_class, zero_noise)
    result = ic_release(db, make_idc("fk", db, alpha), dist, IcConfig(PrivacyParams(1.0, 1e-6), alpha), zero_noise)
    assert result.exit_reason == "accurate"
    assert max_class_error(db, result.hypothesis, query_class) <= alpha
    assert verify_dus(result.updates, db, alpha / 2, result.update_idc).passed


def test_ic_singleton_and_pair_class(zero_noise):
    db = DataHistogram(Universe(8), [4.0, 0, 0, 0, 0, 0, 0, 0])
    alpha = 2.0
    privacy = PrivacyParams(1.0, 1e-6)
    query_class = singleton_and_pair_queries(8)
    assert len(query_class) == 8 + 28
    dist = ExpMechDistinguisher(query_class, zero_noise)
    result = ic_release(db, make_idc("fk", db, alpha), dist, IcConfig(privacy, alpha), zero_noise)

    assert result.exit_reason == "accurate"
    assert max_class_error(db, result.hypothesis, query_class) <= alpha
    assert verify_dus(result.updates, db, alpha / 2, result.update_idc).passed

    B, eps0 = result.B, result.eps0
    assert eps0 == pytest.approx(1.0 / (4 * math.sqrt(B * math.log(1e6))))
    expected = math.sqrt(4 * B * math.log(1e6)) * eps0 + 2 * B * eps0 * math.expm1(eps0)
    assert result.privacy.epsilon == pytest.approx(expected, abs=1e-12)
    assert result.privacy.epsilon == compose_budget(B, eps0, 1e-6).epsilon


def test_ic_budget_exit_under_heavy_noise():
    db = DataHistogram(Universe(4), [4.0, 0.0, 0.0, 0.0])
    alpha = 2.0
    src = NoiseSource(seed=3)
    dist = ExpMechDistinguisher(singletons(4), src)
    result = ic_release(db, make_idc("fk", db, alpha), dist, IcConfig(PrivacyParams(1e-3, 1e-6), alpha), src)
    assert result.exit_reason == "budget"
    assert result.rounds == result.B == 16
    assert len(result.updates) == result.B


def test_ic_refuses_uncertified_distinguisher(zero_noise, flat_db):
    dist = ExpMechDistinguisher(singletons(4), zero_noise, gamma=0.5)
    cfg = IcConfig(PrivacyParams(1.0, 1e-6), 1.0, beta=0.05, certify=True)
    with pytest.raises(ConfigError):
        ic_release(flat_db, make_idc("fk", flat_db, 1.0), dist, cfg, zero_noise)


class OutOfClassDistinguisher(Distinguisher):
    name = "rogue"

    def distinguish(self, eps0, D, H):
        return LinearQuery(np.ones(D.universe.size))

    def accepts(self, query):
        return False


def test_ic_rejects_out_of_class_query(zero_noise, flat_db):
    with pytest.raises(DistinguisherContractError):
        ic_release(
            flat_db,
            make_idc("fk", flat_db, 1.0),
            OutOfClassDistinguisher(),
            IcConfig(PrivacyParams(1.0, 1e-6), 1.0),
            zero_noise,
        )


def test_ic_with_svd_reports_no_privacy(zero_noise):
    db = DataHistogram.from_edges(5, [(0, 1), (1, 2), (3, 4)])
    result = ic_release(
        db,
        make_idc("fk", db, 1.0),
        SvdRank1Distinguisher(),
        IcConfig(PrivacyParams(1.0, 1e-6), 1.0),
        zero_noise,
    )
    assert not result.privacy.private
    assert result.privacy.as_dict()["epsilon"] is None


def test_ic_utility_bound():
    privacy = PrivacyParams(1.0, 1e-6)
    B, beta = 50, 0.05
    noise_term = 16 * math.sqrt(B * math.log(1e6)) * math.log(2 * B / beta)
    assert ic_utility_bound(B, privacy, beta) == pytest.approx(noise_term)
    assert ic_utility_bound(B, privacy, beta, F_at_eps0=1e6) == 2e6


def test_matrix_to_pairs_feeds_distinguisher():
    A = np.zeros((3, 3))
    A[0, 2] = A[2, 0] = 1.0
    D = DataHistogram(Universe.graph(3), matrix_to_pairs(A))
    query = svd_rank1_distinguisher(D, FkHypothesis(np.zeros(3)))
    assert abs(evaluate(query, D.weights)) == pytest.approx(2.0)
