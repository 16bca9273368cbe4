import numpy as np
import pytest

from worstfa import (FaQuery, PairScoreTable, ScoreSet, SimConfig, bootstrap_ci, empirical_curve, fa_rate,
                     min_dcf_threshold, pair_similarity, worst_case_fa_empirical, zero_effort_fa)
from worstfa.estimate import EstimatorError, MissingPairError, draw_candidates, worst_case_trials


@pytest.mark.parametrize("scores,tau,expected", [
    ([0.1, 0.5, 0.9], 0.5, 1 / 3),
    ([0.1, 0.5, 0.9], 0.0, 1.0),
    ([0.1, 0.5, 0.9], 0.9, 0.0),
    ([0.1, 0.5, 0.9], 5.0, 0.0),
])
def test_fa_rate(scores, tau, expected):
    assert fa_rate(ScoreSet.of(scores), tau) == expected


@pytest.mark.parametrize("scores,expected", [([0.1, 0.3], 0.2), ([4.5], 4.5), ([-1, 1], 0.0)])
def test_pair_similarity(scores, expected):
    assert pair_similarity(ScoreSet.of(scores)) == pytest.approx(expected, abs=1e-15)


def test_zero_effort(two_pair_table):
    assert zero_effort_fa(two_pair_table, 0.4) == 0.5
    assert zero_effort_fa(two_pair_table, -10.0) == 1.0


def test_zero_effort_single_pair():
    t = PairScoreTable.from_pairs({("A", "B"): [0.2, 0.4, 0.9]})
    assert zero_effort_fa(t, 0.3) == fa_rate(t.scores("A", "B"), 0.3)


def test_zero_effort_weights_pairs_equally():
    t = PairScoreTable.from_pairs({("A", "X"): [1.0], ("A", "Y"): [0.0, 0.0, 0.0, 0.0]})
    assert zero_effort_fa(t, 0.5) == 0.5


def test_worst_case_hand_enumerated(two_pair_table):
    p, per_trial = worst_case_fa_empirical(two_pair_table, FaQuery(2, 0.6), SimConfig(T=50, seed=3))
    assert p == 0.5
    assert per_trial == [0.5] * 50


def test_worst_case_below_all_scores(small_plda_table):
    lo = small_plda_table.values.min() - 1.0
    for N in (1, 5, 29):
        p, _ = worst_case_fa_empirical(small_plda_table, FaQuery(N, lo), SimConfig(T=200))
        assert p == 1.0


def test_n1_collapses_to_zero_effort(small_plda_table):
    tab = small_plda_table
    tau = float(np.median(tab.values))
    p, per_trial = worst_case_fa_empirical(tab, FaQuery(1, tau), SimConfig(T=20000, seed=1))
    pair_rates = tab.fa_rates(np.arange(tab.n_pairs), [tau])[:, 0]
    assert set(per_trial) <= set(pair_rates.tolist())
    se = np.std(per_trial) / np.sqrt(len(per_trial))
    assert abs(p - zero_effort_fa(tab, tau)) < 4 * se


def test_tie_goes_to_smallest_speaker_id():
    t = PairScoreTable.from_pairs({("A", "Y"): [0.0, 1.0], ("A", "X"): [0.5, 0.5]})
    # both pairs have mean 0.5; X sorts first, and its scores never exceed 0.6
    p, _ = worst_case_fa_empirical(t, FaQuery(2, 0.6), SimConfig(T=10))
    assert p == 0.0


def test_population_limits(two_pair_table):
    with pytest.raises(EstimatorError):
        worst_case_fa_empirical(two_pair_table, FaQuery(3, 0.0), SimConfig(T=5))
    p, _ = worst_case_fa_empirical(two_pair_table, FaQuery(3, 0.6), SimConfig(T=5, with_replacement=True))
    assert 0.0 <= p <= 0.5


def test_missing_pair_is_reported():
    t = PairScoreTable.from_pairs({("A", "X"): [0.1], ("B", "Y"): [0.2], ("A", "B"): [0.3]})
    with pytest.raises(MissingPairError):
        worst_case_fa_empirical(t, FaQuery(2, 0.0), SimConfig(T=50))


def test_candidates_exclude_target(small_plda_table):
    tab = small_plda_table
    rng = np.random.default_rng(0)
    targets = tab.enroll_speakers[rng.integers(0, len(tab.enroll_speakers), 300)]
    for repl in (False, True):
        cand = draw_candidates(tab, targets, 10, rng, repl)
        assert not np.any(cand == targets[:, None])
    cand = draw_candidates(tab, targets, 10, rng, False)
    assert all(len(set(row)) == 10 for row in cand)


def test_thread_count_does_not_change_trials(small_plda_table):
    cfg = SimConfig(T=500, seed=9)
    a = worst_case_trials(small_plda_table, 7, [0.0, 1.0], cfg, threads=1)
    b = worst_case_trials(small_plda_table, 7, [0.0, 1.0], cfg, threads=4)
    assert a.tobytes() == b.tobytes()


def test_empirical_curve_shape_and_monotone_in_tau(small_plda_table):
    taus = np.quantile(small_plda_table.values, [0.1, 0.5, 0.9])
    c = empirical_curve(small_plda_table, [1, 5, 25], taus, SimConfig(T=300), B=200)
    assert len(c) == 9
    for N in (1, 5, 25):
        ps = [r.p_fa for r in c if r.N == N]
        assert ps == sorted(ps, reverse=True)
        assert all(r.ci_lo <= r.p_fa <= r.ci_hi for r in c)


@pytest.mark.parametrize("c", [0.0, 0.3, 1.0])
def test_bootstrap_constant(c):
    assert bootstrap_ci([c] * 40, 0.99, 500, np.random.default_rng(0)) == (c, c)


def test_bootstrap_single_value():
    assert bootstrap_ci([0.7], 0.9, 100, np.random.default_rng(0)) == (0.7, 0.7)


def test_bootstrap_two_points():
    # resample means of size 2 are 0, 1/2, 1 with probabilities 1/4, 1/2, 1/4
    lo, hi = bootstrap_ci([0.0, 1.0], 0.99, 20000, np.random.default_rng(1))
    assert (lo, hi) == (0.0, 1.0)


def test_bootstrap_covers_mean():
    x = np.random.default_rng(2).random(300)
    lo, hi = bootstrap_ci(x, 0.95, 1000, np.random.default_rng(3))
    assert lo < x.mean() < hi
    assert hi - lo < 0.1


def test_min_dcf_separable():
    assert min_dcf_threshold([0.9, 1.1], [0.1, 0.5], 1.0, 1.0, 0.5) == pytest.approx(0.7)


def test_min_dcf_expensive_false_alarms():
    non = [0.1, 0.5, 2.0]
    tau = min_dcf_threshold([0.9, 1.1], non, 1.0, 1e9, 0.5)
    assert tau > max(non)


@pytest.mark.parametrize("p,c_miss,c_fa", [(0.5, 1.0, 1.0), (0.2, 1.0, 1.0), (0.5, 3.0, 1.0), (0.01, 10.0, 1.0)])
def test_min_dcf_identical_lists(p, c_miss, c_fa):
    s = [0.1, 0.4, 0.4, 0.9]
    tau = min_dcf_threshold(s, s, c_miss, c_fa, p)
    assert np.isinf(tau)
    s_arr = np.array(s)
    dcf = p * c_miss * np.mean(s_arr <= tau) + (1 - p) * c_fa * np.mean(s_arr > tau)
    assert dcf == pytest.approx(min(p * c_miss, (1 - p) * c_fa))
