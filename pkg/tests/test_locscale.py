import numpy as np
import pytest

from worstfa import (GroundTruth, LocScaleParams, MonotonePwl, PairScoreTable, fit_generative_gaussian_baseline,
                     generate_synthetic_table, ls_sample_worst_case_scores)
from worstfa.locscale import LocScaleNoise, emit_scores, sample_pair_params, simulate_scores, soft_weights


def gauss(m=(0.0, 0.0), chol=((1.0, 0.0), (0.0, 1.0)), **kw):
    return LocScaleParams(np.array(m), np.array(chol), **kw)


def test_degenerate_hyper_covariance():
    p = gauss((1.5, np.log(0.3)), ((1e-12, 0.0), (0.0, 1e-12)))
    for mu, sigma in sample_pair_params(p, 50, np.random.default_rng(0)):
        assert mu == pytest.approx(1.5, abs=1e-9)
        assert sigma == pytest.approx(0.3, abs=1e-9)


def test_mu_mean_over_many_draws():
    draws = np.array(sample_pair_params(gauss(), 100_000, np.random.default_rng(1)))
    assert abs(draws[:, 0].mean()) < 0.02
    assert abs(np.log(draws[:, 1]).std() - 1.0) < 0.02


def test_single_impostor_is_plain_sampling():
    p = gauss((0.2, -1.0), ((0.5, 0.0), (0.1, 0.2)))
    rng = np.random.default_rng(2)
    noise = p.draw_noise(rng, 4, 1, 6)
    s, mu, sigma = simulate_scores(p, p.to_vector(), noise, "hard")
    eps = noise.eps[:, 0]
    mu_ref = 0.2 + 0.5 * eps[:, 0]
    sigma_ref = np.exp(-1.0 + 0.1 * eps[:, 0] + 0.2 * eps[:, 1])
    np.testing.assert_allclose(mu[:, 0], mu_ref)
    np.testing.assert_allclose(sigma[:, 0], sigma_ref)
    s_soft, _, _ = simulate_scores(p, p.to_vector(), noise, "soft", 5.0)
    np.testing.assert_array_equal(s, s_soft)


def test_median_variate_gives_mu():
    p = gauss((0.4, 0.1))
    noise = LocScaleNoise(np.random.default_rng(3).normal(size=(5, 7, 2)), np.full((5, 3), 0.5))
    s, mu, _ = simulate_scores(p, p.to_vector(), noise, "hard")
    np.testing.assert_allclose(s, np.broadcast_to(mu, s.shape), atol=1e-12)


def test_hard_selection_takes_largest_mu():
    p = gauss()
    noise = p.draw_noise(np.random.default_rng(4), 20, 9, 2)
    _, mu_sel, _ = simulate_scores(p, p.to_vector(), noise, "hard")
    np.testing.assert_array_equal(mu_sel[:, 0], noise.eps[:, :, 0].max(axis=1))


def test_sampler_returns_score_set():
    out = ls_sample_worst_case_scores(gauss(), 50, 12, np.random.default_rng(5))
    assert len(out.scores) == 12
    assert out.selected_sigma > 0


def test_soft_weights_concentrate():
    sims = np.array([[0.1, 2.0, 0.5, -1.0]])
    for beta, floor in [(10.0, 0.9), (100.0, 0.999999)]:
        w = soft_weights(sims, beta)
        assert w.sum() == pytest.approx(1.0)
        assert w[0, 1] > floor
    np.testing.assert_allclose(soft_weights(sims, 0.0), 0.25)


def test_baseline_on_identical_pairs():
    t = PairScoreTable.from_pairs({(a, b): [0.0, 1.0] for a in "ABC" for b in "XYZ"})
    p = fit_generative_gaussian_baseline(t)
    np.testing.assert_allclose(p.hyper_mean, [0.5, np.log(0.5)], atol=1e-12)
    assert np.abs(p.hyper_cov).max() < 1e-11


def test_baseline_recovers_known_hyper_mean():
    truth = gauss((-1.0, np.log(0.8)), ((0.7, 0.0), (0.05, 0.2)))
    table = generate_synthetic_table(GroundTruth(truth, 46, 50, seed=6))
    assert table.n_pairs >= 2000
    p = fit_generative_gaussian_baseline(table)
    np.testing.assert_allclose(p.hyper_mean, truth.hyper_mean, atol=0.05)


def test_baseline_needs_two_pairs():
    with pytest.raises(ValueError):
        fit_generative_gaussian_baseline(PairScoreTable.from_pairs({("A", "B"): [0.0, 1.0]}))


def test_normal_quantile_family_tracks_gaussian():
    g = gauss((0.3, -0.2), ((0.4, 0.0), (0.0, 0.3)))
    q = LocScaleParams(g.hyper_mean, g.hyper_chol, quantile=MonotonePwl.normal_quantile(64))
    u = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(emit_scores(q, 0.0, 1.0, u), emit_scores(g, 0.0, 1.0, u), atol=0.02)


def test_vector_roundtrip():
    p = LocScaleParams(np.array([0.1, 0.2]), np.array([[0.5, 0.0], [0.3, 0.4]]),
                       MonotonePwl.normal_quantile(8), MonotonePwl.identity(-1, 1, 4))
    q = p.with_vector(p.to_vector())
    np.testing.assert_allclose(q.to_vector(), p.to_vector(), rtol=0, atol=1e-15)
    assert q.family == "pwl-ls"
    r = LocScaleParams.from_structure("pwl-ls", p.structure(), p.to_vector())
    np.testing.assert_allclose(r.to_vector(), p.to_vector(), atol=1e-15)
