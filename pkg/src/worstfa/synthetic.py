"""Synthetic score tables from known generators, and their brute-force curves."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from ._rng import stream
from .data import FaCurve, PairScoreTable
from .estimate import _curve_from_trials
from .locscale import LocScaleParams, emit_scores, pair_params_from_noise
from .plda import PldaScoreParams, llr_diag
from .pwl import pwl_eval


@dataclass(frozen=True)
class GroundTruth:
    model: Union[LocScaleParams, PldaScoreParams]
    n_speakers: int
    L: int
    seed: int = 0

    def __post_init__(self):
        if self.n_speakers < 2:
            raise ValueError("need at least two speakers")
        if self.L < 1:
            raise ValueError("need at least one score per pair")


def speaker_ids(n):
    width = len(str(n - 1))
    return [f"spk{i:0{width}d}" for i in range(n)]


def _warp(model, s):
    return s if model.warp is None else pwl_eval(model.warp, s)


def generate_synthetic_table(gt: GroundTruth) -> PairScoreTable:
    """Scores for every ordered speaker pair, ``gt.L`` per pair.

    PLDA ground truth keeps one latent identity per speaker for all of its
    pairs; location-scale ground truth draws one ``(mu, sigma)`` per pair.
    """
    rng = stream(gt.seed, 31)
    S, L, m = gt.n_speakers, gt.L, gt.model
    ids = np.asarray(speaker_ids(S), dtype=object)
    e_idx, t_idx = np.nonzero(~np.eye(S, dtype=bool))
    P = len(e_idx)
    if isinstance(m, PldaScoreParams):
        d = m.d
        Y = rng.standard_normal((S, m.D))
        scores = np.empty((P, L))
        for lo in range(0, P, 4096):
            hi = min(lo + 4096, P)
            shape = (hi - lo, L, m.D)
            phi_e = Y[e_idx[lo:hi], None, :] + np.sqrt(d) * rng.standard_normal(shape)
            phi_t = Y[t_idx[lo:hi], None, :] + np.sqrt(d) * rng.standard_normal(shape)
            scores[lo:hi] = llr_diag(d, phi_e, phi_t)
        scores = _warp(m, scores)
    else:
        mu, sigma = pair_params_from_noise(m.to_vector(), rng.standard_normal((P, 2)))
        u = rng.random((P, L))
        scores = emit_scores(m, mu[:, None], sigma[:, None], u)
    return PairScoreTable(np.repeat(ids[e_idx], L), np.repeat(ids[t_idx], L), scores.ravel())


def _oracle_trial(m, N, L, rng):
    """One worst-case trial from the true generator with fresh speakers."""
    if isinstance(m, PldaScoreParams):
        d, D = m.d, m.D
        y_e = rng.standard_normal(D)
        y_imp = rng.standard_normal((N, D))
        sims = llr_diag(d, y_e, y_imp)
        y_k = y_imp[int(np.argmax(sims))]
        phi_e = y_e + np.sqrt(d) * rng.standard_normal((L, D))
        phi_t = y_k + np.sqrt(d) * rng.standard_normal((L, D))
        return _warp(m, llr_diag(d, phi_e, phi_t))
    chol = m.hyper_chol
    z = rng.standard_normal((N, 2)) @ chol.T + m.hyper_mean
    k = int(np.argmax(z[:, 0]))
    return emit_scores(m, z[k, 0], np.exp(z[k, 1]), rng.random(L))


def oracle_curve(gt: GroundTruth, n_grid, taus, T_large=2000, seed=0, level=0.99, B=1000) -> FaCurve:
    """Worst-case FA of the true generator, simulated trial by trial.

    Every trial draws a fresh target and ``N`` fresh impostors, so ``N`` is
    not limited by ``gt.n_speakers``.  Thresholds share the trial scores.
    """
    taus = np.asarray([float(t) for t in taus])
    curve = FaCurve()
    for N in n_grid:
        rng = stream(seed, 41, int(N))
        trials = np.empty((T_large, len(taus)))
        for i in range(T_large):
            s = _oracle_trial(gt.model, int(N), gt.L, rng)
            trials[i] = (s[:, None] > taus).mean(axis=0)
        _curve_from_trials(curve, int(N), list(taus), trials, seed, level, B)
    return curve
