"""Empirical false-alarm estimates from a PairScoreTable.

Zero-effort FA rate, worst-case FA rate with ``N`` impostors (closest impostor
by mean pair score), percentile bootstrap intervals and min-DCF thresholds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._rng import map_blocks, stream, trial_blocks
from .data import FaCurve, PairScoreTable, ScoreSet


class EstimatorError(ValueError):
    pass


class MissingPairError(EstimatorError, KeyError):
    pass


@dataclass(frozen=True)
class FaQuery:
    N: int
    tau: float

    def __post_init__(self):
        if int(self.N) != self.N or self.N < 1:
            raise ValueError(f"N must be a positive integer, got {self.N}")
        if not np.isfinite(self.tau):
            raise ValueError("tau must be finite")


@dataclass(frozen=True)
class SimConfig:
    T: int = 1000
    seed: int = 0
    with_replacement: bool = False

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")


def _scores(s):
    return s.scores if isinstance(s, ScoreSet) else np.asarray(s, dtype=np.float64)


def fa_rate(scores, tau) -> float:
    s = _scores(scores)
    if s.size == 0:
        raise ValueError("empty score set")
    return float(np.count_nonzero(s > tau)) / s.size


def pair_similarity(scores) -> float:
    if isinstance(scores, ScoreSet):
        return scores.mean
    return float(np.mean(_scores(scores)))


def zero_effort_fa(table: PairScoreTable, tau) -> float:
    """Average of pair-specific FA rates, each pair weighted equally."""
    return float(table.fa_rates(np.arange(table.n_pairs), [tau]).mean())


# ---------------------------------------------------------------- worst case

def draw_candidates(table: PairScoreTable, targets, N, rng, with_replacement=False):
    """Random impostor candidates (indices into ``table.speakers``), shape ``(B, N)``.

    Candidates come from the table's test-side speakers, excluding the target.
    Without replacement the set of the ``N`` smallest uniform keys is taken,
    so for a fixed key draw the candidate sets are nested in ``N``.
    """
    pool = table.test_speakers
    B = len(targets)
    in_pool = np.isin(targets, pool)
    if with_replacement:
        avail = len(pool) - in_pool
        if np.any(avail < 1):
            raise EstimatorError("no impostor available for some target")
        j = (rng.random((B, N)) * avail[:, None]).astype(np.int64)
        pos = np.searchsorted(pool, targets)
        j = np.where(in_pool[:, None] & (j >= pos[:, None]), j + 1, j)
        return pool[j]
    keys = rng.random((B, len(pool)))
    keys[pool[None, :] == targets[:, None]] = np.inf
    if N < len(pool):
        cols = np.argpartition(keys, N - 1, axis=1)[:, :N]
    else:
        cols = np.argsort(keys, axis=1)[:, :N]
    return pool[cols]


def select_closest(table: PairScoreTable, targets, candidates):
    """Candidate with the largest mean pair score per row; ties go to the smallest speaker id."""
    sims = table.mean_matrix[targets[:, None], candidates]
    if np.isnan(sims).any():
        r, c = np.argwhere(np.isnan(sims))[0]
        raise MissingPairError(f"no scores for pair ({table.speakers[targets[r]]}, "
                               f"{table.speakers[candidates[r, c]]})")
    best = sims.max(axis=1, keepdims=True)
    big = np.iinfo(np.int64).max
    chosen = np.where(sims == best, candidates, big).min(axis=1)
    return chosen, best[:, 0]


def _check_population(table, N, with_replacement):
    pool = table.test_speakers
    targets = table.enroll_speakers
    smallest = len(pool) - int(np.isin(targets, pool).any())
    if not with_replacement and N > smallest:
        raise EstimatorError(f"N={N} exceeds the {smallest} impostors available per target")


def worst_case_trials(table: PairScoreTable, N, taus, cfg: SimConfig, threads=1, key=()):
    """Per-trial pair FA rates of the closest impostor, shape ``(T, len(taus))``."""
    taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
    _check_population(table, N, cfg.with_replacement)
    targets_pool = table.enroll_speakers

    def run(start, stop, rng):
        targets = targets_pool[rng.integers(0, len(targets_pool), stop - start)]
        cand = draw_candidates(table, targets, N, rng, cfg.with_replacement)
        chosen, _ = select_closest(table, targets, cand)
        return table.fa_rates(table.pair_ids[targets, chosen], taus)

    blocks = trial_blocks(cfg.seed, cfg.T, key=(N, *key))
    return np.concatenate(map_blocks(run, blocks, threads), axis=0)


def worst_case_fa_empirical(table: PairScoreTable, query: FaQuery, cfg: SimConfig = SimConfig(), threads=1):
    """Worst-case FA estimate and the per-trial values it averages."""
    per_trial = worst_case_trials(table, query.N, [query.tau], cfg, threads)[:, 0]
    return float(per_trial.mean()), per_trial.tolist()


# ---------------------------------------------------------------- intervals & thresholds

def bootstrap_ci(per_trial, level=0.99, B=1000, rng=None):
    """Percentile bootstrap interval for the mean of ``per_trial``."""
    x = np.asarray(per_trial, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty sample")
    if rng is None or isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(rng)
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    means = x[rng.integers(0, x.size, size=(B, x.size))].mean(axis=1)
    a = (1.0 - level) / 2.0
    lo, hi = np.quantile(means, [a, 1.0 - a])
    return float(lo), float(hi)


def min_dcf_threshold(target_scores, nontarget_scores, c_miss=1.0, c_fa=1.0, p_target=0.5):
    """Threshold minimizing the detection cost; accept means ``score > tau``.

    Candidates are midpoints between adjacent distinct pooled scores plus the
    two infinite sentinels; among minimizers the smallest threshold wins.
    """
    tar = np.sort(np.asarray(target_scores, dtype=np.float64))
    non = np.sort(np.asarray(nontarget_scores, dtype=np.float64))
    if tar.size == 0 or non.size == 0:
        raise ValueError("both score lists must be non-empty")
    pooled = np.unique(np.concatenate([tar, non]))
    cands = np.concatenate([[-np.inf], (pooled[1:] + pooled[:-1]) / 2.0, [np.inf]])
    p_miss = np.searchsorted(tar, cands, side="right") / tar.size
    p_fa = 1.0 - np.searchsorted(non, cands, side="right") / non.size
    dcf = p_target * c_miss * p_miss + (1.0 - p_target) * c_fa * p_fa
    return float(cands[int(np.argmin(dcf))])


# ---------------------------------------------------------------- curves

def _curve_from_trials(curve, N, taus, trials, seed, level, B):
    for j, tau in enumerate(taus):
        col = trials[:, j]
        p = float(col.mean())
        lo, hi = bootstrap_ci(col, level, B, stream(seed, 7, N, j))
        curve.append(N, tau, p, max(0.0, min(lo, p)), min(1.0, max(hi, p)))


def empirical_curve(table: PairScoreTable, n_grid, taus, cfg: SimConfig = SimConfig(),
                    level=0.99, B=1000, threads=1) -> FaCurve:
    """Worst-case FA estimates with bootstrap intervals for every ``(N, tau)``.

    All thresholds for one ``N`` are evaluated on the same simulated trials.
    """
    taus = [float(t) for t in taus]
    curve = FaCurve()
    for N in n_grid:
        trials = worst_case_trials(table, int(N), taus, cfg, threads)
        _curve_from_trials(curve, int(N), taus, trials, cfg.seed, level, B)
    return curve
