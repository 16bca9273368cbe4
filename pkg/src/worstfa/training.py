"""Discriminative fitting of score generators to empirical worst-case FA rates.

A batch is a set of ``(N, tau)`` queries with empirical targets computed from
the score table.  The model's estimate replaces the indicator with a scaled
sigmoid and the hard argmax with a softmax-weighted selection, so the batch
MSE is differentiable in every model parameter for fixed noise.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from ._rng import stream
from .data import FaCurve, ModelArtifact, PairScoreTable
from .estimate import FaQuery, SimConfig, _curve_from_trials, worst_case_trials
from .locscale import LocScaleParams, fit_generative_gaussian_baseline
from .models import as_params, model_trials, to_artifact
from .plda import DEFAULT_DIM, PldaScoreParams, llr_diag
from .pwl import DEFAULT_SEGMENTS, MonotonePwl

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    T_train: int = 300
    batch_size: int = 20
    lr: float = 1e-3
    steps: int = 2000
    alpha: float = 20.0
    beta: float = 10.0
    N_train_max: int = 660
    tau_min: Optional[float] = None
    tau_max: Optional[float] = None
    L: Optional[int] = None
    seed: int = 0
    score_scale: Optional[float] = None
    dim: int = DEFAULT_DIM
    warp: bool = False
    segments: int = DEFAULT_SEGMENTS
    monitor_every: int = 25

    def __post_init__(self):
        for name in ("T_train", "batch_size", "steps", "N_train_max", "dim", "segments", "monitor_every"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("lr", "alpha", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.tau_min is not None and self.tau_max is not None and not self.tau_min < self.tau_max:
            raise ValueError("tau_min must be below tau_max")

    def resolved(self, table: PairScoreTable) -> "TrainConfig":
        """Fill data-dependent defaults from the score table."""
        lo, hi = table.score_quantiles([0.001, 0.999])
        return replace(
            self,
            tau_min=float(lo) if self.tau_min is None else self.tau_min,
            tau_max=float(hi) if self.tau_max is None else self.tau_max,
            L=int(np.median(table.lengths)) if self.L is None else self.L,
            score_scale=(float(np.std(table.values)) or 1.0) if self.score_scale is None else self.score_scale,
        )


@dataclass(frozen=True)
class TrainTarget:
    query: FaQuery
    empirical_p_fa: float


# ---------------------------------------------------------------- batches

def sample_queries(rng, count, n_lo, n_hi, tau_lo, tau_hi):
    """``count`` queries with N uniform on ``[n_lo, n_hi)`` and tau uniform on ``[tau_lo, tau_hi]``."""
    Ns = rng.integers(n_lo, max(n_hi, n_lo + 1), size=count)
    taus = rng.uniform(tau_lo, tau_hi, size=count)
    return [FaQuery(int(n), float(t)) for n, t in zip(Ns, taus)]


def make_training_batch(table: PairScoreTable, cfg: TrainConfig, rng) -> list[TrainTarget]:
    cfg = cfg.resolved(table) if cfg.tau_min is None or cfg.tau_max is None else cfg
    queries = sample_queries(rng, cfg.batch_size, 1, cfg.N_train_max, cfg.tau_min, cfg.tau_max)
    seeds = rng.integers(0, 2**63 - 1, size=len(queries))
    out = []
    for q, s in zip(queries, seeds):
        p = worst_case_trials(table, q.N, [q.tau], SimConfig(cfg.T_train, int(s)))[:, 0].mean()
        out.append(TrainTarget(q, float(p)))
    return out


# ---------------------------------------------------------------- relaxed estimate

def relaxed_fa_estimate(model, query: FaQuery, cfg: TrainConfig, noise, theta=None):
    """Smooth worst-case FA estimate on fixed noise.

    ``mean sigmoid(alpha * (s - tau) / score_scale)`` over simulated scores
    of softly selected closest impostors.  Pass ``theta`` (possibly an
    ``ad.Var``) to evaluate at other parameters than ``model``'s own.
    """
    params = as_params(model)
    theta = params.to_vector() if theta is None else theta
    scale = cfg.score_scale or 1.0
    s = params.simulate(theta, noise, "soft", cfg.beta)
    z = ad.mul(cfg.alpha / scale, ad.sub(s, query.tau))
    return ad.mean(ad.sigmoid(z))


def hard_fa_estimate(model, query: FaQuery, noise):
    """Same noise, hard selection and hard indicator."""
    params = as_params(model)
    s = params.simulate(params.to_vector(), noise, "hard")
    return float(np.mean(s > query.tau))


def batch_objective(params, batch, noises, cfg: TrainConfig):
    """Closure ``theta -> MSE`` over a batch on fixed per-query noise."""
    targets = np.array([t.empirical_p_fa for t in batch])

    def objective(theta):
        total = 0.0
        for tgt, noise, y in zip(batch, noises, targets):
            est = relaxed_fa_estimate(params, tgt.query, cfg, noise, theta)
            total = ad.add(total, ad.square(ad.sub(est, y)))
        return ad.div(total, float(len(batch)))

    return objective


def draw_batch_noise(params, batch, cfg: TrainConfig, rng):
    return [params.draw_noise(rng, cfg.T_train, t.query.N, cfg.L) for t in batch]


# ---------------------------------------------------------------- initialization

def initial_params(family, table: PairScoreTable, cfg: TrainConfig):
    """Starting point for discriminative training.

    Location-scale families start from the moment-matched Gaussian fit (the
    general quantile starts as the normal quantile).  PLDA starts with equal
    within-class variances picked so zero-effort scores match the table's
    mean and spread.  Warps start as the identity over the padded score range.
    """
    warp = MonotonePwl.identity_warp_for(table.values, cfg.segments) if cfg.warp else None
    if family in ("gaussian-ls", "pwl-ls"):
        base = fit_generative_gaussian_baseline(table)
        q = MonotonePwl.normal_quantile(cfg.segments) if family == "pwl-ls" else None
        return LocScaleParams(base.hyper_mean, base.hyper_chol, q, warp)
    if family == "plda":
        rng = stream(cfg.seed, 5)
        y = rng.standard_normal((4000, 2, cfg.dim))
        e = rng.standard_normal((4000, 2, cfg.dim))
        target = np.array([table.values.mean(), table.values.std()])
        best, best_err = 1.0, np.inf
        for c in np.geomspace(1e-2, 1e2, 81):
            s = PldaScoreParams.from_d(np.full(cfg.dim, c))
            sd = np.sqrt(s.d)
            scores = llr_diag(s.d, y[:, 0] + sd * e[:, 0], y[:, 1] + sd * e[:, 1])
            err = np.sum((np.array([scores.mean(), scores.std()]) - target) ** 2)
            if err < best_err:
                best, best_err = c, err
        return PldaScoreParams.from_d(np.full(cfg.dim, best), warp)
    raise ValueError(f"unknown model family {family!r}")


# ---------------------------------------------------------------- training loop

def train_discriminative(family, table: PairScoreTable, cfg: TrainConfig = TrainConfig(),
                         init=None, log_path=None, callback=None):
    """Fit ``family`` by Adam on the relaxed batch MSE.

    Every step draws a fresh batch of queries, fresh empirical targets and
    fresh model noise; the gradient is exact for that step's fixed noise.
    The returned parameters are the best seen on a fixed monitor batch
    (fixed queries, targets and noise) evaluated every ``monitor_every`` steps.
    """
    cfg = cfg.resolved(table)
    params = as_params(init) if init is not None else initial_params(family, table, cfg)
    theta = params.to_vector()
    state = ad.AdamState.zeros(theta.size, lr=cfg.lr)

    mon_rng = stream(cfg.seed, 3)
    mon_batch = make_training_batch(table, cfg, mon_rng)
    mon_noise = draw_batch_noise(params, mon_batch, cfg, mon_rng)
    monitor = batch_objective(params, mon_batch, mon_noise, cfg)

    best_theta, best_loss = theta.copy(), float(monitor(theta))
    records = []
    fh = open(log_path, "w") if log_path else None
    t0 = time.perf_counter()
    try:
        for step_i in range(cfg.steps):
            rng = stream(cfg.seed, 4, step_i)
            batch = make_training_batch(table, cfg, rng)
            noises = draw_batch_noise(params, batch, cfg, rng)
            loss, grad = ad.value_and_grad(batch_objective(params, batch, noises, cfg), theta)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingError(f"non-finite loss or gradient at step {step_i}")
            state, theta = ad.adam_step(state, theta, grad)
            rec = {"step": step_i, "loss": loss, "grad_norm": float(np.linalg.norm(grad)),
                   "wall_time": time.perf_counter() - t0}
            if (step_i + 1) % cfg.monitor_every == 0 or step_i + 1 == cfg.steps:
                mon = float(monitor(theta))
                rec["monitor_loss"] = mon
                if mon < best_loss:
                    best_theta, best_loss = theta.copy(), mon
                log.debug("step %d loss %.3g monitor %.3g", step_i, loss, mon)
            records.append(rec)
            if fh:
                fh.write(json.dumps(rec) + "\n")
            if callback:
                callback(rec)
    finally:
        if fh:
            fh.close()

    fitted = params.with_vector(best_theta)
    prov = {"seed": cfg.seed, "training": "discriminative", "config": _config_dict(cfg),
            "best_monitor_loss": best_loss, "scores_per_pair": cfg.L}
    return to_artifact(fitted, prov), records


def fit_generative_baseline(table: PairScoreTable) -> ModelArtifact:
    params = fit_generative_gaussian_baseline(table)
    L = int(np.median(table.lengths))
    return to_artifact(params, {"training": "generative-moment-matching", "scores_per_pair": L})


def _config_dict(cfg):
    d = asdict(cfg)
    d["config_hash"] = hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]
    return d


# ---------------------------------------------------------------- evaluation

def mae_percent(predictions, targets) -> float:
    return float(np.mean(np.abs(np.asarray(predictions) - np.asarray(targets))) * 100.0)


def _scores_per_pair(model, default=25):
    if isinstance(model, ModelArtifact):
        return int(model.provenance.get("scores_per_pair", default))
    return default


def validate_mae(model, table: PairScoreTable, N_range, tau_range=None, queries=50,
                 T_eval=1000, seed=0, L=None):
    """Mean absolute error (percent) between hard model and empirical estimates.

    Queries are drawn with N uniform on the inclusive ``N_range`` and tau
    uniform on ``tau_range``.  ``model`` is a fitted model or any callable
    ``(N, tau) -> p_fa``.  Returns ``(mae, details)``.
    """
    lo, hi = N_range
    if lo < 1:
        raise ValueError("N range must start at 1 or above")
    if tau_range is None:
        tau_range = tuple(table.score_quantiles([0.001, 0.999]))
    rng = stream(seed, 21)
    qs = sample_queries(rng, queries, lo, hi + 1, *tau_range)
    L = L or _scores_per_pair(model)
    preds, targets = [], []
    for i, q in enumerate(qs):
        if callable(model) and not isinstance(model, ModelArtifact):
            preds.append(float(model(q.N, q.tau)))
        else:
            preds.append(float(model_trials(model, q.N, [q.tau], T_eval, L, seed, key=(22, i)).mean()))
        targets.append(float(worst_case_trials(table, q.N, [q.tau], SimConfig(T_eval, seed), key=(23, i)).mean()))
    return mae_percent(preds, targets), {"queries": qs, "predictions": preds, "targets": targets}


def extrapolate(model, n_grid, taus, T_eval=1000, seed=0, L=None, level=0.99, B=1000, threads=1) -> FaCurve:
    """Hard-selection worst-case FA curve of a fitted model, any N."""
    taus = [float(t) for t in taus]
    L = L or _scores_per_pair(model)
    curve = FaCurve()
    for N in n_grid:
        trials = model_trials(model, int(N), taus, T_eval, L, seed, threads=threads)
        _curve_from_trials(curve, int(N), taus, trials, seed, level, B)
    return curve
