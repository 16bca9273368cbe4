"""Location-scale score generators.

Each impostor of a target gets a ``(mu, sigma)`` pair drawn from a bivariate
Gaussian over ``(mu, log sigma)``.  The closest impostor is the one with the
largest location; its scores are ``mu + sigma * Q(u)`` with ``u`` uniform and
``Q`` either the standard normal quantile or a learnable monotone
piecewise-linear quantile, optionally passed through a monotone warp.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy.special import ndtri

from . import autodiff as ad
from .data import PairScoreTable, ScoreSet
from .pwl import REAL_LINE, UNIT_INTERVAL, MonotonePwl, evaluate

U_CLIP = 1e-6
CHOL_FLOOR = 1e-6
N_HYPER = 5


class LocScaleNoise(NamedTuple):
    eps: np.ndarray  # (B, N, 2) standard normal
    u: np.ndarray    # (B, L) uniform


class WorstCaseSample(NamedTuple):
    scores: ScoreSet
    selected_mu: float
    selected_sigma: float


@dataclass(frozen=True)
class LocScaleParams:
    hyper_mean: np.ndarray
    hyper_chol: np.ndarray
    quantile: Optional[MonotonePwl] = None
    warp: Optional[MonotonePwl] = None

    def __post_init__(self):
        m = np.asarray(self.hyper_mean, dtype=np.float64).reshape(2)
        c = np.tril(np.asarray(self.hyper_chol, dtype=np.float64).reshape(2, 2))
        if np.any(np.diag(c) <= 0):
            raise ValueError("hyper_chol needs a positive diagonal")
        object.__setattr__(self, "hyper_mean", m)
        object.__setattr__(self, "hyper_chol", c)
        if self.quantile is not None and self.quantile.domain != UNIT_INTERVAL:
            raise ValueError("the base quantile must live on the unit interval")
        if self.warp is not None and self.warp.domain != REAL_LINE:
            raise ValueError("the warp must live on the real line")

    @property
    def family(self):
        return "gaussian-ls" if self.quantile is None else "pwl-ls"

    @property
    def hyper_cov(self):
        return self.hyper_chol @ self.hyper_chol.T

    # ------------------------------------------------------------ flat vector

    def to_vector(self):
        c = self.hyper_chol
        parts = [self.hyper_mean, [np.log(c[0, 0]), c[1, 0], np.log(c[1, 1])]]
        if self.quantile is not None:
            parts.append(self.quantile.raw_offsets)
        if self.warp is not None:
            parts.append(self.warp.raw_offsets)
        return np.concatenate(parts).astype(np.float64)

    def with_vector(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.to_vector().size:
            raise ValueError(f"expected {self.to_vector().size} parameters, got {theta.size}")
        chol = np.array([[np.exp(theta[2]), 0.0], [theta[3], np.exp(theta[4])]])
        i = N_HYPER
        q = w = None
        if self.quantile is not None:
            q = self.quantile.with_raw(theta[i:i + self.quantile.n_params])
            i += self.quantile.n_params
        if self.warp is not None:
            w = self.warp.with_raw(theta[i:i + self.warp.n_params])
        return LocScaleParams(theta[:2], chol, q, w)

    def structure(self):
        return {
            "quantile": None if self.quantile is None else
            {"domain": self.quantile.domain, "knot_inputs": self.quantile.knot_inputs.tolist()},
            "warp": None if self.warp is None else
            {"domain": self.warp.domain, "knot_inputs": self.warp.knot_inputs.tolist()},
        }

    @classmethod
    def from_structure(cls, family, structure, theta):
        q = w = None
        i = N_HYPER
        if family == "pwl-ls":
            qs = structure["quantile"]
            n = len(qs["knot_inputs"])
            q = MonotonePwl(qs["knot_inputs"], theta[i:i + n], UNIT_INTERVAL)
            i += n
        if structure.get("warp"):
            ws = structure["warp"]
            w = MonotonePwl(ws["knot_inputs"], theta[i:i + len(ws["knot_inputs"])], REAL_LINE)
        chol = np.array([[np.exp(theta[2]), 0.0], [theta[3], np.exp(theta[4])]])
        return cls(theta[:2], chol, q, w)

    # ------------------------------------------------------------ sampling

    def draw_noise(self, rng, B, N, L) -> LocScaleNoise:
        return LocScaleNoise(rng.standard_normal((B, N, 2)), rng.random((B, L)))

    def simulate(self, theta, noise: LocScaleNoise, selection="hard", beta=10.0):
        return simulate_scores(self, theta, noise, selection, beta)[0]


def _hyper(theta):
    m0, m1 = ad.take(theta, 0), ad.take(theta, 1)
    c00, c10, c11 = ad.exp(ad.take(theta, 2)), ad.take(theta, 3), ad.exp(ad.take(theta, 4))
    return m0, m1, c00, c10, c11


def pair_params_from_noise(theta, eps):
    """Reparameterized ``(mu, sigma)`` from standard normal ``eps[..., :2]``."""
    m0, m1, c00, c10, c11 = _hyper(theta)
    e0, e1 = eps[..., 0], eps[..., 1]
    mu = ad.add(m0, ad.mul(c00, e0))
    log_sigma = ad.add(ad.add(m1, ad.mul(c10, e0)), ad.mul(c11, e1))
    return mu, ad.exp(log_sigma)


def soft_weights(similarities, beta):
    """Softmax of ``beta`` times per-row standardized similarities (last axis)."""
    z = ad.div(similarities, ad.std(similarities, axis=-1, keepdims=True))
    return ad.softmax(ad.mul(beta, z), axis=-1)


def base_quantile(template: LocScaleParams, theta, u):
    uc = np.clip(u, U_CLIP, 1.0 - U_CLIP)
    if template.quantile is None:
        return ndtri(uc)
    q = template.quantile
    return evaluate(q.knot_inputs, ad.take(theta, slice(N_HYPER, N_HYPER + q.n_params)), uc, UNIT_INTERVAL)


def apply_warp(warp: Optional[MonotonePwl], raw, scores):
    if warp is None:
        return scores
    return evaluate(warp.knot_inputs, raw, scores, REAL_LINE)


def simulate_scores(template: LocScaleParams, theta, noise: LocScaleNoise, selection="hard", beta=10.0):
    """Closest-impostor scores ``(B, L)`` plus selected ``(mu, sigma)`` per trial.

    ``theta`` is the flat parameter vector laid out like ``template``; it may
    be an ``ad.Var``.  ``selection`` is ``"hard"`` (argmax of mu, lowest index
    on ties) or ``"soft"`` (softmax-weighted mu and sigma).
    """
    mu, sigma = pair_params_from_noise(theta, noise.eps)
    B, N = noise.eps.shape[:2]
    if N == 1:
        mu_sel, sigma_sel = ad.reshape(mu, (B, 1)), ad.reshape(sigma, (B, 1))
    elif selection == "hard":
        k = np.argmax(ad.value_of(mu), axis=1)[:, None]
        mu_sel = ad.take_along_axis(mu, k, axis=1)
        sigma_sel = ad.take_along_axis(sigma, k, axis=1)
    elif selection == "soft":
        w = soft_weights(mu, beta)
        mu_sel = ad.sum(ad.mul(w, mu), axis=1, keepdims=True)
        sigma_sel = ad.sum(ad.mul(w, sigma), axis=1, keepdims=True)
    else:
        raise ValueError(f"unknown selection {selection!r}")
    s = ad.add(mu_sel, ad.mul(sigma_sel, base_quantile(template, theta, noise.u)))
    if template.warp is not None:
        n = template.warp.n_params
        s = apply_warp(template.warp, ad.take(theta, slice(len(theta) - n, None)), s)
    return s, mu_sel, sigma_sel


def sample_pair_params(params: LocScaleParams, count, rng):
    """``count`` draws of ``(mu, sigma)`` from the hyper-distribution."""
    eps = rng.standard_normal((count, 2))
    mu, sigma = pair_params_from_noise(params.to_vector(), eps)
    return list(zip(mu.tolist(), sigma.tolist()))


def ls_sample_worst_case_scores(params: LocScaleParams, N, L, rng, selection="hard", beta=10.0):
    noise = params.draw_noise(rng, 1, N, L)
    s, mu, sigma = simulate_scores(params, params.to_vector(), noise, selection, beta)
    return WorstCaseSample(ScoreSet.of(s[0]), float(mu[0, 0]), float(sigma[0, 0]))


def emit_scores(params: LocScaleParams, mu, sigma, u):
    """Scores for a fixed ``(mu, sigma)`` at uniform variates ``u``."""
    theta = params.to_vector()
    s = mu + sigma * base_quantile(params, theta, np.asarray(u, dtype=np.float64))
    if params.warp is not None:
        s = apply_warp(params.warp, params.warp.raw_offsets, s)
    return s


def fit_generative_gaussian_baseline(table: PairScoreTable) -> LocScaleParams:
    """Moment-matching Gaussian location-scale fit.

    Per pair: sample mean and (population) standard deviation.  The
    hyper-distribution is the sample mean and covariance of
    ``(mu_hat, log sigma_hat)`` across pairs.
    """
    if table.n_pairs < 2:
        raise ValueError("need at least two speaker pairs")
    if np.any(table.lengths < 2):
        raise ValueError("every pair needs at least two scores to estimate a spread")
    mu = table.means
    dev = table.values - np.repeat(mu, table.lengths)
    var = np.add.reduceat(dev * dev, table.offsets[:-1]) / table.lengths
    sigma = np.maximum(np.sqrt(var), CHOL_FLOOR)
    feats = np.stack([mu, np.log(sigma)])
    cov = np.cov(feats)
    chol = np.linalg.cholesky(cov + CHOL_FLOOR ** 2 * np.eye(2))
    return LocScaleParams(feats.mean(axis=1), chol)
