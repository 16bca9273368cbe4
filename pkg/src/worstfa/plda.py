"""Two-covariance PLDA operating in detection-score space.

After simultaneous diagonalization the between-class covariance is the
identity and the within-class covariance is ``diag(d)``, so the model is just
``D`` nonnegative numbers.  Scores are LLRs of sampled feature pairs; the
worst-case impostor is the latent speaker whose noise-free LLR against the
target is highest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import autodiff as ad
from .data import ScoreSet
from .locscale import apply_warp
from .pwl import REAL_LINE, MonotonePwl

D_FLOOR = 1e-8
DEFAULT_DIM = 10


class PldaNoise(NamedTuple):
    y_e: np.ndarray    # (B, D) target latent
    y_imp: np.ndarray  # (B, N, D) impostor latents
    e_e: np.ndarray    # (B, L, D) enrollment residual, unit variance
    e_t: np.ndarray    # (B, L, D) test residual, unit variance


def d_from_raw(raw):
    return ad.add(ad.exp(raw), D_FLOOR)


def raw_from_d(d):
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= D_FLOOR):
        raise ValueError(f"within-class variances must exceed {D_FLOOR}")
    return np.log(d - D_FLOOR)


@dataclass(frozen=True)
class PldaScoreParams:
    raw_d: np.ndarray
    warp: Optional[MonotonePwl] = None

    def __post_init__(self):
        raw = np.asarray(self.raw_d, dtype=np.float64).ravel()
        if raw.size < 1:
            raise ValueError("need at least one dimension")
        object.__setattr__(self, "raw_d", raw)
        if self.warp is not None and self.warp.domain != REAL_LINE:
            raise ValueError("the warp must live on the real line")

    @classmethod
    def from_d(cls, d, warp=None):
        return cls(raw_from_d(d), warp)

    family = "plda"

    @property
    def D(self):
        return self.raw_d.size

    @property
    def d(self):
        return d_from_raw(self.raw_d)

    def to_vector(self):
        parts = [self.raw_d] + ([self.warp.raw_offsets] if self.warp is not None else [])
        return np.concatenate(parts)

    def with_vector(self, theta):
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.to_vector().size:
            raise ValueError(f"expected {self.to_vector().size} parameters, got {theta.size}")
        w = None if self.warp is None else self.warp.with_raw(theta[self.D:])
        return PldaScoreParams(theta[:self.D], w)

    def structure(self):
        return {"D": self.D, "warp": None if self.warp is None else
                {"domain": self.warp.domain, "knot_inputs": self.warp.knot_inputs.tolist()}}

    @classmethod
    def from_structure(cls, structure, theta):
        D = int(structure["D"])
        w = None
        if structure.get("warp"):
            w = MonotonePwl(structure["warp"]["knot_inputs"], theta[D:], REAL_LINE)
        return cls(theta[:D], w)

    def draw_noise(self, rng, B, N, L) -> PldaNoise:
        D = self.D
        return PldaNoise(rng.standard_normal((B, D)), rng.standard_normal((B, N, D)),
                         rng.standard_normal((B, L, D)), rng.standard_normal((B, L, D)))

    def simulate(self, theta, noise: PldaNoise, selection="hard", beta=10.0):
        return simulate_scores(self, theta, noise, selection, beta)


# ---------------------------------------------------------------- scoring

def llr_diag(d, phi_e, phi_t):
    """Closed-form LLR summed over the last axis, for B = I and W = diag(d).

    Per dimension the target hypothesis has covariance [[1+d, 1], [1, 1+d]]
    and the nontarget hypothesis diag(1+d, 1+d), which gives
        -(a^2 + b^2) / (2 d (d+2) (1+d)) + a b / (d (d+2)) + log((1+d) / sqrt(d (d+2))).
    Works with ``ad.Var`` inputs.
    """
    dd2 = ad.mul(d, ad.add(d, 2.0))
    c_sq = ad.div(-0.5, ad.mul(dd2, ad.add(d, 1.0)))
    c_cross = ad.div(1.0, dd2)
    c_0 = ad.sub(ad.log(ad.add(d, 1.0)), ad.mul(0.5, ad.log(dd2)))
    sq = ad.add(ad.square(phi_e), ad.square(phi_t))
    terms = ad.add(ad.add(ad.mul(c_sq, sq), ad.mul(c_cross, ad.mul(phi_e, phi_t))), c_0)
    return ad.sum(terms, axis=-1)


def plda_llr(params: PldaScoreParams, phi_e, phi_t):
    phi_e = np.asarray(phi_e, dtype=np.float64)
    phi_t = np.asarray(phi_t, dtype=np.float64)
    if phi_e.shape[-1] != params.D or phi_t.shape[-1] != params.D:
        raise ValueError(f"expected vectors of length {params.D}, got {phi_e.shape[-1]} and {phi_t.shape[-1]}")
    out = llr_diag(params.d, phi_e, phi_t)
    return float(out) if np.ndim(out) == 0 else out


def full_matrix_llr(B, W, phi_e, phi_t):
    """Reference two-covariance LLR from the stacked 2D-dimensional Gaussians."""
    B, W = np.asarray(B, dtype=np.float64), np.asarray(W, dtype=np.float64)
    x = np.concatenate([phi_e, phi_t])
    tot = B + W
    zero = np.zeros_like(B)
    cov_tar = np.block([[tot, B], [B, tot]])
    cov_non = np.block([[tot, zero], [zero, tot]])

    def logpdf(cov):
        sign, logdet = np.linalg.slogdet(cov)
        return -0.5 * (x @ np.linalg.solve(cov, x) + logdet + x.size * np.log(2 * np.pi))

    return logpdf(cov_tar) - logpdf(cov_non)


def simultaneous_diagonalize(B, W):
    """Transform ``T`` with ``T B T' = I`` and ``T W T' = diag(d)``, d descending.

    Features map as ``phi -> T @ phi``.  Row signs are fixed so the largest
    entry of each row is positive.
    """
    B, W = np.asarray(B, dtype=np.float64), np.asarray(W, dtype=np.float64)
    if B.shape != W.shape or B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError("B and W must be square matrices of the same size")
    if not (np.allclose(B, B.T) and np.allclose(W, W.T)):
        raise ValueError("B and W must be symmetric")
    try:
        L = np.linalg.cholesky(B)
        np.linalg.cholesky(W)
    except np.linalg.LinAlgError:
        raise ValueError("B and W must be positive definite") from None
    Linv = np.linalg.solve(L, np.eye(len(B)))
    M = Linv @ W @ Linv.T
    d, V = np.linalg.eigh((M + M.T) / 2.0)
    order = np.argsort(d)[::-1]
    d, V = d[order], V[:, order]
    T = V.T @ Linv
    rows = np.arange(len(T))
    T *= np.sign(T[rows, np.argmax(np.abs(T), axis=1)])[:, None]
    return T, np.maximum(d, 0.0)


def soft_select(target, candidates, similarities, beta):
    """Softmax(beta * similarities)-weighted average of candidate latents."""
    cands = np.asarray(candidates, dtype=np.float64)
    sims = np.asarray(similarities, dtype=np.float64)
    if cands.ndim != 2 or len(cands) != len(sims) or len(sims) == 0:
        raise ValueError("candidates and similarities must be non-empty and of equal length")
    if np.isinf(beta):
        return cands[int(np.argmax(sims))].copy()
    w = ad.softmax(beta * sims)
    return w @ cands


# ---------------------------------------------------------------- sampling

def simulate_scores(template: PldaScoreParams, theta, noise: PldaNoise, selection="hard", beta=10.0):
    """Closest-impostor LLR scores, shape ``(B, L)``; ``theta`` may be an ``ad.Var``."""
    D = template.D
    d = d_from_raw(ad.take(theta, slice(0, D)))
    y_e, y_imp = noise.y_e, noise.y_imp
    B, N = y_imp.shape[:2]
    if N == 1:
        y_sel = y_imp[:, 0, :]
    else:
        sim = llr_diag(d, y_e[:, None, :], y_imp)
        if selection == "hard":
            k = np.argmax(ad.value_of(sim), axis=1)
            y_sel = y_imp[np.arange(B), k]
        elif selection == "soft":
            w = ad.softmax(ad.mul(beta, sim), axis=1)
            y_sel = ad.sum(ad.mul(ad.expand_dims(w, -1), y_imp), axis=1)
        else:
            raise ValueError(f"unknown selection {selection!r}")
    sd = ad.sqrt(d)
    phi_e = ad.add(y_e[:, None, :], ad.mul(sd, noise.e_e))
    phi_t = ad.add(ad.expand_dims(y_sel, 1), ad.mul(sd, noise.e_t))
    s = llr_diag(d, phi_e, phi_t)
    if template.warp is not None:
        s = apply_warp(template.warp, ad.take(theta, slice(D, None)), s)
    return s


def plda_sample_worst_case_scores(params: PldaScoreParams, N, L, rng, selection="hard", beta=10.0) -> ScoreSet:
    noise = params.draw_noise(rng, 1, N, L)
    return ScoreSet.of(simulate_scores(params, params.to_vector(), noise, selection, beta)[0])
