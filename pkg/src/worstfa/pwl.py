"""Learnable monotone piecewise-linear functions.

Used both as a base-distribution quantile function on the unit interval and
as a score warp on the real line.  Knot abscissae are fixed; the learned part
is a raw vector whose first entry is the value at the first knot and whose
remaining entries are mapped through a positive function to the rise of each
segment, so every parameter vector yields a strictly increasing function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from . import autodiff as ad

UNIT_INTERVAL = "unit-interval"
REAL_LINE = "real-line"
SLOPE_FLOOR = 1e-6
DEFAULT_SEGMENTS = 16
# grid points at 0 and 1 would map to infinite normal quantiles
QUANTILE_INIT_CLIP = 1e-3


class DomainError(ValueError):
    pass


def pos(raw):
    """Smooth strictly positive map used for segment rises."""
    return ad.add(ad.softplus(raw), SLOPE_FLOOR)


def pos_inverse(value):
    value = np.asarray(value, dtype=np.float64) - SLOPE_FLOOR
    if np.any(value <= 0):
        raise ValueError("pos_inverse needs values above the slope floor")
    # softplus^-1(v) = log(expm1(v)), written to stay finite for large v
    return value + np.log(-np.expm1(-value))


def constrain_params(raw, n_knots=None):
    """Realized knot values ``y_0 = raw_0``, ``y_{k+1} = y_k + pos(raw_{k+1})``."""
    n = len(raw)
    if n_knots is not None and n != n_knots:
        raise ValueError(f"expected {n_knots} raw offsets, got {n}")
    if n < 2:
        raise ValueError("need at least two knots")
    rises = pos(ad.take(raw, slice(1, None)))
    return ad.add(ad.take(raw, 0), ad.concatenate([np.zeros(1), ad.cumsum(rises)]))


@dataclass(frozen=True)
class MonotonePwl:
    knot_inputs: np.ndarray
    raw_offsets: np.ndarray
    domain: str = REAL_LINE

    def __post_init__(self):
        x = np.asarray(self.knot_inputs, dtype=np.float64)
        raw = np.asarray(self.raw_offsets, dtype=np.float64)
        if x.ndim != 1 or len(x) < 2 or np.any(np.diff(x) <= 0):
            raise ValueError("knot_inputs must be a strictly increasing vector of length >= 2")
        if raw.shape != x.shape:
            raise ValueError(f"raw_offsets length {raw.size} does not match {x.size} knots")
        if self.domain not in (UNIT_INTERVAL, REAL_LINE):
            raise ValueError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "knot_inputs", x)
        object.__setattr__(self, "raw_offsets", raw)

    @property
    def n_params(self):
        return len(self.knot_inputs)

    @property
    def knot_values(self):
        return constrain_params(self.raw_offsets)

    def with_raw(self, raw):
        return MonotonePwl(self.knot_inputs, raw, self.domain)

    def __call__(self, x):
        return pwl_eval(self, x)

    def inverse(self, y):
        return pwl_inverse(self, y)

    def to_dict(self):
        return {"domain": self.domain, "knot_inputs": self.knot_inputs.tolist(),
                "raw_offsets": self.raw_offsets.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["knot_inputs"], dtype=np.float64),
                   np.array(d["raw_offsets"], dtype=np.float64), d["domain"])

    # ------------------------------------------------------------ constructors

    @classmethod
    def from_values(cls, knot_inputs, knot_values, domain=REAL_LINE):
        """Build from realized knot values (must be strictly increasing)."""
        y = np.asarray(knot_values, dtype=np.float64)
        raw = np.concatenate([[y[0]], pos_inverse(np.diff(y))])
        return cls(np.asarray(knot_inputs, dtype=np.float64), raw, domain)

    @classmethod
    def identity(cls, lo, hi, segments=DEFAULT_SEGMENTS):
        x = np.linspace(lo, hi, segments + 1)
        return cls.from_values(x, x, REAL_LINE)

    @classmethod
    def identity_warp_for(cls, scores, segments=DEFAULT_SEGMENTS, margin=0.1):
        """Identity warp whose knots span the score range widened by ``margin`` each side."""
        lo, hi = float(np.min(scores)), float(np.max(scores))
        pad = margin * max(hi - lo, 1e-12)
        return cls.identity(lo - pad, hi + pad, segments)

    @classmethod
    def normal_quantile(cls, segments=DEFAULT_SEGMENTS):
        x = np.linspace(0.0, 1.0, segments + 1)
        y = ndtri(np.clip(x, QUANTILE_INIT_CLIP, 1.0 - QUANTILE_INIT_CLIP))
        return cls.from_values(x, y, UNIT_INTERVAL)


def evaluate(knot_inputs, raw, x, domain=REAL_LINE):
    """Evaluate with possibly-differentiable ``raw`` and ``x``."""
    y = constrain_params(raw)
    return ad.pwl_interp(x, knot_inputs, y, extrapolate=(domain == REAL_LINE))


def pwl_eval(f: MonotonePwl, x):
    xv = ad.value_of(x)
    if f.domain == UNIT_INTERVAL and (np.any(xv <= 0.0) or np.any(xv >= 1.0)):
        raise DomainError("quantile functions are evaluated on the open interval (0, 1)")
    out = evaluate(f.knot_inputs, f.raw_offsets, x, f.domain)
    return float(out) if np.ndim(out) == 0 and not isinstance(x, ad.Var) else out


def pwl_inverse(f: MonotonePwl, y):
    """Exact preimage; linear extrapolation is inverted beyond the knot range."""
    xk = f.knot_inputs
    yk = f.knot_values
    yv = np.asarray(y, dtype=np.float64)
    K = len(xk) - 1
    seg = np.clip(np.searchsorted(yk, yv, side="right") - 1, 0, K - 1)
    slope = (yk[seg + 1] - yk[seg]) / (xk[seg + 1] - xk[seg])
    x = xk[seg] + (yv - yk[seg]) / slope
    if f.domain == UNIT_INTERVAL:
        x = np.clip(x, xk[0], xk[-1])
    return float(x) if x.ndim == 0 else x
