"""Family registry and hard (evaluation-time) Monte-Carlo for fitted models."""

from __future__ import annotations

import numpy as np

from ._rng import map_blocks, trial_blocks
from .data import ModelArtifact
from .locscale import LocScaleParams
from .plda import PldaScoreParams

# keep noise blocks around this many floats regardless of N
_BLOCK_BUDGET = 1 << 21


def params_from_artifact(art: ModelArtifact):
    if art.family == "plda":
        return PldaScoreParams.from_structure(art.structure, art.params)
    return LocScaleParams.from_structure(art.family, art.structure, art.params)


def to_artifact(params, provenance=None, extra_structure=None) -> ModelArtifact:
    structure = params.structure()
    if extra_structure:
        structure.update(extra_structure)
    return ModelArtifact(params.family, params.to_vector(), structure, dict(provenance or {}))


def as_params(model):
    return params_from_artifact(model) if isinstance(model, ModelArtifact) else model


def block_size(params, N):
    width = N * (params.D if isinstance(params, PldaScoreParams) else 2)
    return int(max(1, min(64, _BLOCK_BUDGET // max(width, 1))))


def model_trials(model, N, taus, T, L, seed, key=(), threads=1):
    """Per-trial hard FA rates of a model, shape ``(T, len(taus))``.

    Hard argmax selection and hard ``score > tau`` counting; every threshold
    is applied to the same simulated scores.
    """
    params = as_params(model)
    taus = np.atleast_1d(np.asarray(taus, dtype=np.float64))
    theta = params.to_vector()

    def run(start, stop, rng):
        noise = params.draw_noise(rng, stop - start, N, L)
        s = params.simulate(theta, noise, "hard")
        return (s[:, :, None] > taus).mean(axis=1)

    blocks = trial_blocks(seed, T, key=(N, *key), block=block_size(params, N))
    return np.concatenate(map_blocks(run, blocks, threads), axis=0)


def model_fa(model, N, tau, T, L, seed, key=()):
    return float(model_trials(model, N, [tau], T, L, seed, key)[:, 0].mean())
