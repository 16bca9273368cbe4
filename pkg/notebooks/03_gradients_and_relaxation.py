# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: light
#       format_version: '1.5'
#   kernelspec:
#     display_name: Python 3
#     name: python3
# ---

# # Why training works: smooth surrogates and exact gradients
#
# The worst-case estimate counts scores above a threshold after picking the
# closest impostor.  Both steps are flat almost everywhere, so training uses
# a sigmoid for the count and a softmax-weighted blend for the pick.  This
# notebook checks the gradients of that surrogate and shows it approaching
# the hard estimate as the two temperatures grow.

# +
import numpy as np

from worstfa import FaQuery, PldaScoreParams, TrainConfig
from worstfa.cli import gradcheck_report
from worstfa.training import hard_fa_estimate, relaxed_fa_estimate
# -

# ## Gradient check
#
# Reverse-mode gradients against central differences for every family, with
# all random draws held fixed.

for family in ("gaussian-ls", "pwl-ls", "plda"):
    for warp in (False, True):
        rep = gradcheck_report(family, warp=warp)
        print(f"{family:12s} warp={warp!s:5s} max relative error {rep.max_rel_error:.1e}")

# ## Sharpening the surrogate
#
# Same noise throughout; only the sigmoid scale `alpha` and the softmax
# scale `beta` change.

model = PldaScoreParams.from_d([0.3, 0.6, 1.2, 2.5])
rng = np.random.default_rng(0)
query = FaQuery(N=100, tau=1.0)
noise = model.draw_noise(rng, 2000, query.N, 25)
hard = hard_fa_estimate(model, query, noise)
print(f"hard estimate: {hard:.4f}")
for alpha, beta in [(5, 1), (20, 10), (100, 30), (1000, 100)]:
    cfg = TrainConfig(alpha=alpha, beta=beta, score_scale=3.0)
    soft = float(relaxed_fa_estimate(model, query, cfg, noise))
    print(f"alpha={alpha:5d} beta={beta:4d}  relaxed {soft:.4f}  gap {soft - hard:+.4f}")
