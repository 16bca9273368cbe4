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

# # Empirical worst-case false alarms
#
# A verification system scores an enrolled speaker against a test utterance
# and accepts when the score clears a threshold.  The usual false-alarm rate
# averages over random impostors.  Here we ask a harder question: if an
# attacker can search a crowd of `N` people for the one who sounds most like
# the target, how often does that person get in?
#
# We build a small score table, estimate that rate directly from the table,
# and see where the direct estimate runs out of data.

# +
from pathlib import Path

import numpy as np

from worstfa import (FaQuery, GroundTruth, PairScoreTable, PldaScoreParams, SimConfig, empirical_curve,
                     generate_synthetic_table, min_dcf_threshold, worst_case_fa_empirical, write_curve,
                     zero_effort_fa)

np.set_printoptions(precision=4, suppress=True)
OUT = Path("output")
OUT.mkdir(exist_ok=True)
# -

# ## A table you can check by hand
#
# Target `A` has two possible impostors.  `Y` sounds more like `A` on average
# (mean score 0.6 against 0.2), so with both in the crowd `Y` is always the
# one chosen, and only one of its two scores clears 0.6.

tiny = PairScoreTable.from_pairs({("A", "X"): [0.1, 0.3], ("A", "Y"): [0.5, 0.7]})
print("zero-effort FA at 0.4:", zero_effort_fa(tiny, 0.4))
p, _ = worst_case_fa_empirical(tiny, FaQuery(N=2, tau=0.6), SimConfig(T=100))
print("worst-case FA with N=2 at 0.6:", p)

# ## A synthetic corpus
#
# 120 speakers with persistent identities, every ordered pair scored 10 times
# by a 4-dimensional score-space PLDA.  Same-speaker trials would normally
# set the operating threshold; we draw them from the same model to pick a
# min-DCF threshold.

truth = PldaScoreParams.from_d([0.3, 0.6, 1.2, 2.5])
table = generate_synthetic_table(GroundTruth(truth, n_speakers=120, L=10, seed=0))
print(table)

rng = np.random.default_rng(1)
d, sd = truth.d, np.sqrt(truth.d)
y = rng.standard_normal((20_000, 4))
same = (y + sd * rng.standard_normal(y.shape), y + sd * rng.standard_normal(y.shape))
from worstfa.plda import llr_diag  # noqa: E402
target_scores = llr_diag(d, *same)
tau_dcf = min_dcf_threshold(target_scores, table.values[::10], c_miss=1, c_fa=10, p_target=0.01)
print(f"min-DCF threshold: {tau_dcf:.3f}")
print(f"zero-effort FA there: {zero_effort_fa(table, tau_dcf):.4f}")

# ## The curve
#
# As the crowd grows the best impostor gets closer and the false-alarm rate
# climbs.  With 120 speakers the estimate stops at 119 impostors; the later
# notebooks extend it with a model.

taus = [float(np.median(table.values)), tau_dcf]
curve = empirical_curve(table, [1, 2, 5, 10, 20, 50, 119], taus, SimConfig(T=2000, seed=0), B=500)
for r in curve:
    print(f"N={r.N:4d} tau={r.tau:7.3f}  p_fa={r.p_fa:.4f}  99% CI [{r.ci_lo:.4f}, {r.ci_hi:.4f}]")
write_curve(curve, OUT / "empirical.svg")
write_curve(curve, OUT / "empirical.csv")
