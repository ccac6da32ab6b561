"""
Peeling and sparse mean estimation
==================================

Peeling picks the s largest coordinates one at a time with noisy argmax.
We look at what it selects, check its accuracy inequality against the
recorded noise, and then pick s by private cross-validation.
"""

import numpy as np

from dpestim import MeanConfig, PrivacyBudget, peel, private_sparse_mean, verify_peeling_accuracy
from dpestim.mean import truncated_mean
from dpestim.sim import delta_rule, gen_mean_data
from dpestim.tuning import private_cv_sparsity, sparsity_grid, theoretical_truncation

n = d = 1000
s_star = 20
x, mu = gen_mean_data(n, d, s_star, seed=0)
budget = PrivacyBudget(0.5, delta_rule(n))
R = theoretical_truncation(1.0, n)

# One peeling call on the truncated mean, keeping the noise ledger.
xbar = truncated_mean(x, R)
res = peel(xbar, s_star, budget, 2 * R / n, seed=1, keep_ledger=True)
hits = len(set(res.selected.tolist()) & set(range(s_star)))
print(f"noise scale {res.scale:.3f}; {hits}/{s_star} true coordinates selected")
print("accuracy inequality holds:", verify_peeling_accuracy(xbar, res))

# Private sparse mean with the true sparsity.
est = private_sparse_mean(x, MeanConfig(R, budget, s=s_star, seed=2))
print(f"error with s = s*: {np.linalg.norm(est - mu):.3f}")

# Pick s by 5-fold CV and the exponential mechanism (10% of the budget).
select, rest = budget.fraction(0.1)
grid = sparsity_grid(s_star)
s, scores = private_cv_sparsity(x, grid, 5, (0.0, 2.0 * d), select, seed=3, R=R, return_scores=True)
est = private_sparse_mean(x, MeanConfig(R, rest, s=s, seed=4))
print("grid:", grid)
print("clipped CV scores:", np.round(scores, 2).tolist())
print(f"chosen s = {s}, error {np.linalg.norm(est - mu):.3f}")

# The exponential mechanism weighs each grid point by exp(-eps * score / (2 * sens))
# with sens = clip width / fold size = 2000 / 200 = 10. At eps = 0.05 a score
# gap of 250 moves the weight by a factor below 2, so the choice here is close
# to uniform over the grid. Private selection needs a much larger n, or a much
# tighter clip range, before the CV scores decide anything.
