"""
Tracing attacks as a privacy audit
==================================

The score <x - mu, M(X)> is large for rows used to compute M and centred
at zero for fresh rows. A non-private sample mean is easy to trace when d
is large relative to n; the private mean is not.
"""

from dpestim import MeanConfig, PrivacyBudget, private_mean
from dpestim.audit import GaussianMeanModel, run_membership_audit

model = GaussianMeanModel(mu_prior="rademacher")
n, d, reps = 50, 2000, 50


def sample_mean(data, seed):
    return data.mean(axis=0)


def dp_mean(data, seed):
    return private_mean(data, MeanConfig(R=4.0, budget=PrivacyBudget(0.5, 1e-5), seed=seed))


for name, est in (("sample mean", sample_mean), ("private mean", dp_mean)):
    s = run_membership_audit(model, est, n, d, reps, seed=1).summary()
    print(f"{name:>12}: in {s['mean_in']:8.2f}  out {s['mean_out']:8.2f}  z = {s['z']:6.2f}  "
          f"exceed threshold in {s['exceed_in']}/{s['n_in']} out {s['exceed_out']}/{s['n_out']}")

# With n = 50 and d = 2000 the private mean is mostly noise, so scores for
# both groups are large and spread out. What matters is that the two groups
# look alike: the attack can no longer tell members from fresh rows.
