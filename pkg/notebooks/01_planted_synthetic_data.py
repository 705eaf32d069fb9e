
# coding: utf-8

# # Planted synthetic data
#
# The synthetic generator plants everything we later want a model to find:
# which subjects respond at all, which subject/candidate pairs match, and a
# per-match intensity at which the reward uplift peaks. Because the truth is
# known, we can score records with it and see what a perfect ranking looks like.

# In[1]:

import numpy as np

from ctpm.baselines import RandomScorer
from ctpm.dataset import SyntheticConfig, generate_synthetic
from ctpm.evaluation import atetp_curve, cost_curve
from ctpm.model import ObjectiveSpec
from ctpm.propensity import fit_constant


# In[2]:

cfg = SyntheticConfig(n_records=6000, n_subjects=600, n_candidates=60, seed=0)
ds, truth = generate_synthetic(cfg)
print(len(ds), "records;", ds.x.shape[1], "subject features,", ds.y.shape[1], "candidate features")
print("treated share:", ds.treatment.mean().round(3))


# Each record logs a treatment flag, the intensity that was applied and four
# outcomes. `q` and `r` are rewards, `c` is a cost and `m` a second cost-like
# metric.

# In[3]:

for name, v in ds.outcomes.items():
    t = ds.treatment == 1
    print(f"{name}: treated mean {v[t].mean():+.3f}   control mean {v[~t].mean():+.3f}")


# The ground truth records the expected uplift of every outcome at the logged
# intensity, plus the optimal intensity of each match. Optimal intensities
# spread over the whole unit interval:

# In[4]:

print(np.percentile(truth.optimal_intensity, [5, 25, 50, 75, 95]).round(3))


# ## What a perfect ranking buys
#
# The composite we optimize is `tau_q * (tau_r - lambda * tau_c)`. Ranking by
# its planted per-record value gives the oracle curve; a random ranking gives
# the baseline.

# In[5]:

spec = ObjectiveSpec("eq1_maximize", lam=1.0)
e = fit_constant(ds).for_dataset(ds)
eff = truth.effects
oracle = eff["q"] * (eff["r"] - eff["c"])

oracle_curve = atetp_curve(oracle, ds, spec, e)
random_curve = atetp_curve(RandomScorer(0).score(ds.x), ds, spec, e)
for (rho, a), (_, b) in zip(oracle_curve.points[::4], random_curve.points[::4]):
    print(f"top {rho:4.0%}: oracle {a:+.3f}   random {b:+.3f}")
print("a-AUC oracle", round(oracle_curve.auc, 4), " random", round(random_curve.auc, 4))


# The cost curve normalizes both axes by their full-population effect, so a
# random ranking hugs the diagonal (area about 0.5).

# In[6]:

aucs = [cost_curve(RandomScorer(s).score(ds.x), ds, "r", "c", e).auc for s in range(20)]
print("random c-AUC over 20 seeds:", np.mean(aucs).round(4), "+/-", np.std(aucs).round(4))
print("oracle c-AUC:", round(cost_curve(oracle, ds, "r", "c", e).auc, 4))
