
# coding: utf-8

# # How the evaluation curves behave
#
# Both curves depend on the score ranking only. This notebook pokes at that
# on tiny hand-built tables, where every number can be checked by hand.

# In[1]:

import numpy as np

from ctpm.dataset import Dataset
from ctpm.evaluation import atetp_curve, cost_curve, subset_ate
from ctpm.model import ObjectiveSpec


def table(t, r, c, q=None):
    n = len(t)
    q = np.ones(n) if q is None else q
    out = {"q": np.asarray(q, float), "r": np.asarray(r, float), "c": np.asarray(c, float)}
    return Dataset([f"s{i}" for i in range(n)], [f"c{i}" for i in range(n)], np.zeros((n, 1)), np.zeros((n, 1)),
                   np.asarray(t), np.full(n, 0.5), out)


# ## Effects on a selection
#
# Within a selection, each cohort's outcomes are averaged with inverse
# propensity weights normalized to sum to one, and the two averages are
# subtracted. Two treated records with outcome 1 and two controls with 0:

# In[2]:

print(subset_ate([1, 1, 0, 0], [1, 1, 0, 0], [0.5] * 4))


# Unequal propensities shift weight towards records that were unlikely to
# land in their cohort:

# In[3]:

print(subset_ate([1.0, 3.0, 0.0, 0.0], [1, 1, 0, 0], [0.8, 0.2, 0.5, 0.5]))


# ## A six-record cost curve
#
# Three treated/control pairs (control listed first): one pair with reward
# uplift only, one with both reward and cost, one with cost only.

# In[4]:

ds = table(t=[0, 1, 0, 1, 0, 1], r=[0, 1, 0, 1, 0, 0], c=[0, 0, 0, 1, 0, 1])
e = np.full(6, 0.5)
forward = cost_curve(np.arange(6.0, 0.0, -1.0), ds, "r", "c", e)
backward = cost_curve(np.arange(1.0, 7.0), ds, "r", "c", e)
print(forward.points)
print("c-AUC forward", forward.auc, " reversed", round(backward.auc, 4))


# The two areas do not add up to one here: with only six records, each prefix
# renormalizes its cohort weights, and odd-length prefixes are lopsided. On
# thousands of records the reversal identity comes back:

# In[5]:

rng = np.random.default_rng(0)
n = 20000
t = rng.integers(0, 2, n)
s = rng.normal(size=n)
big = table(t, rng.normal(size=n) + t * (1.0 + (s > 0)), rng.normal(size=n) + t, q=t)
fwd = cost_curve(s, big, "r", "c", np.full(n, 0.5)).auc
rev = cost_curve(-s, big, "r", "c", np.full(n, 0.5)).auc
print(round(fwd, 4), round(rev, 4), "sum", round(fwd + rev, 4))


# ## Only the ranking matters
#
# Any strictly increasing transform of the scores leaves both areas unchanged.

# In[6]:

spec = ObjectiveSpec("eq1_maximize", lam=1.0)
e = np.full(n, 0.5)
for name, v in [("raw", s), ("exp", np.exp(s)), ("affine", 4 * s - 7)]:
    print(f"{name:>6}: a-AUC {atetp_curve(v, big, spec, e).auc:.12f}  c-AUC {cost_curve(v, big, 'r', 'c', e).auc:.12f}")
