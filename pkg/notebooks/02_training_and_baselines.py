
# coding: utf-8

# # Training the matching model against its baselines
#
# A small end-to-end run: split and normalize the planted data, train the
# matching model and the Simple CT baseline with the same optimizer and
# objective, fit the R-learner, and compare all of them on the test split.
# Sizes are kept small so this finishes in well under a minute.

# In[1]:

import numpy as np
from scipy.stats import spearmanr

from ctpm.baselines import RandomScorer, fit_rlearner_model, train_simple_ct
from ctpm.dataset import SyntheticConfig, apply_normalizer, fit_normalizer, generate_synthetic, split_indices
from ctpm.evaluation import evaluate_all
from ctpm.model import ObjectiveSpec, TrainConfig, train
from ctpm.propensity import fit_constant


# In[2]:

ds, truth = generate_synthetic(SyntheticConfig(n_records=8000, n_subjects=800, n_candidates=80, seed=0))
idx = split_indices(len(ds), (0.6, 0.2, 0.2), seed=0)
raw = [ds.subset(i) for i in idx]
stats = fit_normalizer(raw[0])
train_set, val_set, test_set = (apply_normalizer(stats, d) for d in raw)
test_truth = truth.subset(idx[2])
print([len(d) for d in (train_set, val_set, test_set)])


# Treatment here was assigned at a constant rate, so a constant propensity is
# the right model.

# In[3]:

spec = ObjectiveSpec("eq1_maximize", lam=1.0)
prop = fit_constant(train_set)
cfg = TrainConfig(iterations=150, restarts=3, learning_rate=0.003, sharpness=10.0)

ctpm, history = train(train_set, val_set, spec, cfg, prop)
for h in history:
    mark = "*" if h.selected else " "
    print(f"{mark} restart {h.restart}: {h.status:<13} best iteration {h.best_iteration:3d}   val loss {h.final_val_loss:+.4f}")


# The same loop trains Simple CT, whose only per-record weight is a logistic
# function of the concatenated features. The R-learner is closed form.

# In[4]:

simple_ct, _ = train_simple_ct(train_set, val_set, spec, cfg, prop)
rlearner = fit_rlearner_model(train_set, spec)


# In[5]:

scores = {
    "ctpm": ctpm.log_score(test_set.x, test_set.y, test_set.intensity),
    "simple_ct": simple_ct.log_score(test_set.x, test_set.y),
    "rlearner": rlearner.score(test_set.x, test_set.y),
    "random": RandomScorer(0).score(test_set.x),
}
report = evaluate_all(scores, test_set, spec, prop.for_dataset(test_set))
print(report.to_text())


# ## Recommended intensities
#
# The model also predicts, per match, the intensity where its policy density
# peaks. On planted data we can compare that with the truth.

# In[6]:

pred = ctpm.optimal_intensity(test_set.x, test_set.y)
rho = spearmanr(pred, test_truth.optimal_intensity)[0]
print("Spearman with planted optimum:", round(float(rho), 3))
lo, hi = np.percentile(test_truth.optimal_intensity, [25, 75])
print("mean prediction where truth is low :", pred[test_truth.optimal_intensity < lo].mean().round(3))
print("mean prediction where truth is high:", pred[test_truth.optimal_intensity > hi].mean().round(3))
