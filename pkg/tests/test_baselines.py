import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ctpm.baselines import (
    LinearEffect,
    RandomScorer,
    RLearnerModel,
    SimpleCtModel,
    fit_rlearner,
    fit_rlearner_model,
    rlearner_score,
    train_simple_ct,
)
from ctpm.dataset import DataError, Dataset, SyntheticConfig, apply_normalizer, fit_normalizer, generate_synthetic, split_indices
from ctpm.evaluation import atetp_curve
from ctpm.model import Batch, ObjectiveSpec, TrainConfig, train
from ctpm.propensity import fit_constant

from conftest import make_dataset

EQ1 = ObjectiveSpec("eq1_maximize", lam=1.0)


def _dataset(pairs, t, y_out, dx=2):
    n = len(t)
    return Dataset([f"s{i}" for i in range(n)], [f"c{i}" for i in range(n)], pairs[:, :dx], pairs[:, dx:],
                   np.asarray(t), np.full(n, 0.5), {"r": np.asarray(y_out, dtype=np.float64)})


def _linear_fixture(n, seed, paired):
    """Noiseless Y = b0 + b.x + T (c0 + c.x) on 4 pair features."""
    rng = np.random.default_rng(seed)
    b, c = np.array([0.3, 1.0, -2.0, 0.5, 0.7]), np.array([0.4, -1.5, 0.25, 2.0, -0.6])
    if paired:
        base = rng.normal(size=(n // 2, 4))
        feats = np.vstack([base, base])
        t = np.repeat([1, 0], n // 2)
    else:
        feats = rng.normal(size=(n, 4))
        t = (rng.uniform(size=n) < 0.5).astype(int)
    design = np.hstack([np.ones((len(t), 1)), feats])
    return _dataset(feats, t, design @ b + t * (design @ c)), c


# Simple CT ----------------------------------------------------------------------


def test_simple_ct_zero_init_gives_half_and_uniform_weights(small_dataset):
    ds = small_dataset
    model = SimpleCtModel.zeros(ds.x.shape[1] + ds.y.shape[1])
    assert np.all(model.score(ds.x, ds.y) == 0.5)
    batch = Batch.from_dataset(ds, fit_constant(ds), 0.5)
    logw = model.log_weights(model.params, batch).value
    assert np.allclose(logw, logw[0])


@given(arrays(np.float64, 5, elements=st.floats(-3, 3)), st.floats(-20, 20))
def test_simple_ct_ranking_ignores_bias_shift(w, shift):
    ds = make_dataset(n=30, dx=3, dy=2, seed=4)
    a = SimpleCtModel(weights=w, bias=0.0).logit(ds.x, ds.y)
    b = SimpleCtModel(weights=w, bias=shift).logit(ds.x, ds.y)
    assert np.array_equal(np.argsort(a, kind="stable"), np.argsort(b - shift, kind="stable"))
    assert np.array_equal(np.argsort(a), np.argsort(b))
    s = SimpleCtModel(weights=w, bias=shift).score(ds.x, ds.y)
    assert np.all((s >= 0) & (s <= 1))


def _planted_splits(n, seed, **kw):
    ds, truth = generate_synthetic(SyntheticConfig(n_records=n, seed=seed, **kw))
    idx = split_indices(n, seed=seed)
    parts = [ds.subset(i) for i in idx]
    stats = fit_normalizer(parts[0])
    return [apply_normalizer(stats, p) for p in parts], truth.subset(idx[2])


def test_simple_ct_training_is_deterministic():
    (tr, va, _), _ = _planted_splits(2000, 0)
    cfg = TrainConfig(iterations=10, restarts=2, seed=5)
    a, ha = train_simple_ct(tr, va, EQ1, cfg)
    b, hb = train_simple_ct(tr, va, EQ1, cfg)
    assert np.array_equal(a.params, b.params)
    assert [h.val_loss for h in ha] == [h.val_loss for h in hb]


@pytest.fixture(scope="module")
def effect_without_match_or_intensity():
    """Uplift depends on the subject only; match and intensity play no role."""
    (tr, va, te), truth = _planted_splits(6000, 1, match_effect=False, intensity_effect=False)
    prop = fit_constant(tr)
    e = prop.for_dataset(te)
    cfg = TrainConfig(iterations=100, restarts=2, learning_rate=0.01, sharpness=1.0)
    ctpm, _ = train(tr, va, EQ1, cfg, prop)
    sct, _ = train_simple_ct(tr, va, EQ1, cfg, prop)
    scores = {"ctpm": ctpm.log_score(te.x, te.y, te.intensity), "sct": sct.log_score(te.x, te.y)}
    auc = {k: atetp_curve(v, te, EQ1, e).auc for k, v in scores.items()}
    null = [atetp_curve(RandomScorer(s).score(te.x), te, EQ1, e).auc for s in range(20)]
    rng = np.random.default_rng(0)
    diffs = []
    for _ in range(30):
        b = rng.integers(0, len(te), len(te))
        sub = te.subset(b)
        diffs.append(atetp_curve(scores["sct"][b], sub, EQ1, e[b]).auc - atetp_curve(scores["ctpm"][b], sub, EQ1, e[b]).auc)
    return auc, null, float(np.std(diffs))


def test_both_learned_scorers_beat_random_without_match_effect(effect_without_match_or_intensity):
    auc, null, _ = effect_without_match_or_intensity
    upper = np.mean(null) + 2 * np.std(null)
    assert auc["sct"] > upper and auc["ctpm"] > upper


@pytest.mark.xfail(strict=True, reason="Simple CT leads the matching model by about 5 bootstrap SD on subject-only "
                                       "uplift; see the decisions ledger")
def test_simple_ct_matches_ctpm_without_match_effect(effect_without_match_or_intensity):
    auc, _, sd = effect_without_match_or_intensity
    assert abs(auc["sct"] - auc["ctpm"]) <= 2 * sd


# R-learner ----------------------------------------------------------------------


def test_rlearner_recovers_effect_on_balanced_pairs():
    ds, c = _linear_fixture(400, 0, paired=True)
    fit = fit_rlearner(ds, "r")
    assert np.max(np.abs(fit.effect_coef - c)) < 1e-6


def test_rlearner_error_shrinks_with_sample_size_under_random_assignment():
    errs = []
    for n in (400, 40000):
        ds, c = _linear_fixture(n, 1, paired=False)
        errs.append(np.max(np.abs(fit_rlearner(ds, "r").effect_coef - c)))
    assert errs[1] < errs[0] / 3
    assert errs[1] < 0.05


def test_rlearner_zero_effect_within_resampling_band():
    rng = np.random.default_rng(3)
    n = 3000
    feats = rng.normal(size=(n, 4))
    t = (rng.uniform(size=n) < 0.5).astype(int)
    ds = _dataset(feats, t, feats @ np.array([1.0, -1.0, 0.5, 0.2]) + rng.normal(size=n))
    coef = fit_rlearner(ds, "r").effect_coef
    boots = []
    for _ in range(200):
        idx = rng.integers(0, n, n)
        boots.append(fit_rlearner(ds.subset(idx), "r").effect_coef)
    se = np.std(boots, axis=0)
    assert np.all(np.abs(coef) < 3 * se)


def test_rlearner_constant_outcome_has_no_effect():
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(50, 4))
    t = np.arange(50) % 2
    fit = fit_rlearner(_dataset(feats, t, np.full(50, 3.0)), "r")
    assert np.max(np.abs(fit.effect(feats))) < 1e-10


def test_rlearner_singular_design_uses_pseudo_inverse():
    rng = np.random.default_rng(0)
    col = rng.normal(size=(30, 1))
    base = np.hstack([col, col, rng.normal(size=(30, 2))])
    feats, t = np.vstack([base, base]), np.repeat([1, 0], 30)
    col = np.vstack([col, col])
    fit = fit_rlearner(_dataset(feats, t, 2.0 * t * col[:, 0]), "r")
    assert np.all(np.isfinite(fit.effect_coef))
    assert np.allclose(fit.effect(feats), 2.0 * col[:, 0], atol=1e-8)


def test_rlearner_requires_both_cohorts():
    feats = np.zeros((5, 4))
    with pytest.raises(DataError):
        fit_rlearner(_dataset(feats, np.ones(5, dtype=int), np.zeros(5)), "r")


def test_rlearner_model_fits_each_role(small_dataset):
    model = fit_rlearner_model(small_dataset, EQ1)
    assert set(model.effects) == {"q", "r", "c"}
    assert model.score(small_dataset.x, small_dataset.y).shape == (len(small_dataset),)


def _const_effect(v):
    return LinearEffect(outcome_coef=np.zeros(2), effect_coef=np.array([v, 0.0]))


def _const_model(spec, **vals):
    return RLearnerModel(spec=spec, effects={k: _const_effect(v) for k, v in vals.items()})


def test_rlearner_score_eq1_example():
    model = _const_model(ObjectiveSpec("eq1_maximize", lam=0.1), q=1.0, r=2.0, c=1.0)
    assert rlearner_score(model, np.zeros((1, 1)), np.zeros((1, 0)))[0] == pytest.approx(1.9)


def test_rlearner_score_all_zero():
    model = _const_model(EQ1, q=0.0, r=0.0, c=0.0)
    assert rlearner_score(model, np.zeros((3, 1)), np.zeros((3, 0))).tolist() == [0.0, 0.0, 0.0]


def test_rlearner_score_eq2_fixture():
    spec = ObjectiveSpec("eq2_minimize", lam=0.5)
    model = _const_model(spec, r=4.0, c=2.0, m=1.0)
    # -(2 / 4 + 0.5 * 1)
    assert rlearner_score(model, np.zeros((1, 1)), np.zeros((1, 0)))[0] == pytest.approx(-1.0)
    guarded = _const_model(spec, r=0.0, c=2e-6, m=0.0)
    assert rlearner_score(guarded, np.zeros((1, 1)), np.zeros((1, 0)))[0] == pytest.approx(-2.0)


def test_rlearner_score_respects_override_spec():
    model = _const_model(ObjectiveSpec("eq1_maximize", lam=0.1), q=1.0, r=2.0, c=1.0)
    out = rlearner_score(model, np.zeros((1, 1)), np.zeros((1, 0)), ObjectiveSpec("eq1_maximize", lam=1.0))
    assert out[0] == pytest.approx(1.0)


# random -------------------------------------------------------------------------


@given(st.integers(0, 2**31 - 1), st.integers(1, 200))
def test_random_scorer_is_seeded_and_in_unit_interval(seed, n):
    x = np.zeros((n, 2))
    a, b = RandomScorer(seed).score(x), RandomScorer(seed).score(x)
    assert np.array_equal(a, b)
    assert np.all((a >= 0) & (a < 1))


def test_random_scorers_differ_across_seeds():
    x = np.zeros((50, 2))
    assert not np.array_equal(RandomScorer(0).score(x), RandomScorer(1).score(x))
