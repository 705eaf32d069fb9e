import tempfile
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ctpm.dataset import (
    DataError,
    Dataset,
    SchemaError,
    SyntheticConfig,
    TableSchema,
    apply_normalizer,
    assign_treatment_by_median,
    fit_normalizer,
    generate_synthetic,
    load_table,
    planted_reward_effect,
    split,
    split_indices,
    write_table,
)

from conftest import make_dataset
from oracles import planted_optimum_by_grid

FIXTURE = """subject_id,candidate_id,x_age,x_spend,y_price,treatment,intensity,r,c
u1,k1,0.5,1.0,10.0,1,0.25,1.0,0.1
u2,k1,-0.5,2.0,10.0,0,0.0,0.0,0.0
u3,k2,1.5,0.0,20.0,1,1.0,1.0,0.3
u1,k2,0.5,1.0,20.0,0,0.75,0.0,0.2
"""

SCHEMA = TableSchema(["x_age", "x_spend"], ["y_price"], outcomes={"r": "r", "c": "c"})


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


# loading -------------------------------------------------------------------------


def test_four_row_fixture(tmp_path):
    ds = load_table(_write(tmp_path, FIXTURE), SCHEMA)
    assert len(ds) == 4
    assert ds.subject_ids.tolist() == ["u1", "u2", "u3", "u1"]
    assert ds.x.tolist() == [[0.5, 1.0], [-0.5, 2.0], [1.5, 0.0], [0.5, 1.0]]
    assert ds.y[:, 0].tolist() == [10.0, 10.0, 20.0, 20.0]
    assert ds.treatment.tolist() == [1, 0, 1, 0]
    assert ds.intensity.tolist() == [0.25, 0.0, 1.0, 0.75]
    assert ds.outcomes["c"].tolist() == [0.1, 0.0, 0.3, 0.2]
    rec = ds[2]
    assert rec.candidate_id == "k2" and rec.outcomes == {"r": 1.0, "c": 0.3}


def test_missing_treatment_column_is_named(tmp_path):
    text = "\n".join(",".join(c for i, c in enumerate(line.split(",")) if i != 5) for line in FIXTURE.splitlines())
    with pytest.raises(SchemaError, match="treatment"):
        load_table(_write(tmp_path, text), SCHEMA)


def test_discount_schema_maps_intensity(tmp_path):
    text = (
        "session,coupon,user_age,user_female,coupon_price,discount,purchase,spend\n"
        "a,c1,0.3,1,0.2,0.45,1,0.2\n"
        "b,c2,0.7,0,0.9,0.10,0,0.0\n"
        "c,c1,0.1,1,0.2,0.80,1,0.5\n"
    )
    schema = TableSchema.from_dict({
        "subject_id": "session", "candidate_id": "coupon",
        "subject_features": ["user_age", "user_female"], "candidate_features": ["coupon_price"],
        "intensity": "discount", "treatment": None, "outcomes": {"r": "purchase", "c": "spend"},
    })
    ds = load_table(_write(tmp_path, text), schema)
    assert ds.intensity.tolist() == [0.45, 0.10, 0.80]
    # no cohort column: T = intensity > median
    assert ds.treatment.tolist() == [0, 0, 1]


@pytest.mark.parametrize("bad, message", [
    ("u1,k1,0.5,abc,10.0,1,0.25,1.0,0.1", "row 1: column 'x_spend'"),
    ("u1,k1,0.5,1.0,10.0,1,1.5,1.0,0.1", "row 1: intensity"),
    ("u1,k1,0.5,1.0,10.0,2,0.5,1.0,0.1", "row 1: treatment"),
    ("u1,k1,0.5,1.0,10.0,1,0.5,1.0", "row 1: expected 9 fields"),
    ("u1,k1,0.5,nan,10.0,1,0.5,1.0,0.1", "non-finite"),
])
def test_bad_rows_are_reported_with_row_numbers(tmp_path, bad, message):
    header = FIXTURE.splitlines()[0]
    with pytest.raises(DataError, match=message):
        load_table(_write(tmp_path, header + "\n" + bad + "\n"), SCHEMA)


def test_intensity_slack_is_clamped(tmp_path):
    header = FIXTURE.splitlines()[0]
    rows = ["u1,k1,0,0,0,1,1.0000000005,1,0", "u2,k1,0,0,0,0,-5e-10,0,0"]
    ds = load_table(_write(tmp_path, "\n".join([header] + rows) + "\n"), SCHEMA)
    assert ds.intensity.tolist() == [1.0, 0.0]


def test_empty_inputs(tmp_path):
    with pytest.raises(DataError, match="empty"):
        load_table(_write(tmp_path, ""), SCHEMA)
    with pytest.raises(DataError, match="no data rows"):
        load_table(_write(tmp_path, FIXTURE.splitlines()[0] + "\n"), SCHEMA)


def test_unknown_schema_key():
    with pytest.raises(SchemaError):
        TableSchema.from_dict({"subject_features": [], "candidate_features": [], "outcomes": {}, "colour": 1})


def test_seeded_shuffle_at_load(tmp_path):
    path = _write(tmp_path, FIXTURE)
    a, b = load_table(path, SCHEMA, seed=3), load_table(path, SCHEMA, seed=3)
    assert a.subject_ids.tolist() == b.subject_ids.tolist()
    assert sorted(a.intensity.tolist()) == sorted(load_table(path, SCHEMA).intensity.tolist())


@given(st.integers(2, 30), st.integers(0, 1000))
def test_write_then_load_round_trip(n, seed):
    ds = make_dataset(n=n, seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        back = load_table(write_table(ds, Path(tmp) / "ds.csv"), TableSchema.for_dataset(ds))
    assert back.subject_ids.tolist() == ds.subject_ids.tolist()
    assert np.array_equal(back.x, ds.x) and np.array_equal(back.y, ds.y)
    assert np.array_equal(back.intensity, ds.intensity)
    assert np.array_equal(back.treatment, ds.treatment)
    for k in ds.outcomes:
        assert np.array_equal(back.outcomes[k], ds.outcomes[k])


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(["a"], ["b"], [[0.0]], [[0.0]], [2], [0.5], {})
    with pytest.raises(DataError):
        Dataset(["a"], ["b"], [[0.0]], [[0.0]], [1], [1.5], {})
    with pytest.raises(DataError):
        Dataset(["a"], ["b"], [[np.inf]], [[0.0]], [1], [0.5], {})
    with pytest.raises(DataError):
        Dataset(["a", "b"], ["b", "c"], [[0.0]], [[0.0], [1.0]], [1, 0], [0.5, 0.5], {})


# splitting -----------------------------------------------------------------------


@pytest.mark.parametrize("n, sizes", [(100, (60, 20, 20)), (5, (3, 1, 1)), (7, (5, 1, 1))])
def test_split_sizes(n, sizes):
    assert tuple(len(p) for p in split_indices(n, (0.6, 0.2, 0.2), seed=0)) == sizes


def test_split_rejects_bad_ratios():
    with pytest.raises(ValueError):
        split_indices(10, (0.5, 0.2, 0.2))
    with pytest.raises(ValueError):
        split_indices(10, (0.8, 0.3, -0.1))


@given(st.integers(1, 300), st.integers(0, 10_000))
def test_split_is_a_disjoint_cover(n, seed):
    parts = split_indices(n, (0.6, 0.2, 0.2), seed)
    merged = np.concatenate(parts)
    assert sorted(merged.tolist()) == list(range(n))
    assert [p.tolist() for p in split_indices(n, (0.6, 0.2, 0.2), seed)] == [p.tolist() for p in parts]


def test_split_datasets_preserve_records():
    ds = make_dataset(n=50)
    parts = split(ds, seed=1)
    ids = Counter(i for p in parts for i in p.subject_ids.tolist())
    assert ids == Counter(ds.subject_ids.tolist())


# normalization -------------------------------------------------------------------


def test_normalizer_examples():
    train = Dataset(["a", "b"], ["c", "d"], [[1.0, 5.0], [3.0, 5.0]], [[0.0], [2.0]], [1, 0], [0.1, 0.2], {})
    stats = fit_normalizer(train)
    test = Dataset(["e"], ["f"], [[3.0, 9.0]], [[1.0]], [1], [0.3], {})
    out = apply_normalizer(stats, test)
    assert out.x[0, 0] == 1.0  # mean 2, std 1
    assert out.x[0, 1] == 0.0  # constant column
    assert out.y[0, 0] == 0.0
    assert out.normalization_stats is stats


def test_normalizer_uses_train_statistics_only():
    train, test = make_dataset(n=30, seed=1), make_dataset(n=20, seed=2)
    stats = fit_normalizer(train)
    mean = [sum(r[j] for r in train.x.tolist()) / len(train) for j in range(train.x.shape[1])]
    std = [(sum((r[j] - mean[j]) ** 2 for r in train.x.tolist()) / len(train)) ** 0.5 for j in range(train.x.shape[1])]
    assert np.allclose(stats.x_mean, mean) and np.allclose(stats.x_std, std)
    expected = [[(v - m) / s for v, m, s in zip(row, mean, std)] for row in test.x.tolist()]
    assert np.allclose(apply_normalizer(stats, test).x, expected)


def test_normalizer_rejects_empty():
    with pytest.raises(DataError):
        fit_normalizer(make_dataset(n=10).subset([]))


def test_median_treatment_uses_train_median():
    a = make_dataset(n=11, seed=0)
    b = make_dataset(n=5, seed=1)
    ta, tb = assign_treatment_by_median(a, b)
    med = sorted(a.intensity.tolist())[5]
    assert ta.treatment.tolist() == [int(p > med) for p in a.intensity]
    assert tb.treatment.tolist() == [int(p > med) for p in b.intensity]


# synthetic data ------------------------------------------------------------------


def test_synthetic_is_deterministic():
    cfg = SyntheticConfig(n_records=500, n_subjects=50, n_candidates=20, seed=4)
    (a, ta), (b, tb) = generate_synthetic(cfg), generate_synthetic(cfg)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.outcomes["r"], b.outcomes["r"])
    assert np.array_equal(ta.optimal_intensity, tb.optimal_intensity)


def test_synthetic_sizes_and_rate():
    ds, truth = generate_synthetic(SyntheticConfig(n_records=10000, treatment_rate=0.4, seed=1))
    assert len(ds) == 10000 and len(truth.optimal_intensity) == 10000
    assert abs(ds.treatment.mean() - 0.4) <= 0.02


def test_synthetic_rejects_bad_config():
    with pytest.raises(ValueError):
        SyntheticConfig(n_records=0)
    with pytest.raises(ValueError):
        SyntheticConfig(subject_dim=4)


def test_noiseless_uplift_is_the_planted_effect():
    cfg = SyntheticConfig(n_records=2000, n_subjects=200, n_candidates=40, noise=0.0, seed=2)
    ds, truth = generate_synthetic(cfg)
    L = cfg.latent_dim
    base_r = 1.0 + 0.2 * ds.x[:, L] + 0.1 * ds.y[:, 0]
    assert np.allclose(ds.outcomes["r"] - base_r, ds.treatment * truth.effects["r"], atol=1e-12)
    # the uplift as a function of intensity peaks at the planted optimum
    grid = np.linspace(0, 1, 201)
    for i in range(0, 2000, 97):
        curve = planted_reward_effect(grid, truth.responsiveness[i], truth.affinity[i],
                                      truth.optimal_intensity[i], cfg.bell_width)
        at_opt = planted_reward_effect(truth.optimal_intensity[i], truth.responsiveness[i], truth.affinity[i],
                                       truth.optimal_intensity[i], cfg.bell_width)
        assert at_opt >= curve.max() - 1e-15


def test_ground_truth_optimum_matches_grid_sweep():
    cfg = SyntheticConfig(n_records=3000, seed=5)
    _, truth = generate_synthetic(cfg)
    swept = planted_optimum_by_grid(truth.responsiveness, truth.affinity, truth.optimal_intensity, cfg.bell_width)
    assert np.max(np.abs(swept - truth.optimal_intensity)) <= 0.01 / 2 + 1e-12
    assert np.all((truth.optimal_intensity > 0) & (truth.optimal_intensity < 1))


def test_truth_subset_follows_records():
    ds, truth = generate_synthetic(SyntheticConfig(n_records=300, n_subjects=30, n_candidates=10))
    idx = np.array([5, 2, 100])
    sub = truth.subset(idx)
    assert np.array_equal(sub.optimal_intensity, truth.optimal_intensity[idx])
    assert np.array_equal(sub.effects["c"], truth.effects["c"][idx])
