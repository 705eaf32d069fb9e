"""Match records, tabular ingestion, splitting, normalization, synthetic data.

A dataset is a column store: one row per treatment session (a subject matched
with a candidate), subject features ``x``, candidate features ``y``, the
treatment-cohort indicator, the continuous treatment intensity in [0, 1] and
any number of named outcome columns.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

INTENSITY_SLACK = 1e-9


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class SchemaError(DataError):
    """The table header does not match the schema descriptor."""


@dataclass(frozen=True)
class MatchRecord:
    subject_id: str
    candidate_id: str
    x: np.ndarray
    y: np.ndarray
    treatment: int
    intensity: float
    outcomes: Mapping[str, float]


@dataclass(frozen=True)
class NormalizationStats:
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: np.ndarray
    y_std: np.ndarray

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("x_mean", "x_std", "y_mean", "y_std")}

    @classmethod
    def from_dict(cls, data: dict) -> "NormalizationStats":
        return cls(**{k: np.asarray(data[k], dtype=np.float64) for k in ("x_mean", "x_std", "y_mean", "y_std")})


def _as_index(index) -> np.ndarray:
    index = np.asarray(index)
    return index if index.dtype == bool else index.astype(np.intp)


@dataclass
class Dataset:
    """Column-oriented collection of match records.

    Instances are treated as immutable; every transformation returns a new
    dataset.
    """

    subject_ids: np.ndarray
    candidate_ids: np.ndarray
    x: np.ndarray
    y: np.ndarray
    treatment: np.ndarray
    intensity: np.ndarray
    outcomes: Dict[str, np.ndarray]
    subject_features: List[str] = field(default_factory=list)
    candidate_features: List[str] = field(default_factory=list)
    normalization_stats: Optional[NormalizationStats] = None

    def __post_init__(self):
        self.subject_ids = np.asarray(self.subject_ids).astype(str)
        self.candidate_ids = np.asarray(self.candidate_ids).astype(str)
        self.x = np.atleast_2d(np.asarray(self.x, dtype=np.float64))
        self.y = np.atleast_2d(np.asarray(self.y, dtype=np.float64))
        self.treatment = np.asarray(self.treatment, dtype=np.int64)
        self.intensity = np.asarray(self.intensity, dtype=np.float64)
        self.outcomes = {k: np.asarray(v, dtype=np.float64) for k, v in self.outcomes.items()}
        n = len(self.treatment)
        for name, arr in [("x", self.x), ("y", self.y), ("intensity", self.intensity)] + [
            (f"outcome {k}", v) for k, v in self.outcomes.items()
        ]:
            if len(arr) != n:
                raise DataError(f"{name} has {len(arr)} rows, expected {n}")
        if not self.subject_features:
            self.subject_features = [f"x{i}" for i in range(self.x.shape[1])]
        if not self.candidate_features:
            self.candidate_features = [f"y{i}" for i in range(self.y.shape[1])]
        if not np.all(np.isin(self.treatment, (0, 1))):
            raise DataError("treatment must be 0 or 1")
        if np.any((self.intensity < 0) | (self.intensity > 1)):
            raise DataError("intensity must lie in [0, 1]")
        for name, arr in [("x", self.x), ("y", self.y)] + list(self.outcomes.items()):
            if not np.all(np.isfinite(arr)):
                raise DataError(f"non-finite values in {name}")

    def __len__(self) -> int:
        return len(self.treatment)

    def __getitem__(self, i: int) -> MatchRecord:
        return MatchRecord(
            subject_id=str(self.subject_ids[i]),
            candidate_id=str(self.candidate_ids[i]),
            x=self.x[i].copy(),
            y=self.y[i].copy(),
            treatment=int(self.treatment[i]),
            intensity=float(self.intensity[i]),
            outcomes={k: float(v[i]) for k, v in self.outcomes.items()},
        )

    @property
    def records(self) -> List[MatchRecord]:
        return [self[i] for i in range(len(self))]

    @property
    def pairs(self) -> np.ndarray:
        """Concatenated ``[x, y]`` feature matrix."""
        return np.hstack([self.x, self.y])

    def subset(self, index) -> "Dataset":
        index = _as_index(index)
        return replace(
            self,
            subject_ids=self.subject_ids[index],
            candidate_ids=self.candidate_ids[index],
            x=self.x[index],
            y=self.y[index],
            treatment=self.treatment[index],
            intensity=self.intensity[index],
            outcomes={k: v[index] for k, v in self.outcomes.items()},
        )

    def require_outcomes(self, names) -> None:
        missing = [n for n in names if n not in self.outcomes]
        if missing:
            raise DataError(f"dataset lacks outcome dimension(s) {missing}")

    def has_both_cohorts(self) -> bool:
        return bool(np.any(self.treatment == 1) and np.any(self.treatment == 0))

    @classmethod
    def from_records(cls, records: Sequence[MatchRecord], **kwargs) -> "Dataset":
        if not records:
            raise DataError("no records")
        names = list(records[0].outcomes)
        return cls(
            subject_ids=[r.subject_id for r in records],
            candidate_ids=[r.candidate_id for r in records],
            x=np.vstack([r.x for r in records]),
            y=np.vstack([r.y for r in records]),
            treatment=[r.treatment for r in records],
            intensity=[r.intensity for r in records],
            outcomes={k: [r.outcomes[k] for r in records] for k in names},
            **kwargs,
        )


# ---------------------------------------------------------------------------
# tabular files


@dataclass
class TableSchema:
    """Column names of a delimiter-separated match table.

    ``treatment=None`` means the table has no cohort column and the
    indicator is derived as ``intensity > median(intensity)``; see
    :func:`assign_treatment_by_median`.
    """

    subject_features: List[str]
    candidate_features: List[str]
    outcomes: Dict[str, str]
    intensity: str = "intensity"
    treatment: Optional[str] = "treatment"
    subject_id: str = "subject_id"
    candidate_id: str = "candidate_id"
    delimiter: str = ","

    @classmethod
    def from_dict(cls, data: Mapping) -> "TableSchema":
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise SchemaError(f"unknown schema keys {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def for_dataset(cls, dataset: Dataset) -> "TableSchema":
        return cls(
            subject_features=list(dataset.subject_features),
            candidate_features=list(dataset.candidate_features),
            outcomes={k: k for k in dataset.outcomes},
        )

    def columns(self) -> List[str]:
        cols = [self.subject_id, self.candidate_id, *self.subject_features, *self.candidate_features]
        if self.treatment is not None:
            cols.append(self.treatment)
        cols.append(self.intensity)
        cols.extend(self.outcomes.values())
        return cols


def _parse_float(text: str, column: str, row: int) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"row {row}: column {column!r}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise DataError(f"row {row}: column {column!r}: non-finite value {text!r}")
    return value


def load_table(path, schema: TableSchema, seed: Optional[int] = None) -> Dataset:
    """Read a delimiter-separated match table.

    Rows are validated individually and errors carry the 1-based data row
    number (the header is row 0).  Intensities within 1e-9 of [0, 1] are
    clamped; anything further out is an error.  With ``seed`` the row order
    is shuffled once.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        position = {name: i for i, name in enumerate(header)}
        for role, col in [("subject_id", schema.subject_id), ("candidate_id", schema.candidate_id),
                          ("treatment", schema.treatment), ("intensity", schema.intensity)]:
            if col is not None and col not in position:
                raise SchemaError(f"{path}: missing {role} column {col!r}")
        for col in schema.subject_features + schema.candidate_features:
            if col not in position:
                raise SchemaError(f"{path}: missing feature column {col!r}")
        for dim, col in schema.outcomes.items():
            if col not in position:
                raise SchemaError(f"{path}: missing outcome column {col!r} for dimension {dim!r}")

        sids, cids, xs, ys, ts, ps = [], [], [], [], [], []
        outs = {dim: [] for dim in schema.outcomes}
        for row_no, row in enumerate(reader, start=1):
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(f"row {row_no}: expected {len(header)} fields, found {len(row)}")
            sids.append(row[position[schema.subject_id]])
            cids.append(row[position[schema.candidate_id]])
            xs.append([_parse_float(row[position[c]], c, row_no) for c in schema.subject_features])
            ys.append([_parse_float(row[position[c]], c, row_no) for c in schema.candidate_features])
            if schema.treatment is not None:
                t = _parse_float(row[position[schema.treatment]], schema.treatment, row_no)
                if t not in (0.0, 1.0):
                    raise DataError(f"row {row_no}: treatment must be 0 or 1, found {t}")
                ts.append(int(t))
            p = _parse_float(row[position[schema.intensity]], schema.intensity, row_no)
            if p < 0.0 or p > 1.0:
                if -INTENSITY_SLACK <= p <= 1.0 + INTENSITY_SLACK:
                    p = min(max(p, 0.0), 1.0)
                else:
                    raise DataError(f"row {row_no}: intensity {p} outside [0, 1]")
            ps.append(p)
            for dim, col in schema.outcomes.items():
                outs[dim].append(_parse_float(row[position[col]], col, row_no))
    if not ps:
        raise DataError(f"{path}: no data rows")

    intensity = np.asarray(ps)
    treatment = np.asarray(ts) if schema.treatment is not None else median_treatment(intensity, intensity)
    ds = Dataset(
        subject_ids=sids,
        candidate_ids=cids,
        x=np.asarray(xs, dtype=np.float64).reshape(len(ps), -1),
        y=np.asarray(ys, dtype=np.float64).reshape(len(ps), -1),
        treatment=treatment,
        intensity=intensity,
        outcomes=outs,
        subject_features=list(schema.subject_features),
        candidate_features=list(schema.candidate_features),
    )
    if seed is not None:
        ds = ds.subset(np.random.default_rng(seed).permutation(len(ds)))
    return ds


def write_table(dataset: Dataset, path, schema: Optional[TableSchema] = None) -> Path:
    """Write ``dataset`` so that :func:`load_table` reads it back exactly."""
    schema = schema or TableSchema.for_dataset(dataset)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter, lineterminator="\n")
        writer.writerow(schema.columns())
        for i in range(len(dataset)):
            row = [dataset.subject_ids[i], dataset.candidate_ids[i]]
            row += [repr(float(v)) for v in dataset.x[i]]
            row += [repr(float(v)) for v in dataset.y[i]]
            if schema.treatment is not None:
                row.append(str(int(dataset.treatment[i])))
            row.append(repr(float(dataset.intensity[i])))
            row += [repr(float(dataset.outcomes[dim][i])) for dim in schema.outcomes]
            writer.writerow(row)
    return path


def median_treatment(intensity: np.ndarray, reference: np.ndarray) -> np.ndarray:
    return (np.asarray(intensity) > np.median(reference)).astype(np.int64)


def assign_treatment_by_median(train: Dataset, *others: Dataset) -> Tuple[Dataset, ...]:
    """Set ``T = intensity > median`` using the training split's median for every split."""
    ref = train.intensity
    return tuple(replace(ds, treatment=median_treatment(ds.intensity, ref)) for ds in (train, *others))


# ---------------------------------------------------------------------------
# splitting and normalization


def split_indices(n: int, ratios=(0.6, 0.2, 0.2), seed: int = 0):
    """Row indices of train / validation / test for a dataset of ``n`` rows.

    Validation and test get ``floor(ratio * n)`` rows; the remainder goes to
    train.
    """
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or min(ratios) <= 0:
        raise ValueError("need three positive split ratios")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"split ratios sum to {sum(ratios)}, not 1")
    n_val = int(math.floor(ratios[1] * n + 1e-9))
    n_test = int(math.floor(ratios[2] * n + 1e-9))
    n_train = n - n_val - n_test
    order = np.random.default_rng(seed).permutation(n)
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


def split(dataset: Dataset, ratios=(0.6, 0.2, 0.2), seed: int = 0):
    """Shuffle and cut into train / validation / test (see :func:`split_indices`)."""
    return tuple(dataset.subset(idx) for idx in split_indices(len(dataset), ratios, seed))


def fit_normalizer(train: Dataset) -> NormalizationStats:
    if len(train) == 0:
        raise DataError("cannot fit a normalizer on an empty dataset")
    return NormalizationStats(train.x.mean(0), train.x.std(0), train.y.mean(0), train.y.std(0))


def _zscore(values: np.ndarray, mean: np.ndarray, std: np.ndarray) -> np.ndarray:
    safe = np.where(std > 0, std, 1.0)
    return np.where(std > 0, (values - mean) / safe, 0.0)


def apply_normalizer(stats: NormalizationStats, dataset: Dataset) -> Dataset:
    return replace(
        dataset,
        x=_zscore(dataset.x, stats.x_mean, stats.x_std),
        y=_zscore(dataset.y, stats.y_mean, stats.y_std),
        normalization_stats=stats,
    )


# ---------------------------------------------------------------------------
# synthetic data with planted effects


@dataclass
class SyntheticConfig:
    """Sizes and knobs of the planted data-generating process.

    Subject features are ``[latent (latent_dim), responsiveness,
    engagement, intensity driver, noise...]``; candidate features are
    ``[latent (latent_dim), intensity driver, noise...]``.
    """

    n_records: int = 20000
    n_subjects: int = 2000
    n_candidates: int = 200
    subject_dim: int = 7
    candidate_dim: int = 5
    latent_dim: int = 3
    noise: float = 0.3
    treatment_rate: float = 0.5
    effect_scale: float = 1.0
    bell_width: float = 0.2
    engagement_offset: float = 0.5
    # switch off the match or the intensity dependence of the reward uplift
    match_effect: bool = True
    intensity_effect: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("n_records", "n_subjects", "n_candidates"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.subject_dim < self.latent_dim + 4 or self.candidate_dim < self.latent_dim + 2:
            raise ValueError("feature dims too small for the planted structure")
        if not 0.0 < self.treatment_rate < 1.0:
            raise ValueError("treatment_rate must be in (0, 1)")


@dataclass
class SyntheticGroundTruth:
    """Planted quantities per record.

    ``effects`` holds the expected treatment effect of each outcome dimension
    at the record's observed intensity.
    """

    optimal_intensity: np.ndarray
    affinity: np.ndarray
    responsiveness: np.ndarray
    effects: Dict[str, np.ndarray]
    params: Dict[str, float]

    def subset(self, index) -> "SyntheticGroundTruth":
        index = _as_index(index)
        return replace(
            self,
            optimal_intensity=self.optimal_intensity[index],
            affinity=self.affinity[index],
            responsiveness=self.responsiveness[index],
            effects={k: v[index] for k, v in self.effects.items()},
        )


def bell(intensity, optimum, width: float):
    return np.exp(-0.5 * ((np.asarray(intensity) - optimum) / width) ** 2)


def planted_reward_effect(intensity, responsiveness, affinity, optimum, width, scale=1.0,
                          match_effect=True, intensity_effect=True):
    """Expected reward uplift of a treated session at ``intensity``."""
    match = ((1.0 + affinity) / 2.0) ** 2 if match_effect else 1.0
    shape = bell(intensity, optimum, width) if intensity_effect else 1.0
    return scale * 3.0 * responsiveness * match * shape


def planted_cost_effect(intensity, scale=1.0):
    return scale * 0.5 * np.asarray(intensity)


def generate_synthetic(config: SyntheticConfig) -> Tuple[Dataset, SyntheticGroundTruth]:
    """Draw sessions from a pool of subjects and candidates with planted effects.

    * match affinity is the cosine of latent subject / candidate factors;
    * reward (``r``) uplift is ``3 * rho * ((1 + affinity) / 2)**2 *
      bell(P - P*)`` with responsiveness ``rho = sigmoid(2 * x_resp)`` and
      ``P* = sigmoid(1.5 * (x_drv + y_drv) / sqrt(2))``;
    * cost (``c``) uplift is ``0.5 * P``;
    * engagement (``q``) uplift ``offset + tanh(2 * x_eng)`` changes sign across
      subjects;
    * ``m`` uplift is a small positive subject/candidate distance term.

    Intensity is uniform on [0, 1] and treatment is Bernoulli(treatment_rate),
    both independent of the features.
    """
    c = config
    rng = np.random.default_rng(c.seed)
    L = c.latent_dim
    xs = rng.standard_normal((c.n_subjects, c.subject_dim))
    ys = rng.standard_normal((c.n_candidates, c.candidate_dim))
    si = rng.integers(0, c.n_subjects, size=c.n_records)
    cj = rng.integers(0, c.n_candidates, size=c.n_records)
    x, y = xs[si], ys[cj]

    u, v = x[:, :L], y[:, :L]
    affinity = np.sum(u * v, axis=1) / (np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
    responsiveness = expit(2.0 * x[:, L])
    engagement = x[:, L + 1]
    p_star = expit(1.5 * (x[:, L + 2] + y[:, L]) / np.sqrt(2.0))

    intensity = rng.uniform(0.0, 1.0, size=c.n_records)
    treatment = (rng.uniform(size=c.n_records) < c.treatment_rate).astype(np.int64)
    eps = rng.standard_normal((4, c.n_records)) * c.noise

    s = c.effect_scale
    effects = {
        "q": s * (c.engagement_offset + np.tanh(2.0 * engagement)),
        "r": planted_reward_effect(intensity, responsiveness, affinity, p_star, c.bell_width, s,
                                   c.match_effect, c.intensity_effect),
        "c": planted_cost_effect(intensity, s),
        "m": s * (0.2 + 0.1 * np.abs(x[:, -1] - y[:, -1])),
    }
    base = {
        "q": 1.0 + 0.1 * x[:, 0],
        "r": 1.0 + 0.2 * x[:, L] + 0.1 * y[:, 0],
        "c": 0.5 + 0.1 * x[:, L],
        "m": 0.5 + 0.05 * y[:, 1],
    }
    outcomes = {name: base[name] + treatment * effects[name] + eps[k] for k, name in enumerate(("q", "r", "c", "m"))}

    ds = Dataset(
        subject_ids=[f"s{i}" for i in si],
        candidate_ids=[f"c{j}" for j in cj],
        x=x,
        y=y,
        treatment=treatment,
        intensity=intensity,
        outcomes=outcomes,
        subject_features=[f"x{i}" for i in range(c.subject_dim)],
        candidate_features=[f"y{i}" for i in range(c.candidate_dim)],
    )
    truth = SyntheticGroundTruth(
        optimal_intensity=p_star,
        affinity=affinity,
        responsiveness=responsiveness,
        effects=effects,
        params={
            "bell_width": c.bell_width,
            "effect_scale": s,
            "engagement_offset": c.engagement_offset,
            "match_effect": c.match_effect,
            "intensity_effect": c.intensity_effect,
        },
    )
    return ds, truth


def write_ground_truth(truth: SyntheticGroundTruth, path) -> Path:
    path = Path(path)
    names = sorted(truth.effects)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["index", "optimal_intensity", "affinity", "responsiveness"] + [f"effect_{k}" for k in names])
        for i in range(len(truth.optimal_intensity)):
            writer.writerow(
                [i, repr(float(truth.optimal_intensity[i])), repr(float(truth.affinity[i])),
                 repr(float(truth.responsiveness[i]))]
                + [repr(float(truth.effects[k][i])) for k in names]
            )
    return path
