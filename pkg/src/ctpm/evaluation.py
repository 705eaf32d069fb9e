"""Score-ranked uplift evaluation: ATETP / a-AUC and cost curve / c-AUC.

Records are ranked by score (descending) after a seeded shuffle, so ties are
broken reproducibly and the AUCs depend on the ranking only.  Treatment
effects on a selection are inverse-propensity weighted differences of cohort
means (each cohort's weights normalized to sum to one).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Mapping

import numpy as np

from .dataset import DataError, Dataset
from .model.objective import ObjectiveSpec, metric_from_arrays

DEFAULT_GRID_STEP = 0.05


class EvaluationError(ValueError):
    """A curve could not be normalized or has no valid point."""


@dataclass
class EvaluationCurve:
    points: np.ndarray
    auc: float
    kind: str

    @property
    def x(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def y(self) -> np.ndarray:
        return self.points[:, 1]

    def columns(self):
        return ("coverage", "metric") if self.kind == "atetp" else ("cost", "reward")

    def write_tsv(self, path) -> Path:
        path = Path(path)
        lines = ["\t".join(self.columns())]
        lines += [f"{a!r}\t{b!r}" for a, b in self.points.tolist()]
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return path

    @classmethod
    def read_tsv(cls, path, kind: str) -> "EvaluationCurve":
        rows = Path(path).read_text(encoding="utf-8").splitlines()[1:]
        pts = np.array([[float(v) for v in r.split("\t")] for r in rows if r])
        return cls(points=pts, auc=trapezoid(pts[:, 0], pts[:, 1]), kind=kind)

    def write_svg(self, path, title: str = "") -> Path:
        path = Path(path)
        path.write_text(render_svg({title or self.kind: self}), encoding="utf-8")
        return path


def trapezoid(x, y) -> float:
    x, y = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    if len(x) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


def rank_order(scores, seed: int = 0) -> np.ndarray:
    """Indices from best to worst score; ties follow a seeded shuffle."""
    scores = np.asarray(scores, dtype=np.float64)
    shuffle = np.random.default_rng(seed).permutation(len(scores))
    return shuffle[np.argsort(-scores[shuffle], kind="stable")]


def _cohort_parts(outcome, treatment, propensity):
    t = np.asarray(treatment) == 1
    y = np.asarray(outcome, dtype=np.float64)
    e = np.asarray(propensity, dtype=np.float64)
    w1 = np.where(t, 1.0 / e, 0.0)
    w0 = np.where(t, 0.0, 1.0 / (1.0 - e))
    return w1 * y, w1, w0 * y, w0


def subset_ate(outcome, treatment, propensity, selection=None) -> float:
    """IPW difference of cohort means on ``selection`` (all records when None)."""
    if selection is not None:
        sel = np.asarray(selection)
        outcome, treatment, propensity = (np.asarray(a)[sel] for a in (outcome, treatment, propensity))
    a1, b1, a0, b0 = (p.sum() for p in _cohort_parts(outcome, treatment, propensity))
    if b1 == 0 or b0 == 0:
        raise DataError("selection must contain both treated and control records")
    return float(a1 / b1 - a0 / b0)


def prefix_ates(order, outcome, treatment, propensity):
    """ATE of every top-k prefix along ``order``; NaN where a cohort is missing."""
    parts = [np.cumsum(p[order]) for p in _cohort_parts(outcome, treatment, propensity)]
    a1, b1, a0, b0 = parts
    with np.errstate(invalid="ignore", divide="ignore"):
        out = a1 / b1 - a0 / b0
    out[(b1 == 0) | (b0 == 0)] = np.nan
    return out


def coverage_grid(step: float = DEFAULT_GRID_STEP) -> np.ndarray:
    if not 0 < step <= 1:
        raise ValueError("grid step must be in (0, 1]")
    n = int(round(1.0 / step))
    grid = np.arange(1, n + 1) * step
    grid[-1] = 1.0
    return grid[grid <= 1.0 + 1e-12]


def atetp_curve(scores, dataset: Dataset, spec: ObjectiveSpec, propensity, grid=None, seed: int = 0) -> EvaluationCurve:
    """Composite metric of the top ``ceil(rho * N)`` records against coverage rho.

    Coverages whose selection lacks a cohort are skipped.  The a-AUC is the
    trapezoid area over the remaining points.
    """
    grid = coverage_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    n = len(dataset)
    order = rank_order(scores, seed)
    ks = np.array([max(1, math.ceil(rho * n - 1e-9)) for rho in grid])
    effects = {
        role: prefix_ates(order, dataset.outcomes[spec.outcome(role)], dataset.treatment, propensity)[ks - 1]
        for role in spec.roles
    }
    metric = metric_from_arrays(spec, effects)
    keep = np.isfinite(metric)
    if not np.any(keep):
        raise EvaluationError("no coverage level contains both cohorts")
    pts = np.column_stack([grid[keep], metric[keep]])
    return EvaluationCurve(points=pts, auc=trapezoid(pts[:, 0], pts[:, 1]), kind="atetp")


def cost_curve(scores, dataset: Dataset, reward: str, cost: str, propensity, seed: int = 0,
               tol: float = 1e-12) -> EvaluationCurve:
    """Cumulative reward effect against cumulative cost effect, by rank.

    The cumulative effect of the top-k records is ``k * ATE(top k)``; both axes
    are divided by the full-coverage value so the curve runs from (0, 0) to
    (1, 1) and a random ranking follows the diagonal.
    """
    n = len(dataset)
    order = rank_order(scores, seed)
    ks = np.arange(1, n + 1)
    cum = {}
    for name in (reward, cost):
        ate = prefix_ates(order, dataset.outcomes[name], dataset.treatment, propensity)
        if not np.isfinite(ate[-1]) or abs(ate[-1]) < tol:
            raise EvaluationError(f"full-coverage effect on {name!r} is ~0; cost curve undefined")
        cum[name] = ks * ate / (n * ate[-1])
    keep = np.isfinite(cum[reward]) & np.isfinite(cum[cost])
    pts = np.vstack([[0.0, 0.0], np.column_stack([cum[cost][keep], cum[reward][keep]])])
    return EvaluationCurve(points=pts, auc=trapezoid(pts[:, 0], pts[:, 1]), kind="cost")


# ---------------------------------------------------------------------------
# reports


@dataclass
class ModelResult:
    name: str
    atetp: EvaluationCurve
    cost: EvaluationCurve

    @property
    def a_auc(self) -> float:
        return self.atetp.auc

    @property
    def c_auc(self) -> float:
        return self.cost.auc


@dataclass
class Report:
    spec: ObjectiveSpec
    results: List[ModelResult] = field(default_factory=list)

    def rows(self):
        return [(r.name, r.a_auc, r.c_auc) for r in self.results]

    def __getitem__(self, name: str) -> ModelResult:
        for r in self.results:
            if r.name == name:
                return r
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "objective": self.spec.to_dict(),
            "orientation": "higher is better; eq2 metrics are negated",
            "rows": [{"model": n, "a_auc": a, "c_auc": c} for n, a, c in self.rows()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def rows_from_json(cls, text: str):
        data = json.loads(text)
        return [(r["model"], r["a_auc"], r["c_auc"]) for r in data["rows"]]

    def to_text(self) -> str:
        width = max([5] + [len(n) for n, _, _ in self.rows()])
        lines = [f"{'model':<{width}}  {'a-AUC':>12}  {'c-AUC':>8}"]
        lines += [f"{n:<{width}}  {a:>12.6f}  {c:>8.4f}" for n, a, c in self.rows()]
        note = "(eq2 metrics negated: higher is better)" if self.spec.form == "eq2_minimize" else "(higher is better)"
        return "\n".join(lines + [note]) + "\n"


def evaluate_all(scores: Mapping[str, np.ndarray], test: Dataset, spec: ObjectiveSpec, propensity,
                 grid=None, seed: int = 0) -> Report:
    """Curves and AUCs for each named score vector, sorted by a-AUC (descending)."""
    results = []
    for name, s in scores.items():
        results.append(
            ModelResult(
                name=name,
                atetp=atetp_curve(s, test, spec, propensity, grid=grid, seed=seed),
                cost=cost_curve(s, test, spec.outcome("r"), spec.outcome("c"), propensity, seed=seed),
            )
        )
    results.sort(key=lambda r: -r.a_auc)
    return Report(spec=spec, results=results)


# ---------------------------------------------------------------------------
# SVG rendering


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def render_svg(curves: Mapping[str, EvaluationCurve], width: int = 480, height: int = 360) -> str:
    """Polyline plot of one or more curves of the same kind."""
    pad = 48
    allpts = np.vstack([c.points for c in curves.values()])
    x0, x1 = float(min(allpts[:, 0].min(), 0.0)), float(max(allpts[:, 0].max(), 1.0))
    y0, y1 = float(min(allpts[:, 1].min(), 0.0)), float(allpts[:, 1].max())
    if y1 <= y0:
        y1 = y0 + 1.0

    def sx(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def sy(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    kind = next(iter(curves.values())).kind
    xlabel, ylabel = ("coverage", "composite effect") if kind == "atetp" else ("cost (normalized)", "reward (normalized)")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{ylabel}</text>',
    ]
    if kind == "cost":
        parts.append(
            f'<line x1="{sx(0):.2f}" y1="{sy(0):.2f}" x2="{sx(1):.2f}" y2="{sy(1):.2f}" '
            'stroke="gray" stroke-dasharray="4 3"/>'
        )
    for i, (name, curve) in enumerate(curves.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = curve.points
        if len(pts) > 400:
            pts = pts[np.linspace(0, len(pts) - 1, 400).round().astype(int)]
        coords = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in pts)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        parts.append(
            f'<text x="{width - pad - 4}" y="{pad + 14 * i}" text-anchor="end" font-size="11" fill="{color}">'
            f"{name} (AUC {curve.auc:.4g})</text>"
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
