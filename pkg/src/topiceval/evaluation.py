"""Statistics against human judgments.

Human ratings arrive as CSV rows ``dataset,topic_id,r1,r2,...`` on a 4-point
scale (blank cells are missing ratings); the gold standard per topic is the
mean over annotators. Agreement uses Krippendorff's alpha with interval
weights (squared rating difference); correlation uses Pearson's r.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .estimator import FeatureMatrix, cross_domain_fit_eval

logger = logging.getLogger(__name__)

RATING_MIN = 1.0
RATING_MAX = 4.0


def pearson_r(x, y) -> float:
    """Product-moment correlation; constant input is an error."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("pearson_r needs two equal-length vectors")
    if len(x) < 2:
        raise ValueError("pearson_r needs at least 2 points")
    xd = x - x.mean()
    yd = y - y.mean()
    sxx = np.sum(xd * xd)
    syy = np.sum(yd * yd)
    if sxx == 0.0 or syy == 0.0:
        raise ValueError("correlation undefined for constant input")
    r = float(np.sum(xd * yd) / np.sqrt(sxx * syy))
    return min(1.0, max(-1.0, r))


@dataclass
class RatingRow:
    dataset: str
    topic_id: int
    ratings: list
    mean_rating: float


@dataclass
class RatingsTable:
    """Per-(dataset, topic) annotator ratings with their means."""

    rows: list

    def __post_init__(self):
        seen = set()
        for row in self.rows:
            key = (row.dataset, row.topic_id)
            if key in seen:
                raise ValueError(f"duplicate rating row for {key}")
            seen.add(key)
            if not row.ratings:
                raise ValueError(f"no ratings for {key}")
            for r in row.ratings:
                if not RATING_MIN <= r <= RATING_MAX:
                    raise ValueError(
                        f"rating {r} for {key} outside [{RATING_MIN}, {RATING_MAX}]"
                    )
            if abs(row.mean_rating - float(np.mean(row.ratings))) > 1e-12:
                raise ValueError(f"mean_rating inconsistent for {key}")

    @property
    def datasets(self) -> list:
        out = []
        for row in self.rows:
            if row.dataset not in out:
                out.append(row.dataset)
        return out

    def for_dataset(self, dataset: str) -> "RatingsTable":
        rows = [r for r in self.rows if r.dataset == dataset]
        if not rows:
            raise ValueError(f"no ratings for dataset {dataset!r}")
        return RatingsTable(rows=rows)

    def mean_by_topic(self, dataset: str) -> dict:
        return {r.topic_id: r.mean_rating for r in self.rows if r.dataset == dataset}


def read_ratings_csv(path) -> RatingsTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty ratings file") from None
        if header[:2] != ["dataset", "topic_id"]:
            raise ValueError(f"{path}: header must start with dataset,topic_id")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
            ratings = [float(v) for v in row[2:] if v.strip() != ""]
            if not ratings:
                raise ValueError(f"{path}:{lineno}: row has no ratings")
            rows.append(
                RatingRow(
                    dataset=row[0],
                    topic_id=int(row[1]),
                    ratings=ratings,
                    mean_rating=float(np.mean(ratings)),
                )
            )
    if not rows:
        raise ValueError(f"{path}: no rating rows")
    return RatingsTable(rows=rows)


def write_ratings_csv(table: RatingsTable, path) -> None:
    width = max(len(r.ratings) for r in table.rows)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "topic_id"] + [f"r{i + 1}" for i in range(width)])
        for row in table.rows:
            cells = [repr(float(v)) for v in row.ratings]
            cells += [""] * (width - len(cells))
            writer.writerow([row.dataset, row.topic_id] + cells)


def krippendorff_alpha_weighted(table: RatingsTable) -> float:
    """Krippendorff's alpha with interval weights delta(a, b) = (a - b)^2.

    Items with fewer than 2 ratings are unpairable and excluded; alpha is
    1 - D_o / D_e over the remaining pairable values. Raises if the table
    spans several datasets or no item is pairable.
    """
    if len(table.datasets) != 1:
        raise ValueError("agreement is computed per dataset; filter first")
    units = [row.ratings for row in table.rows if len(row.ratings) >= 2]
    if not units:
        raise ValueError("every item has fewer than 2 ratings; alpha undefined")

    n_pairable = sum(len(u) for u in units)
    d_obs = 0.0
    for values in units:
        v = np.asarray(values, dtype=np.float64)
        within = np.sum((v[:, None] - v[None, :]) ** 2)
        d_obs += within / (len(v) - 1)
    d_obs /= n_pairable

    pooled = np.concatenate([np.asarray(u, dtype=np.float64) for u in units])
    d_exp = np.sum((pooled[:, None] - pooled[None, :]) ** 2)
    d_exp /= n_pairable * (n_pairable - 1)

    if d_exp == 0.0:
        return 1.0
    return 1.0 - d_obs / d_exp


@dataclass
class AblationRow:
    removed_feature: str
    test: str
    r: float | None
    error: str | None = None


def ablate(tables, **svr_kwargs) -> list:
    """Drop one feature at a time and rerun two-to-one cross-domain fits.

    Returns one AblationRow per (removed feature, test dataset).
    """
    tables = list(tables)
    if not tables:
        raise ValueError("no feature tables")
    names = tables[0].feature_names
    if len(names) < 2:
        raise ValueError("ablation needs at least 2 features")
    rows = []
    for name in names:
        reduced = [t.drop_feature(name) for t in tables]
        result = cross_domain_fit_eval(reduced, mode="two_to_one", **svr_kwargs)
        for cell in result.cells:
            rows.append(
                AblationRow(removed_feature=name, test=cell.test, r=cell.r, error=cell.error)
            )
    return rows


@dataclass
class ScatterTable:
    """Per-topic (human mean, metric value) pairs plus the least-squares fit."""

    metric_name: str
    topic_ids: list
    human_means: np.ndarray
    values: np.ndarray
    slope: float
    intercept: float
    r: float


def export_scatter(
    topic_ids,
    values,
    ratings: RatingsTable,
    dataset: str | None = None,
    metric_name: str = "metric",
) -> ScatterTable:
    """Pair metric values with human means and fit value = slope*human + b."""
    if dataset is None:
        datasets = ratings.datasets
        if len(datasets) != 1:
            raise ValueError("ratings span several datasets; pass dataset=")
        dataset = datasets[0]
    means = ratings.mean_by_topic(dataset)
    topic_ids = [int(t) for t in topic_ids]
    values = np.asarray(values, dtype=np.float64)
    if len(topic_ids) != len(values):
        raise ValueError("topic_ids and values must align")
    missing = sorted(set(topic_ids) - set(means))
    if missing:
        raise ValueError(f"no rating for topics: {missing}")
    if len(set(topic_ids)) != len(topic_ids):
        raise ValueError("duplicate topic ids")

    human = np.array([means[t] for t in topic_ids], dtype=np.float64)
    r = pearson_r(human, values)
    hd = human - human.mean()
    slope = float(np.sum(hd * (values - values.mean())) / np.sum(hd * hd))
    intercept = float(values.mean() - slope * human.mean())
    return ScatterTable(
        metric_name=metric_name,
        topic_ids=topic_ids,
        human_means=human,
        values=values,
        slope=slope,
        intercept=intercept,
        r=r,
    )


SCATTER_HEADER = [
    "row_type", "topic_id", "human_mean", "metric_value", "slope", "intercept", "pearson_r",
]


def write_scatter_csv(table: ScatterTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SCATTER_HEADER)
        for t, h, v in zip(table.topic_ids, table.human_means, table.values):
            writer.writerow(["point", t, repr(float(h)), repr(float(v)), "", "", ""])
        writer.writerow(
            ["fit", "", "", "", repr(table.slope), repr(table.intercept), repr(table.r)]
        )


def read_scatter_csv(path, metric_name: str = "metric") -> ScatterTable:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != SCATTER_HEADER:
            raise ValueError(f"{path}: unexpected scatter header")
        ids, human, values = [], [], []
        fit = None
        for row in reader:
            if row[0] == "point":
                ids.append(int(row[1]))
                human.append(float(row[2]))
                values.append(float(row[3]))
            elif row[0] == "fit":
                fit = (float(row[4]), float(row[5]), float(row[6]))
            else:
                raise ValueError(f"{path}: unknown row type {row[0]!r}")
    if fit is None:
        raise ValueError(f"{path}: missing fit row")
    return ScatterTable(
        metric_name=metric_name,
        topic_ids=ids,
        human_means=np.asarray(human),
        values=np.asarray(values),
        slope=fit[0],
        intercept=fit[1],
        r=fit[2],
    )


@dataclass
class CorrelationTable:
    """Per-metric Pearson r against mean human ratings, per dataset."""

    metrics: list
    datasets: list
    values: dict   # (metric, dataset) -> r or None
    means: dict    # metric -> mean over datasets with a defined r


def correlation_table(scores: FeatureMatrix, ratings: RatingsTable) -> CorrelationTable:
    """Correlate every metric column with human means, per dataset.

    Every scored topic must be rated; a metric that is constant on some
    dataset gets an undefined (None) cell and a warning rather than failing
    the whole table.
    """
    datasets = []
    for tag in scores.dataset_tags:
        if tag not in datasets:
            datasets.append(tag)
    values = {}
    for dataset in datasets:
        idx = [i for i, tag in enumerate(scores.dataset_tags) if tag == dataset]
        ids = [scores.topic_ids[i] for i in idx]
        means = ratings.mean_by_topic(dataset)
        missing = sorted(set(ids) - set(means))
        if missing:
            raise ValueError(f"dataset {dataset!r}: no rating for topics {missing}")
        human = np.array([means[t] for t in ids])
        for metric in scores.feature_names:
            col = scores.column(metric)[idx]
            try:
                values[(metric, dataset)] = pearson_r(col, human)
            except ValueError as exc:
                logger.warning("metric %s on %s: %s", metric, dataset, exc)
                values[(metric, dataset)] = None
    means_out = {}
    for metric in scores.feature_names:
        rs = [values[(metric, d)] for d in datasets if values[(metric, d)] is not None]
        means_out[metric] = float(np.mean(rs)) if rs else None
    return CorrelationTable(
        metrics=list(scores.feature_names), datasets=datasets, values=values, means=means_out
    )
