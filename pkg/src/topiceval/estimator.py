"""Supervised combination of metric scores via kernel support vector regression.

The fit solves the epsilon-insensitive dual problem with sequential pairwise
optimization: the regression problem over l rows is mapped onto 2l box-bounded
variables (one pair per row), and at each step the maximal-violating pair
under the KKT conditions is updated analytically, ties broken by lowest
index. Training stops when the maximal violation drops to ``tol`` (default
1e-3); exceeding the iteration cap raises SvrConvergenceError carrying the
final violation. The procedure is fully deterministic: same data and
hyperparameters give the same model.

Features are standardized (zero mean, unit sample std) with training-set
statistics before fitting; exactly constant columns are dropped with a
warning. Prediction is f(x) = sum_i coef_i * k(sv_i, x) + bias on the
standardized inputs, with columns aligned by feature name.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MODEL_FORMAT = "topiceval-svr"
MODEL_VERSION = 1

DEFAULT_C = 1.0
DEFAULT_EPSILON = 0.1
DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 200_000

_TAU = 1e-12  # floor for the pairwise second derivative


class SvrConvergenceError(RuntimeError):
    """Raised when the dual solver hits its iteration cap."""

    def __init__(self, iterations: int, kkt_violation: float):
        super().__init__(
            f"SMO failed to converge after {iterations} iterations "
            f"(KKT violation {kkt_violation:.3e})"
        )
        self.iterations = iterations
        self.kkt_violation = kkt_violation


@dataclass
class FeatureMatrix:
    """Per-topic metric features, optionally labeled with human ratings."""

    feature_names: list
    rows: np.ndarray
    labels: np.ndarray | None = None
    dataset_tags: list | None = None
    topic_ids: list | None = None

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2:
            raise ValueError("rows must be a 2-D matrix")
        n, m = self.rows.shape
        if m != len(self.feature_names):
            raise ValueError(f"{m} columns but {len(self.feature_names)} feature names")
        if len(set(self.feature_names)) != m:
            raise ValueError("feature names must be unique")
        if not np.all(np.isfinite(self.rows)):
            raise ValueError("feature matrix contains non-finite entries")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.float64)
            if self.labels.shape != (n,):
                raise ValueError("labels must align with rows")
            if not np.all(np.isfinite(self.labels)):
                raise ValueError("labels contain non-finite entries")
        if self.dataset_tags is None:
            self.dataset_tags = ["default"] * n
        if len(self.dataset_tags) != n:
            raise ValueError("dataset_tags must align with rows")
        if self.topic_ids is None:
            self.topic_ids = list(range(n))
        if len(self.topic_ids) != n:
            raise ValueError("topic_ids must align with rows")

    @property
    def num_rows(self) -> int:
        return self.rows.shape[0]

    def column(self, name: str) -> np.ndarray:
        return self.rows[:, self.feature_names.index(name)]

    def select(self, names) -> "FeatureMatrix":
        idx = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(
            feature_names=list(names),
            rows=self.rows[:, idx],
            labels=self.labels,
            dataset_tags=list(self.dataset_tags),
            topic_ids=list(self.topic_ids),
        )

    def drop_feature(self, name: str) -> "FeatureMatrix":
        if name not in self.feature_names:
            raise ValueError(f"unknown feature {name!r}")
        return self.select([n for n in self.feature_names if n != name])


def merge_features(tables) -> FeatureMatrix:
    """Stack tables row-wise; all must share the first table's feature names."""
    tables = list(tables)
    if not tables:
        raise ValueError("no feature tables to merge")
    names = tables[0].feature_names
    for t in tables[1:]:
        if set(t.feature_names) != set(names):
            raise ValueError(
                f"feature name mismatch: {sorted(names)} vs {sorted(t.feature_names)}"
            )
    aligned = [t.select(names) for t in tables]
    labels = None
    if all(t.labels is not None for t in aligned):
        labels = np.concatenate([t.labels for t in aligned])
    elif any(t.labels is not None for t in aligned):
        raise ValueError("cannot merge labeled with unlabeled tables")
    return FeatureMatrix(
        feature_names=list(names),
        rows=np.vstack([t.rows for t in aligned]),
        labels=labels,
        dataset_tags=[tag for t in aligned for tag in t.dataset_tags],
        topic_ids=[i for t in aligned for i in t.topic_ids],
    )


@dataclass
class Scaler:
    """Per-feature training mean and sample std; constant columns dropped."""

    feature_names: list
    means: np.ndarray
    stds: np.ndarray
    dropped: list = field(default_factory=list)

    def transform(self, features: FeatureMatrix) -> FeatureMatrix:
        aligned = features.select(self.feature_names)
        return FeatureMatrix(
            feature_names=list(self.feature_names),
            rows=(aligned.rows - self.means) / self.stds,
            labels=aligned.labels,
            dataset_tags=list(aligned.dataset_tags),
            topic_ids=list(aligned.topic_ids),
        )


def standardize(features: FeatureMatrix) -> tuple:
    """Zero-mean unit-std columns using sample statistics (divisor n-1)."""
    if features.num_rows < 2:
        raise ValueError("standardize needs at least 2 rows")
    kept, dropped = [], []
    for j, name in enumerate(features.feature_names):
        col = features.rows[:, j]
        if np.all(col == col[0]):
            dropped.append(name)
        else:
            kept.append(name)
    if not kept:
        raise ValueError("all feature columns are constant")
    if dropped:
        logger.warning("dropping constant feature columns: %s", ", ".join(dropped))
    sub = features.select(kept)
    means = sub.rows.mean(axis=0)
    stds = sub.rows.std(axis=0, ddof=1)
    scaler = Scaler(feature_names=kept, means=means, stds=stds, dropped=dropped)
    return scaler.transform(features), scaler


def rbf_kernel(x, y, gamma: float) -> float:
    """exp(-gamma * squared Euclidean distance)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"vector length mismatch: {x.shape} vs {y.shape}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    d = x - y
    return float(np.exp(-gamma * np.dot(d, d)))


def _kernel_matrix(a: np.ndarray, b: np.ndarray, kernel: str, gamma: float | None) -> np.ndarray:
    if kernel == "linear":
        return a @ b.T
    sq = (
        np.sum(a * a, axis=1)[:, None]
        + np.sum(b * b, axis=1)[None, :]
        - 2.0 * (a @ b.T)
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-gamma * sq)


def _solve_smo(kmat, y, c, epsilon, tol, max_iter):
    """Maximal-violating-pair SMO on the 2l-variable epsilon-SVR dual.

    Returns (coef, bias, iterations, final_violation) where coef[i] in [-C, C]
    is the difference of the two multipliers attached to row i.
    """
    l = len(y)
    ysign = np.concatenate([np.ones(l), -np.ones(l)])
    p = np.concatenate([epsilon - y, epsilon + y])
    q = np.tile(kmat, (2, 2)) * np.outer(ysign, ysign)
    qd = np.diag(q)
    theta = np.zeros(2 * l)
    grad = p.copy()

    violation = np.inf
    iterations = 0
    while iterations < max_iter:
        up = ((ysign > 0) & (theta < c)) | ((ysign < 0) & (theta > 0))
        low = ((ysign > 0) & (theta > 0)) | ((ysign < 0) & (theta < c))
        neg_yg = -ysign * grad
        i = int(np.argmax(np.where(up, neg_yg, -np.inf)))
        j = int(np.argmin(np.where(low, neg_yg, np.inf)))
        violation = neg_yg[i] - neg_yg[j]
        if violation <= tol:
            break
        iterations += 1

        old_i, old_j = theta[i], theta[j]
        if ysign[i] != ysign[j]:
            quad = qd[i] + qd[j] + 2.0 * q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = theta[i] - theta[j]
            theta[i] += delta
            theta[j] += delta
            if diff > 0:
                if theta[j] < 0:
                    theta[j] = 0.0
                    theta[i] = diff
            else:
                if theta[i] < 0:
                    theta[i] = 0.0
                    theta[j] = -diff
            if diff > 0:
                if theta[i] > c:
                    theta[i] = c
                    theta[j] = c - diff
            else:
                if theta[j] > c:
                    theta[j] = c
                    theta[i] = c + diff
        else:
            quad = qd[i] + qd[j] - 2.0 * q[i, j]
            if quad <= 0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            total = theta[i] + theta[j]
            theta[i] -= delta
            theta[j] += delta
            if total > c:
                if theta[i] > c:
                    theta[i] = c
                    theta[j] = total - c
            else:
                if theta[j] < 0:
                    theta[j] = 0.0
                    theta[i] = total
            if total > c:
                if theta[j] > c:
                    theta[j] = c
                    theta[i] = total - c
            else:
                if theta[i] < 0:
                    theta[i] = 0.0
                    theta[j] = total

        grad += q[:, i] * (theta[i] - old_i) + q[:, j] * (theta[j] - old_j)
    else:
        raise SvrConvergenceError(iterations, float(violation))

    # bias from the free variables, or the midpoint of the KKT bounds
    yg = ysign * grad
    free = (theta > 0) & (theta < c)
    if free.any():
        rho = yg[free].mean()
    else:
        upper = theta >= c
        lower = theta <= 0
        ub_mask = (upper & (ysign < 0)) | (lower & (ysign > 0))
        lb_mask = (upper & (ysign > 0)) | (lower & (ysign < 0))
        ub = yg[ub_mask].min() if ub_mask.any() else None
        lb = yg[lb_mask].max() if lb_mask.any() else None
        if ub is None:
            rho = 0.0 if lb is None else lb
        elif lb is None:
            rho = ub
        else:
            rho = (ub + lb) / 2.0
    coef = theta[:l] - theta[l:]
    return coef, float(-rho), iterations, float(max(violation, 0.0))


@dataclass
class SvrModel:
    """Fitted kernel expansion plus the scaler that standardizes inputs."""

    kernel: str
    gamma: float | None
    c: float
    epsilon: float
    scaler: Scaler
    support_vectors: np.ndarray  # standardized training rows with coef != 0
    dual_coef: np.ndarray
    bias: float
    iterations: int = 0
    kkt_violation: float = 0.0

    @property
    def feature_names(self) -> list:
        return self.scaler.feature_names

    def save(self, path) -> None:
        payload = {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "kernel": self.kernel,
            "gamma": self.gamma,
            "c": self.c,
            "epsilon": self.epsilon,
            "feature_names": self.scaler.feature_names,
            "dropped_features": self.scaler.dropped,
            "scaler_means": self.scaler.means.tolist(),
            "scaler_stds": self.scaler.stds.tolist(),
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "bias": self.bias,
            "iterations": self.iterations,
            "kkt_violation": self.kkt_violation,
        }
        Path(path).write_text(json.dumps(payload, indent=2), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SvrModel":
        payload = json.loads(Path(path).read_text("utf-8"))
        if payload.get("format") != MODEL_FORMAT:
            raise ValueError(f"{path}: not a model file")
        if payload.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: unsupported model version {payload.get('version')}")
        scaler = Scaler(
            feature_names=list(payload["feature_names"]),
            means=np.asarray(payload["scaler_means"], dtype=np.float64),
            stds=np.asarray(payload["scaler_stds"], dtype=np.float64),
            dropped=list(payload["dropped_features"]),
        )
        m = len(scaler.feature_names)
        return cls(
            kernel=payload["kernel"],
            gamma=payload["gamma"],
            c=payload["c"],
            epsilon=payload["epsilon"],
            scaler=scaler,
            support_vectors=np.asarray(payload["support_vectors"], dtype=np.float64).reshape(
                -1, m
            ),
            dual_coef=np.asarray(payload["dual_coef"], dtype=np.float64),
            bias=float(payload["bias"]),
            iterations=int(payload.get("iterations", 0)),
            kkt_violation=float(payload.get("kkt_violation", 0.0)),
        )


def train_svr(
    features: FeatureMatrix,
    c: float = DEFAULT_C,
    epsilon: float = DEFAULT_EPSILON,
    gamma: float | None = None,
    kernel: str = "rbf",
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> SvrModel:
    """Fit an epsilon-SVR on standardized features.

    ``gamma=None`` resolves to 1 / (number of kept features) for the rbf
    kernel.
    """
    if features.labels is None:
        raise ValueError("training requires labeled rows")
    if features.num_rows < 2:
        raise ValueError("training requires at least 2 rows")
    if c <= 0:
        raise ValueError(f"C must be positive, got {c}")
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if kernel not in ("rbf", "linear"):
        raise ValueError(f"unknown kernel {kernel!r}")

    standardized, scaler = standardize(features)
    if kernel == "rbf":
        gamma = 1.0 / len(scaler.feature_names) if gamma is None else float(gamma)
        if gamma <= 0:
            raise ValueError(f"gamma must be positive, got {gamma}")
    else:
        gamma = None

    x = standardized.rows
    y = standardized.labels
    kmat = _kernel_matrix(x, x, kernel, gamma)
    coef, bias, iterations, violation = _solve_smo(kmat, y, c, epsilon, tol, max_iter)

    sv_mask = coef != 0.0
    return SvrModel(
        kernel=kernel,
        gamma=gamma,
        c=c,
        epsilon=epsilon,
        scaler=scaler,
        support_vectors=x[sv_mask],
        dual_coef=coef[sv_mask],
        bias=bias,
        iterations=iterations,
        kkt_violation=violation,
    )


def predict(model: SvrModel, features: FeatureMatrix) -> np.ndarray:
    """Evaluate the kernel expansion; columns are aligned by feature name."""
    if features.num_rows == 0:
        raise ValueError("empty feature matrix")
    known = set(model.feature_names) | set(model.scaler.dropped)
    extra = [n for n in features.feature_names if n not in known]
    if extra:
        raise ValueError(f"unknown feature columns: {', '.join(sorted(extra))}")
    missing = [n for n in model.feature_names if n not in features.feature_names]
    if missing:
        raise ValueError(f"missing feature columns: {', '.join(sorted(missing))}")
    x = model.scaler.transform(features).rows
    if len(model.dual_coef) == 0:
        return np.full(x.shape[0], model.bias)
    kmat = _kernel_matrix(model.support_vectors, x, model.kernel, model.gamma)
    return model.dual_coef @ kmat + model.bias


@dataclass
class SplitEval:
    """One (train, test) cell of a cross-domain table."""

    train: str
    test: str
    r: float | None
    error: str | None = None


@dataclass
class CrossDomainResult:
    mode: str
    cells: list
    means: dict  # test tag -> mean Pearson r over its cells (None if all failed)


def _table_tag(table: FeatureMatrix) -> str:
    tags = set(table.dataset_tags)
    if len(tags) != 1:
        raise ValueError(f"each table must carry a single dataset tag, got {sorted(tags)}")
    return tags.pop()


def cross_domain_fit_eval(tables, mode: str, **svr_kwargs) -> CrossDomainResult:
    """Train on one dataset (or all but one merged) and test on another.

    ``one_to_one`` evaluates every ordered (train, test) pair; ``two_to_one``
    merges all tables but the test one. Each cell reports the Pearson r
    between predictions and the test labels; a failed fit is recorded in the
    cell without aborting the other splits.
    """
    from .evaluation import pearson_r

    tables = list(tables)
    if len(tables) < 2:
        raise ValueError("cross-domain evaluation needs at least 2 datasets")
    if mode not in ("one_to_one", "two_to_one"):
        raise ValueError(f"unknown mode {mode!r}")
    tags = [_table_tag(t) for t in tables]
    if len(set(tags)) != len(tags):
        raise ValueError(f"duplicate dataset tags: {tags}")
    for tag, t in zip(tags, tables):
        if t.labels is None:
            raise ValueError(f"dataset {tag!r} has no labels")

    splits = []
    if mode == "one_to_one":
        for i, train in enumerate(tables):
            for j, test in enumerate(tables):
                if i != j:
                    splits.append((tags[i], train, tags[j], test))
    else:
        for j, test in enumerate(tables):
            rest = [t for i, t in enumerate(tables) if i != j]
            rest_tags = [tags[i] for i in range(len(tables)) if i != j]
            splits.append(("+".join(rest_tags), merge_features(rest), tags[j], test))

    cells = []
    for train_tag, train, test_tag, test in splits:
        try:
            model = train_svr(train, **svr_kwargs)
            preds = predict(model, test)
            r = pearson_r(preds, test.labels)
            cells.append(SplitEval(train=train_tag, test=test_tag, r=float(r)))
        except (ValueError, RuntimeError) as exc:
            logger.warning("split %s -> %s failed: %s", train_tag, test_tag, exc)
            cells.append(SplitEval(train=train_tag, test=test_tag, r=None, error=str(exc)))

    means = {}
    for tag in tags:
        rs = [cell.r for cell in cells if cell.test == tag and cell.r is not None]
        means[tag] = float(np.mean(rs)) if rs else None
    return CrossDomainResult(mode=mode, cells=cells, means=means)


@dataclass
class GridSearchResult:
    best_c: float
    best_gamma: float | None
    best_mean_r: float
    table: list  # (c, gamma, mean r over held-out datasets) per candidate


def grid_search_svr(
    tables,
    c_grid=(0.1, 1.0, 10.0, 100.0),
    gamma_factors=(0.1, 1.0, 10.0),
    epsilon: float = DEFAULT_EPSILON,
    kernel: str = "rbf",
) -> GridSearchResult:
    """Leave-one-dataset-out hyperparameter selection.

    Each (C, gamma) candidate is scored by the mean Pearson r of two-to-one
    cross-domain evaluation; gamma candidates are multiples of the
    1/num_features default. This sits outside the standard reporting
    protocol: use it to pick hyperparameters, then rerun the protocol with
    them. Deterministic; ties keep the earlier candidate.
    """
    tables = list(tables)
    if len(tables) < 2:
        raise ValueError("grid search needs at least 2 datasets")
    num_features = len(tables[0].feature_names)
    if kernel == "rbf":
        gammas = [f / num_features for f in gamma_factors]
    else:
        gammas = [None]

    best = None
    table = []
    for c in c_grid:
        for gamma in gammas:
            result = cross_domain_fit_eval(
                tables, "two_to_one", c=c, epsilon=epsilon, gamma=gamma, kernel=kernel
            )
            rs = [cell.r for cell in result.cells if cell.r is not None]
            mean_r = float(np.mean(rs)) if rs else -np.inf
            table.append((c, gamma, mean_r))
            if best is None or mean_r > best[2]:
                best = (c, gamma, mean_r)
    return GridSearchResult(
        best_c=best[0], best_gamma=best[1], best_mean_r=best[2], table=table
    )


def write_features_csv(features: FeatureMatrix, path) -> None:
    """CSV interchange: dataset,topic_id,<feature...>[,rating]."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        header = ["dataset", "topic_id"] + list(features.feature_names)
        if features.labels is not None:
            header.append("rating")
        writer.writerow(header)
        for i in range(features.num_rows):
            row = [features.dataset_tags[i], features.topic_ids[i]]
            row += [repr(float(v)) for v in features.rows[i]]
            if features.labels is not None:
                row.append(repr(float(features.labels[i])))
            writer.writerow(row)


def read_features_csv(path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty features file") from None
        if header[:2] != ["dataset", "topic_id"]:
            raise ValueError(f"{path}: header must start with dataset,topic_id")
        has_labels = bool(header) and header[-1] == "rating"
        names = header[2 : -1 if has_labels else len(header)]
        if not names:
            raise ValueError(f"{path}: no feature columns")
        tags, ids, rows, labels = [], [], [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise ValueError(f"{path}:{lineno}: expected {len(header)} fields")
            tags.append(row[0])
            ids.append(int(row[1]))
            values = row[2 : 2 + len(names)]
            rows.append([float(v) for v in values])
            if has_labels:
                labels.append(float(row[-1]))
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return FeatureMatrix(
        feature_names=names,
        rows=np.array(rows, dtype=np.float64),
        labels=np.array(labels) if has_labels else None,
        dataset_tags=tags,
        topic_ids=ids,
    )
