"""Synthetic data from each model's prior, CSV ingestion, standardization.

A replication first draws hyperparameters from their Gamma priors, then
coefficients from the implied normals, then covariates from per-column
uniforms, and finally one label per case from the drawn model's class
probabilities. treeMNL labels are sampled successively, one branch
decision per internal node down the path; the flat models sample one
multinomial draw per case. The first ``n_train`` cases form the training
split and the remainder the test split.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from hiermnl.hierarchy import ClassHierarchy
from hiermnl import models as _models
from hiermnl.models import (
    CorMnlState,
    HierPriors,
    MnlPriors,
    MnlState,
    TreeMnlState,
)

__all__ = [
    "Dataset",
    "SimSpec",
    "CsvError",
    "generate_replication",
    "draw_prior_state",
    "sample_labels",
    "load_csv",
    "write_csv",
    "standardize",
    "subsample_splits",
]


class CsvError(ValueError):
    """CSV ingestion failure; carries 1-based row (file line) and column."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass
class Dataset:
    """A design matrix with class labels.

    ``labels`` is the declared class set (every y must belong to it).
    ``center`` and ``scale`` record the statistics used to standardize
    the features, when that has been done.
    """

    X: np.ndarray
    y: list[str]
    labels: tuple[str, ...]
    standardized: bool = False
    center: np.ndarray | None = None
    scale: np.ndarray | None = None
    feature_names: tuple[str, ...] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-D matrix")
        self.y = [str(v) for v in self.y]
        self.labels = tuple(str(v) for v in self.labels)
        if len(self.y) != self.X.shape[0]:
            raise ValueError(f"{len(self.y)} labels for {self.X.shape[0]} rows")
        declared = set(self.labels)
        for lab in self.y:
            if lab not in declared:
                raise ValueError(f"label {lab!r} not in the declared class set")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def take(self, indices) -> "Dataset":
        """Row subset, preserving metadata."""
        indices = np.asarray(indices)
        return replace(
            self,
            X=self.X[indices],
            y=[self.y[i] for i in indices],
        )


@dataclass(frozen=True)
class SimSpec:
    """Recipe for prior-drawn synthetic replications.

    ``x_low`` and ``x_high`` may be scalars or per-column sequences.
    ``priors`` must match the generator kind (MnlPriors for "mnl",
    HierPriors otherwise).
    """

    kind: str
    hierarchy: ClassHierarchy
    priors: object
    p: int
    n_total: int
    n_train: int
    x_low: float | tuple = -5.0
    x_high: float | tuple = 5.0
    replications: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in _models.MODEL_KINDS:
            raise ValueError(f"unknown generator kind {self.kind!r}")
        if not 0 < self.n_train < self.n_total:
            raise ValueError("need 0 < n_train < n_total")
        if self.p < 1:
            raise ValueError("need at least one covariate")
        if self.replications < 1:
            raise ValueError("need at least one replication")
        low = np.broadcast_to(np.asarray(self.x_low, dtype=float), (self.p,))
        high = np.broadcast_to(np.asarray(self.x_high, dtype=float), (self.p,))
        if np.any(low >= high):
            raise ValueError("x_low must be strictly below x_high")
        if self.kind == "mnl":
            if not isinstance(self.priors, MnlPriors):
                raise ValueError("generator 'mnl' needs MnlPriors")
        elif not isinstance(self.priors, HierPriors):
            raise ValueError(f"generator {self.kind!r} needs HierPriors")

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        low = np.broadcast_to(np.asarray(self.x_low, dtype=float), (self.p,)).copy()
        high = np.broadcast_to(np.asarray(self.x_high, dtype=float), (self.p,)).copy()
        return low, high


def draw_prior_state(kind: str, h: ClassHierarchy, p: int, priors, rng: np.random.Generator):
    """Draw a full parameter set from the model's prior.

    Order of draws is fixed (sds first, then intercepts, then
    coefficients) so a given generator state is reproducible.
    """
    ard = priors.ard
    sigma = None
    if ard is not None:
        sigma = np.array([ard.draw_tau(rng) for _ in range(p)])
    sig = sigma if sigma is not None else np.ones(p)

    if kind == "mnl":
        tau0 = priors.intercept.draw_tau(rng)
        tau = priors.coefficient.draw_tau(rng)
        alpha = rng.normal(0.0, tau0, size=h.n_classes)
        beta = rng.normal(size=(p, h.n_classes)) * (tau * sig)[:, None]
        return MnlState(alpha, beta, tau0, tau, sigma)
    if kind == "cormnl":
        tau0 = priors.intercept.draw_tau(rng)
        tau = np.array([g.draw_tau(rng) for g in priors.nodes])
        alpha = rng.normal(0.0, tau0, size=h.n_classes)
        node_of = np.array([br.parent for br in h.branches])
        phi = rng.normal(size=(h.n_branches, p)) * tau[node_of][:, None] * sig[None, :]
        return CorMnlState(alpha, phi, tau0, tau, sigma)
    if kind == "treemnl":
        tau0 = priors.intercept.draw_tau(rng)
        tau = np.array([g.draw_tau(rng) for g in priors.nodes])
        alpha = [rng.normal(0.0, tau0, size=h.n_children(m)) for m in range(h.n_internal)]
        beta = [
            rng.normal(size=(p, h.n_children(m))) * (tau[m] * sig)[:, None]
            for m in range(h.n_internal)
        ]
        return TreeMnlState(alpha, beta, tau0, tau, sigma)
    raise ValueError(f"unknown generator kind {kind!r}")


def _categorical_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row from each row's probability vector."""
    cum = np.cumsum(probs, axis=1)
    u = rng.uniform(size=probs.shape[0])
    idx = (u[:, None] > cum).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def sample_labels(state, h: ClassHierarchy, X: np.ndarray, rng: np.random.Generator) -> list[str]:
    """Draw one class label per row of X from the state's distribution.

    For the flat models this is a single multinomial draw per case. For
    treeMNL the branch decisions are sampled successively node by node,
    which is distributionally the same as drawing from the leaf
    probabilities but mirrors how that model factorizes.
    """
    n = X.shape[0]
    if isinstance(state, TreeMnlState):
        class_idx = np.full(n, -1, dtype=np.intp)
        at_node = [np.array([], dtype=np.intp) for _ in range(h.n_internal)]
        at_node[0] = np.arange(n)
        for m in range(h.n_internal):
            rows = at_node[m]
            if rows.size == 0:
                # Keep the draw sequence independent of occupancy.
                continue
            logits = state.alpha[m] + X[rows] @ state.beta[m]
            z = np.exp(logits - logits.max(axis=1, keepdims=True))
            probs = z / z.sum(axis=1, keepdims=True)
            slots = _categorical_rows(probs, rng)
            for k, ref in enumerate(h.children(m)):
                chosen = rows[slots == k]
                kind, target = ref
                if kind == "leaf":
                    class_idx[chosen] = target
                else:
                    at_node[target] = chosen
        assert np.all(class_idx >= 0)
    else:
        probs = _models.class_probs_matrix(state, h, X)
        class_idx = _categorical_rows(probs, rng)
    return [h.labels[j] for j in class_idx]


def generate_replication(spec: SimSpec, rng: np.random.Generator):
    """One synthetic replication: (train, test, generator state)."""
    h = spec.hierarchy
    state = draw_prior_state(spec.kind, h, spec.p, spec.priors, rng)
    low, high = spec.bounds()
    X = rng.uniform(low, high, size=(spec.n_total, spec.p))
    y = sample_labels(state, h, X, rng)
    full = Dataset(X, y, labels=h.labels)
    train = full.take(np.arange(spec.n_train))
    test = full.take(np.arange(spec.n_train, spec.n_total))
    return train, test, state


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------


def load_csv(path, label_column: str, feature_columns=None, classes=None) -> Dataset:
    """Read a dataset from a comma-separated file with a header row.

    ``feature_columns`` defaults to every non-label column in header
    order. When ``classes`` is given, any label outside it is an error;
    otherwise classes are collected in order of first appearance. Error
    positions are 1-based, counting the header as row 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvError("file is empty, expected a header row") from None
        header = [name.strip() for name in header]
        if label_column not in header:
            raise CsvError(f"label column {label_column!r} not in header {header}")
        if feature_columns is None:
            feature_columns = [name for name in header if name != label_column]
        missing = [name for name in feature_columns if name not in header]
        if missing:
            raise CsvError(f"feature columns {missing} not in header")
        label_pos = header.index(label_column)
        feature_pos = [header.index(name) for name in feature_columns]

        rows = []
        y = []
        declared = None if classes is None else set(str(c) for c in classes)
        seen: list[str] = []
        for line_no, record in enumerate(reader, start=2):
            if not record or (len(record) == 1 and record[0].strip() == ""):
                continue
            if len(record) != len(header):
                raise CsvError(
                    f"expected {len(header)} fields, found {len(record)}", row=line_no
                )
            label = record[label_pos].strip()
            if declared is not None and label not in declared:
                raise CsvError(
                    f"label {label!r} not in the declared class set",
                    row=line_no,
                    column=label_pos + 1,
                )
            if label not in seen:
                seen.append(label)
            values = []
            for pos in feature_pos:
                cell = record[pos].strip()
                try:
                    values.append(float(cell))
                except ValueError:
                    raise CsvError(
                        f"malformed numeric cell {cell!r}",
                        row=line_no,
                        column=pos + 1,
                    ) from None
            rows.append(values)
            y.append(label)

    X = np.array(rows, dtype=float) if rows else np.zeros((0, len(feature_pos)))
    label_set = tuple(str(c) for c in classes) if classes is not None else tuple(seen)
    return Dataset(
        X, y, labels=label_set, feature_names=tuple(feature_columns)
    )


def write_csv(data: Dataset, path, label_column: str = "label") -> None:
    """Write a dataset as CSV with the label in the last column."""
    names = data.feature_names or tuple(f"x{l + 1}" for l in range(data.p))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(names) + [label_column])
        for i in range(data.n):
            writer.writerow([repr(float(v)) for v in data.X[i]] + [data.y[i]])


# ---------------------------------------------------------------------------
# Standardization and subsampling
# ---------------------------------------------------------------------------


def standardize(train: Dataset, others=()) -> tuple[Dataset, list[Dataset]]:
    """Center and scale features to mean 0, sd 1 on the training split.

    The sd uses the unbiased n-1 convention, so a column (1, 2, 3) maps
    to (-1, 0, 1). Every other dataset is transformed with the training
    statistics, not its own. A zero-variance training column is an error.
    """
    if train.n < 2:
        raise ValueError("standardization needs at least two training rows")
    center = train.X.mean(axis=0)
    scale = train.X.std(axis=0, ddof=1)
    dead = np.flatnonzero(scale == 0.0)
    if dead.size:
        raise ValueError(f"zero-variance feature column(s) {dead.tolist()}")
    out_train = replace(
        train,
        X=(train.X - center) / scale,
        standardized=True,
        center=center,
        scale=scale,
    )
    out_others = [
        replace(
            d,
            X=(d.X - center) / scale,
            standardized=True,
            center=center,
            scale=scale,
        )
        for d in others
    ]
    return out_train, out_others


def subsample_splits(pool: Dataset, k: int, size: int, rng: np.random.Generator):
    """k pairwise-disjoint training sets of the given size, sampled without
    replacement; the untouched remainder is the shared test set.

    The remainder must be nonempty.
    """
    if k < 1 or size < 1:
        raise ValueError("k and size must be positive")
    if k * size >= pool.n:
        raise ValueError(
            f"{k} sets of {size} leave no test cases from a pool of {pool.n}"
        )
    perm = rng.permutation(pool.n)
    trains = [pool.take(perm[i * size : (i + 1) * size]) for i in range(k)]
    test = pool.take(perm[k * size :])
    return trains, test
