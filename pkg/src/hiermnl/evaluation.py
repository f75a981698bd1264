"""Predictive metrics and model comparison tables.

Metrics are computed from the posterior predictive: the average (natural)
log-probability assigned to the true class, and the error rate of the
argmax classifier. Replication grids are summarized as a generator-by-
fitter table of means, with the best fitter flagged per generator column
and every other cell annotated with a paired t-test against that best
cell's per-replication values.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import stats

from hiermnl import models as _m
from hiermnl.hierarchy import ClassHierarchy
from hiermnl.inference import PosteriorChain, predict_matrix

__all__ = [
    "EvalResult",
    "TTestResult",
    "ComparisonTable",
    "evaluate",
    "evaluate_probs",
    "paired_t_test",
    "build_comparison",
    "table_to_csv",
    "format_table",
]


@dataclass(frozen=True)
class EvalResult:
    """Test-set performance: mean log-probability of the true class (nats
    per case, never positive) and argmax error rate."""

    avg_log_prob: float
    error_rate: float
    n_test: int

    def __post_init__(self):
        if self.n_test < 1:
            raise ValueError("empty test set")
        if self.avg_log_prob > 0:
            raise ValueError("average log-probability cannot be positive")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("error rate must lie in [0, 1]")


class TTestResult(NamedTuple):
    statistic: float
    pvalue: float


def evaluate_probs(probs: np.ndarray, h: ClassHierarchy, y) -> EvalResult:
    """Metrics from an explicit matrix of class probabilities.

    Ties in the argmax go to the lowest class index, matching classify.
    """
    probs = np.asarray(probs, dtype=float)
    y_idx = _m.encode_labels(h, y)
    n = y_idx.size
    if n == 0:
        raise ValueError("empty test set")
    if probs.shape != (n, h.n_classes):
        raise ValueError(f"probability matrix shape {probs.shape} does not match test set")
    with np.errstate(divide="ignore"):
        log_p = np.log(probs[np.arange(n), y_idx])
    avg = float(log_p.mean())
    errors = probs.argmax(axis=1) != y_idx
    return EvalResult(avg, float(errors.mean()), n)


def evaluate(chain: PosteriorChain, h: ClassHierarchy, test) -> EvalResult:
    """Posterior-predictive performance of a fitted chain on a test set."""
    if len(test.y) == 0:
        raise ValueError("empty test set")
    probs = predict_matrix(chain, h, test.X)
    return evaluate_probs(probs, h, test.y)


def paired_t_test(a, b) -> TTestResult:
    """Classic paired t-test on two equal-length per-replication vectors.

    Returns the t statistic of mean(a - b) and the two-sided p-value from
    the Student-t CDF with n-1 degrees of freedom. Identical vectors (or
    any zero-variance difference) are an error rather than t=0, since the
    test statistic is undefined there.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("need two equal-length 1-D vectors")
    n = a.size
    if n < 2:
        raise ValueError("need at least two replications")
    d = a - b
    sd = d.std(ddof=1)
    if sd == 0.0:
        raise ValueError("degenerate paired t-test: difference variance is zero")
    t = float(d.mean() / (sd / np.sqrt(n)))
    p = float(2.0 * stats.t.sf(abs(t), n - 1))
    return TTestResult(t, p)


@dataclass
class ComparisonTable:
    """Generator-by-fitter grid of replication means.

    ``avg_log_prob`` and ``error_rate`` are (n_fitters, n_generators)
    means; the ``*_reps`` arrays keep the per-replication values with a
    trailing replication axis. ``best_fitter[g]`` is the row index with
    the highest mean log-probability in generator column g, and
    ``p_vs_best`` holds each other cell's paired t-test p-value against
    that column's best cell (NaN on the best cell itself and wherever
    the test is degenerate).
    """

    generators: tuple
    fitters: tuple
    avg_log_prob: np.ndarray
    error_rate: np.ndarray
    log_prob_reps: np.ndarray
    error_reps: np.ndarray
    best_fitter: tuple
    p_vs_best: np.ndarray

    @property
    def n_replications(self) -> int:
        return self.log_prob_reps.shape[2]

    def diagonal_best(self) -> list[bool]:
        """Per generator column, whether the matching fitter won."""
        out = []
        for g, gen in enumerate(self.generators):
            out.append(
                gen in self.fitters and self.best_fitter[g] == self.fitters.index(gen)
            )
        return out


def build_comparison(results: dict) -> ComparisonTable:
    """Assemble a table from completed replications.

    ``results`` maps (generator, fitter) pairs to a sequence of
    EvalResult, one per replication. The grid must be complete (every
    generator crossed with every fitter) and every cell must hold the
    same number of replications.
    """
    if not results:
        raise ValueError("no results")
    generators: list = []
    fitters: list = []
    for gen, fitter in results:
        if gen not in generators:
            generators.append(gen)
        if fitter not in fitters:
            fitters.append(fitter)
    missing = [
        (g, f) for g in generators for f in fitters if (g, f) not in results
    ]
    if missing:
        raise ValueError(f"incomplete grid: missing cells {missing}")
    counts = {len(v) for v in results.values()}
    if len(counts) != 1:
        raise ValueError(f"unequal replication counts across cells: {sorted(counts)}")
    (n_reps,) = counts
    if n_reps == 0:
        raise ValueError("cells hold no replications")

    n_f, n_g = len(fitters), len(generators)
    lp = np.empty((n_f, n_g, n_reps))
    er = np.empty((n_f, n_g, n_reps))
    for (gen, fitter), cell in results.items():
        g = generators.index(gen)
        f = fitters.index(fitter)
        lp[f, g] = [r.avg_log_prob for r in cell]
        er[f, g] = [r.error_rate for r in cell]

    lp_mean = lp.mean(axis=2)
    er_mean = er.mean(axis=2)
    best = tuple(int(j) for j in lp_mean.argmax(axis=0))
    p_vs_best = np.full((n_f, n_g), np.nan)
    if n_reps >= 2:
        for g in range(n_g):
            for f in range(n_f):
                if f == best[g]:
                    continue
                try:
                    p_vs_best[f, g] = paired_t_test(lp[f, g], lp[best[g], g]).pvalue
                except ValueError:
                    pass  # degenerate cell pair stays NaN
    return ComparisonTable(
        tuple(generators),
        tuple(fitters),
        lp_mean,
        er_mean,
        lp,
        er,
        best,
        p_vs_best,
    )


def table_to_csv(table: ComparisonTable, path) -> None:
    """One row per cell: means, replication count, best flag, p-value."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "generator",
                "fitter",
                "avg_log_prob",
                "error_rate",
                "n_replications",
                "best_in_column",
                "p_vs_best",
            ]
        )
        for g, gen in enumerate(table.generators):
            for f, fitter in enumerate(table.fitters):
                p = table.p_vs_best[f, g]
                writer.writerow(
                    [
                        gen,
                        fitter,
                        repr(float(table.avg_log_prob[f, g])),
                        repr(float(table.error_rate[f, g])),
                        table.n_replications,
                        int(f == table.best_fitter[g]),
                        "" if np.isnan(p) else repr(float(p)),
                    ]
                )


def format_table(table: ComparisonTable) -> str:
    """Aligned text grid: fitters as rows, generators as columns, each
    cell showing mean log-probability and error percent (one decimal),
    with the best cell per column starred."""
    col_head = [f"data: {g}" for g in table.generators]
    width = max(16, *(len(hd) + 2 for hd in col_head))
    name_w = max(8, *(len(f) for f in table.fitters)) + 2
    lines = ["".ljust(name_w) + "".join(hd.rjust(width) for hd in col_head)]
    for f, fitter in enumerate(table.fitters):
        cells = []
        for g in range(len(table.generators)):
            star = "*" if f == table.best_fitter[g] else " "
            cell = (
                f"{table.avg_log_prob[f, g]:8.4f} "
                f"{100.0 * table.error_rate[f, g]:5.1f}%{star}"
            )
            cells.append(cell.rjust(width))
        lines.append(fitter.ljust(name_w) + "".join(cells))
    lines.append("")
    lines.append(
        f"{table.n_replications} replication(s) per cell; * marks the best "
        "mean log-probability in each column."
    )
    return "\n".join(lines)
